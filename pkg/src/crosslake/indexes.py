"""Query-time structures: BM25 text index, cardinality-partitioned LSH
containment index, and a vector nearest-neighbor index.

All indexes are immutable after build; every query is pure and uses the
same total ordering (descending score, ascending DE id) so top-k is well
defined.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArtifactError, DimensionMismatch, IncompatibleSignatures
from .profiler import MinhashSignature, estimate_containment_bulk


@dataclass
class ScoredHit:
    de: str
    score: float
    signal: str


def rank_hits(scores: dict[str, float], signal: str, k: int | None = None) -> list[ScoredHit]:
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if k is not None:
        ordered = ordered[:k]
    return [ScoredHit(de, float(s), signal) for de, s in ordered]


# ---------------------------------------------------------------------------
# BM25 text index

@dataclass
class TextIndex:
    field: str                                   # "content" | "metadata"
    postings: dict[str, list[tuple[str, int]]]   # term -> [(de, tf)] sorted by de
    doc_lengths: dict[str, int]
    avg_doc_length: float
    n: int
    k1: float = 1.2
    b: float = 0.75

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.n - df + 0.5) / (df + 0.5))


def build_text_index(
    bags: dict[str, list[tuple[str, int]]],
    field_name: str,
    k1: float = 1.2,
    b: float = 0.75,
) -> TextIndex:
    """bags: de -> [(term, tf)]. Empty bags are indexed with length 0."""
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for de in sorted(bags):
        terms = bags[de]
        doc_lengths[de] = sum(tf for _, tf in terms)
        for term, tf in sorted(terms):
            postings.setdefault(term, []).append((de, tf))
    n = len(bags)
    total = sum(doc_lengths.values())
    avg = total / n if n else 0.0
    return TextIndex(
        field=field_name,
        postings=dict(sorted(postings.items())),
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        n=n,
        k1=k1,
        b=b,
    )


def text_search(index: TextIndex, query_tokens: list[str], k: int) -> list[ScoredHit]:
    if k < 1:
        raise ValueError("k must be >= 1")
    scores: dict[str, float] = {}
    k1, b, avg = index.k1, index.b, index.avg_doc_length
    for term in query_tokens:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for de, tf in plist:
            length = index.doc_lengths[de]
            norm = k1 * (1.0 - b + (b * length / avg if avg > 0 else 0.0))
            scores[de] = scores.get(de, 0.0) + idf * tf * (k1 + 1.0) / (tf + norm)
    return rank_hits(scores, f"BM25{index.field.capitalize()}", k)


# ---------------------------------------------------------------------------
# containment index (simplified LSH ensemble)

@dataclass
class _Partition:
    lo: int
    hi: int          # exclusive
    bands: int
    rows: int
    buckets: dict[tuple[int, bytes], list[str]] = field(default_factory=dict)
    members: list[str] = field(default_factory=list)


def _scurve_rows(jaccard_t: float, num_hashes: int, target: float) -> tuple[int, int]:
    """Largest row count whose banding still collides with probability >=
    target at the given Jaccard threshold."""
    best = 1
    for rows in range(1, min(num_hashes, 32) + 1):
        bands = num_hashes // rows
        if bands < 1:
            break
        p = 1.0 - (1.0 - jaccard_t ** rows) ** bands
        if p >= target:
            best = rows
    return best, num_hashes // best


@dataclass
class ContainmentIndex:
    num_hashes: int
    seed: int
    threshold: float
    partition_ratio: int
    partitions: list[_Partition] = field(default_factory=list)
    signatures: dict[str, MinhashSignature] = field(default_factory=dict)


def build_containment_index(
    signatures: dict[str, MinhashSignature],
    threshold: float = 0.3,
    partition_ratio: int = 4,
    target_collision: float = 0.9,
) -> ContainmentIndex:
    items = sorted(signatures.items())
    if not items:
        raise IncompatibleSignatures("cannot index zero signatures")
    first = items[0][1]
    for _, sig in items:
        if not sig.compatible_with(first):
            raise IncompatibleSignatures("signatures disagree on num_hashes/seed")
    num_hashes = first.num_hashes
    min_card = min(sig.set_cardinality for _, sig in items)
    index = ContainmentIndex(
        num_hashes=num_hashes,
        seed=first.seed,
        threshold=threshold,
        partition_ratio=partition_ratio,
        signatures=dict(items),
    )
    # geometric cardinality partitions [min*r^p, min*r^(p+1))
    by_part: dict[int, list[tuple[str, MinhashSignature]]] = {}
    for de, sig in items:
        p = int(math.log(sig.set_cardinality / min_card, partition_ratio)) if min_card else 0
        while min_card * partition_ratio ** (p + 1) <= sig.set_cardinality:
            p += 1
        while min_card * partition_ratio ** p > sig.set_cardinality:
            p -= 1
        by_part.setdefault(p, []).append((de, sig))
    for p in sorted(by_part):
        lo = int(min_card * partition_ratio ** p)
        hi = int(min_card * partition_ratio ** (p + 1))
        # pessimistic Jaccard at the containment threshold for a query at the
        # smallest indexed cardinality against this partition's upper bound
        j_t = threshold * min_card / (min_card + hi - threshold * min_card)
        j_t = max(j_t, 1e-6)
        rows, bands = _scurve_rows(j_t, num_hashes, target_collision)
        part = _Partition(lo=lo, hi=hi, bands=bands, rows=rows)
        for de, sig in by_part[p]:
            part.members.append(de)
            for band in range(bands):
                key = sig.hashes[band * rows : (band + 1) * rows].tobytes()
                part.buckets.setdefault((band, key), []).append(de)
        index.partitions.append(part)
    return index


def containment_query(
    index: ContainmentIndex,
    query_sig: MinhashSignature,
    mode: str,
    param: float,
) -> list[ScoredHit]:
    """mode "topk": param = k; mode "threshold": param = t. Candidates come
    from LSH buckets and are re-scored with estimate_containment."""
    sample = next(iter(index.signatures.values()))
    if not query_sig.compatible_with(sample):
        raise IncompatibleSignatures("query signature has different num_hashes/seed")
    candidates: set[str] = set()
    for part in index.partitions:
        for band in range(part.bands):
            key = query_sig.hashes[band * part.rows : (band + 1) * part.rows].tobytes()
            hit = part.buckets.get((band, key))
            if hit:
                candidates.update(hit)
    cand_ids = sorted(candidates)
    if cand_ids:
        matrix = np.stack([index.signatures[de].hashes for de in cand_ids])
        cards = np.array([index.signatures[de].set_cardinality for de in cand_ids])
        estimates = estimate_containment_bulk(query_sig, matrix, cards)
        scores = {de: float(s) for de, s in zip(cand_ids, estimates)}
    else:
        scores = {}
    if mode == "threshold":
        scores = {de: s for de, s in scores.items() if s >= param}
        return rank_hits(scores, "Containment")
    if mode == "topk":
        return rank_hits(scores, "Containment", int(param))
    raise ValueError(f"unknown containment query mode: {mode}")


# ---------------------------------------------------------------------------
# vector index

@dataclass
class VectorIndex:
    signal: str
    ids: list[str]                # ascending DE id
    matrix: np.ndarray            # (N, dim) float64, unit or zero rows
    backend: str = "exact"        # "exact" | "rhlsh"
    rh_seed: int = 0
    rh_hyperplanes: int = 16
    rh_tables: int = 8
    _sketch: np.ndarray | None = None   # (N, bits) uint8 sign bits


def build_vector_index(
    vectors: dict[str, np.ndarray],
    signal: str,
    backend: str = "exact",
    rh_hyperplanes: int = 16,
    rh_tables: int = 8,
    seed: int = 0,
) -> VectorIndex:
    ids = sorted(vectors)
    if ids:
        dim = vectors[ids[0]].size
        matrix = np.stack([vectors[i] for i in ids]).astype(np.float64)
    else:
        dim, matrix = 0, np.zeros((0, 0))
    index = VectorIndex(
        signal=signal, ids=ids, matrix=matrix, backend=backend,
        rh_seed=seed, rh_hyperplanes=rh_hyperplanes, rh_tables=rh_tables,
    )
    if backend == "rhlsh" and ids:
        planes = _rh_planes(dim, rh_hyperplanes * rh_tables, seed)
        index._sketch = (matrix @ planes.T > 0).astype(np.uint8)
    return index


def _rh_planes(dim: int, n_planes: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_planes, dim))


def vector_query(index: VectorIndex, q_vec: np.ndarray, k: int) -> list[ScoredHit]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.ids:
        return []
    if q_vec.size != index.matrix.shape[1]:
        raise DimensionMismatch(
            f"query dim {q_vec.size} vs index dim {index.matrix.shape[1]}"
        )
    if np.linalg.norm(q_vec) < 1e-12:
        return []
    if index.backend == "rhlsh" and index._sketch is not None:
        planes = _rh_planes(index.matrix.shape[1], index.rh_hyperplanes * index.rh_tables,
                            index.rh_seed)
        q_bits = (planes @ q_vec > 0).astype(np.uint8)
        hamming = np.count_nonzero(index._sketch != q_bits[None, :], axis=1)
        n = len(index.ids)
        n_cand = min(n, max(8 * k, math.ceil(n * 0.4)))
        cand = np.argsort(hamming, kind="stable")[:n_cand]
        scores = index.matrix[cand] @ q_vec
        pairs = {index.ids[int(i)]: float(s) for i, s in zip(cand, scores)}
        return rank_hits(pairs, index.signal, k)
    scores = index.matrix @ q_vec
    order = np.argsort(-scores, kind="stable")[:k]   # ids ascending => stable ties
    return [ScoredHit(index.ids[int(i)], float(scores[int(i)]), index.signal) for i in order]


# ---------------------------------------------------------------------------
# serialization

def _write_blob(path: Path, header: dict, arrays: list[np.ndarray]) -> None:
    spans = []
    offset = 0
    blobs = []
    for arr in arrays:
        raw = arr.tobytes()
        spans.append([offset, len(raw), str(arr.dtype), list(arr.shape)])
        offset += len(raw)
        blobs.append(raw)
    header = dict(header)
    header["spans"] = spans
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with path.open("wb") as fh:
        fh.write(b"CLIDX1\n")
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def _read_blob(path: Path) -> tuple[dict, list[np.ndarray]]:
    data = path.read_bytes()
    magic = b"CLIDX1\n"
    if not data.startswith(magic):
        raise ArtifactError(f"{path}: not an index file")
    hlen = struct.unpack("<Q", data[len(magic): len(magic) + 8])[0]
    start = len(magic) + 8
    header = json.loads(data[start: start + hlen])
    blob_start = start + hlen
    arrays = []
    for offset, length, dtype, shape in header["spans"]:
        arr = np.frombuffer(
            data, dtype=np.dtype(dtype),
            count=length // np.dtype(dtype).itemsize,
            offset=blob_start + offset,
        ).reshape(shape).copy()
        arrays.append(arr)
    return header, arrays


def save_text_index(index: TextIndex, path: str | Path) -> None:
    header = {
        "type": "text",
        "field": index.field,
        "k1": index.k1,
        "b": index.b,
        "n": index.n,
        "avg_doc_length": index.avg_doc_length,
        "doc_lengths": index.doc_lengths,
        "postings": {t: p for t, p in index.postings.items()},
    }
    _write_blob(Path(path), header, [])


def load_text_index(path: str | Path) -> TextIndex:
    header, _ = _read_blob(Path(path))
    return TextIndex(
        field=header["field"],
        postings={t: [(de, tf) for de, tf in p] for t, p in header["postings"].items()},
        doc_lengths=header["doc_lengths"],
        avg_doc_length=header["avg_doc_length"],
        n=header["n"],
        k1=header["k1"],
        b=header["b"],
    )


def save_containment_index(index: ContainmentIndex, path: str | Path) -> None:
    ids = sorted(index.signatures)
    sig_matrix = np.stack([index.signatures[i].hashes for i in ids]) if ids else np.zeros((0, 0), dtype=np.uint64)
    header = {
        "type": "containment",
        "num_hashes": index.num_hashes,
        "seed": index.seed,
        "threshold": index.threshold,
        "partition_ratio": index.partition_ratio,
        "ids": ids,
        "cardinalities": [index.signatures[i].set_cardinality for i in ids],
    }
    _write_blob(Path(path), header, [sig_matrix])


def load_containment_index(path: str | Path) -> ContainmentIndex:
    header, arrays = _read_blob(Path(path))
    sig_matrix = arrays[0]
    signatures = {
        de: MinhashSignature(sig_matrix[i], header["cardinalities"][i],
                             header["num_hashes"], header["seed"])
        for i, de in enumerate(header["ids"])
    }
    return build_containment_index(
        signatures,
        threshold=header["threshold"],
        partition_ratio=header["partition_ratio"],
    )


def save_vector_index(index: VectorIndex, path: str | Path) -> None:
    header = {
        "type": "vector",
        "signal": index.signal,
        "backend": index.backend,
        "rh_seed": index.rh_seed,
        "rh_hyperplanes": index.rh_hyperplanes,
        "rh_tables": index.rh_tables,
        "ids": index.ids,
    }
    _write_blob(Path(path), header, [index.matrix])


def load_vector_index(path: str | Path) -> VectorIndex:
    header, arrays = _read_blob(Path(path))
    vectors = {de: arrays[0][i] for i, de in enumerate(header["ids"])}
    return build_vector_index(
        vectors, header["signal"], backend=header["backend"],
        rh_hyperplanes=header["rh_hyperplanes"], rh_tables=header["rh_tables"],
        seed=header["rh_seed"],
    )


def file_fingerprint(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
