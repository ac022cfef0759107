"""Per-DE sketches: minhash signatures, numeric stats, solo embeddings.

Signatures use one 64-bit keyed base hash per token with ``num_hashes``
derived streams (seed-mixed), which is standard practice and vectorizes
well. Containment between two signatures is estimated by maximum
likelihood over the per-position events {minA==minB, minA<minB,
minB<minA} using the exact set cardinalities; for a true subset the
minA<minB count is structurally zero, so containment comes out exactly 1
regardless of cardinality skew.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EngineConfig
from .corpus import ColumnDE, Corpus, DEKind, TaskTag
from .errors import ArtifactError, EmptyQuerySet, EmptySet, IncompatibleSignatures

_U64 = np.uint64
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + _U64(0x9E3779B97F4A7C15)) & _MASK
    x = ((x ^ (x >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)) & _MASK
    x = ((x ^ (x >> _U64(27))) * _U64(0x94D049BB133111EB)) & _MASK
    return x ^ (x >> _U64(31))


def _token_base_hash(token: str, seed: int) -> int:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, key=struct.pack("<q", seed)
    ).digest()
    return int.from_bytes(digest, "little")


class _TokenHashCache:
    """Per-run cache of token base hashes (tokens repeat across DEs)."""

    def __init__(self, seed: int):
        self.seed = seed
        self._cache: dict[str, int] = {}

    def hashes(self, tokens: list[str]) -> np.ndarray:
        out = np.empty(len(tokens), dtype=_U64)
        cache = self._cache
        for i, t in enumerate(tokens):
            h = cache.get(t)
            if h is None:
                h = _token_base_hash(t, self.seed)
                cache[t] = h
            out[i] = h
        return out


@dataclass
class MinhashSignature:
    hashes: np.ndarray          # (num_hashes,) uint64 minima
    set_cardinality: int
    num_hashes: int
    seed: int

    def compatible_with(self, other: "MinhashSignature") -> bool:
        return self.num_hashes == other.num_hashes and self.seed == other.seed


def _stream_keys(num_hashes: int, seed: int) -> np.ndarray:
    return _splitmix64(_U64(seed) ^ np.arange(num_hashes, dtype=_U64))


def minhash_signature(
    token_set: set[str] | frozenset[str] | list[str],
    num_hashes: int,
    seed: int,
    cache: _TokenHashCache | None = None,
) -> MinhashSignature:
    tokens = sorted(set(token_set))
    if not tokens:
        raise EmptySet("signature of the empty set is undefined")
    if num_hashes < 1:
        raise ValueError("num_hashes must be >= 1")
    cache = cache or _TokenHashCache(seed)
    base = cache.hashes(tokens)                      # (T,)
    streams = _stream_keys(num_hashes, seed)         # (H,)
    # chunk tokens to bound the T x H intermediate
    minima = np.full(num_hashes, _MASK, dtype=_U64)
    step = max(1, 2_000_000 // num_hashes)
    for i in range(0, len(base), step):
        block = _splitmix64(base[i : i + step, None] ^ streams[None, :])
        np.minimum(minima, block.min(axis=0), out=minima)
    return MinhashSignature(minima, len(tokens), num_hashes, seed)


def _mle_candidates(a, b, n_eq, n_ab, n_ba):
    """Candidate intersection sizes for the trinomial MLE (vectorized).

    The stationary condition of
        L(I) = n_eq ln I + n_ab ln(b-I) + n_ba ln(a-I) - H ln(a+b-I)
    reduces to a quadratic in I (the cubic's leading terms cancel):
        A I^2 + B I + C = 0 with
        A = (a+b) n_eq + a n_ab + b n_ba
        B = -((a+b)^2 + ab) n_eq - a(a+b) n_ab - b(a+b) n_ba + ab H
        C = ab(a+b) n_eq
    Returns stacked candidates (..., 4): both boundaries plus both roots
    clamped into [0, min(a,b)].
    """
    h = n_eq + n_ab + n_ba
    qa = (a + b) * n_eq + a * n_ab + b * n_ba
    qb = -((a + b) ** 2 + a * b) * n_eq - a * (a + b) * n_ab - b * (a + b) * n_ba + a * b * h
    qc = a * b * (a + b) * n_eq
    i_max = np.minimum(a, b).astype(float)
    disc = np.maximum(qb * qb - 4.0 * qa * qc, 0.0)
    sq = np.sqrt(disc)
    denom = np.where(qa != 0, 2.0 * qa, 1.0)
    r1 = np.where(qa != 0, (-qb - sq) / denom, 0.0)
    r2 = np.where(qa != 0, (-qb + sq) / denom, 0.0)
    zeros = np.zeros_like(i_max)
    cands = np.stack([zeros, i_max, np.clip(r1, 0.0, i_max), np.clip(r2, 0.0, i_max)], axis=-1)
    return cands


def _loglik_at(i_val, a, b, n_eq, n_ab, n_ba):
    """Vectorized log-likelihood with the 0*ln(0)=0 convention."""
    def term(count, margin):
        safe = np.where(margin > 0, margin, 1.0)
        out = count * np.log(safe)
        return np.where((count > 0) & (margin <= 0), -np.inf, out)

    h = n_eq + n_ab + n_ba
    union = a + b - i_val
    ll = term(n_eq, i_val) + term(n_ab, b - i_val) + term(n_ba, a - i_val)
    return ll - h * np.log(np.maximum(union, 1e-300))


def _mle_containment(a, b, n_eq, n_ab, n_ba):
    """Vectorized containment MLE; all arguments broadcastable arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n_eq = np.asarray(n_eq, dtype=float)
    n_ab = np.asarray(n_ab, dtype=float)
    n_ba = np.asarray(n_ba, dtype=float)
    cands = _mle_candidates(a, b, n_eq, n_ab, n_ba)
    ll = _loglik_at(
        cands, a[..., None], b[..., None],
        n_eq[..., None], n_ab[..., None], n_ba[..., None],
    )
    best = np.take_along_axis(cands, np.argmax(ll, axis=-1)[..., None], axis=-1)[..., 0]
    return np.clip(best / a, 0.0, 1.0)


def estimate_containment(sig_a: MinhashSignature, sig_b: MinhashSignature) -> float:
    """MLE of |A∩B|/|A| from signature position comparisons."""
    if not sig_a.compatible_with(sig_b):
        raise IncompatibleSignatures(
            f"num_hashes/seed mismatch: ({sig_a.num_hashes},{sig_a.seed}) vs "
            f"({sig_b.num_hashes},{sig_b.seed})"
        )
    a, b = sig_a.set_cardinality, sig_b.set_cardinality
    if a <= 0 or b <= 0:
        raise IncompatibleSignatures("signatures must cover nonempty sets")
    n_eq = int(np.count_nonzero(sig_a.hashes == sig_b.hashes))
    n_ab = int(np.count_nonzero(sig_b.hashes < sig_a.hashes))   # min(B) smaller
    n_ba = int(np.count_nonzero(sig_a.hashes < sig_b.hashes))   # min(A) smaller
    return float(_mle_containment(a, b, n_eq, n_ab, n_ba))


def estimate_containment_bulk(
    query: MinhashSignature,
    hash_matrix: np.ndarray,
    cardinalities: np.ndarray,
) -> np.ndarray:
    """Containment of the query set inside each of N candidate sets.

    hash_matrix: (N, num_hashes) uint64; cardinalities: (N,).
    """
    if hash_matrix.shape[0] == 0:
        return np.zeros(0)
    q = query.hashes[None, :]
    n_eq = np.count_nonzero(hash_matrix == q, axis=1)
    n_ab = np.count_nonzero(hash_matrix < q, axis=1)
    n_ba = np.count_nonzero(hash_matrix > q, axis=1)
    a = np.full(hash_matrix.shape[0], query.set_cardinality, dtype=float)
    return _mle_containment(a, cardinalities.astype(float), n_eq, n_ab, n_ba)


def exact_containment(set_a: set[str] | frozenset[str], set_b: set[str] | frozenset[str]) -> float:
    """|A∩B| / |A| — the test oracle for every containment estimate."""
    if not set_a:
        raise EmptyQuerySet("containment from the empty set is undefined")
    return len(set(set_a) & set(set_b)) / len(set(set_a))


def exact_jaccard(set_a, set_b) -> float:
    sa, sb = set(set_a), set(set_b)
    union = sa | sb
    return len(sa & sb) / len(union) if union else 0.0


# ---------------------------------------------------------------------------
# embedding providers

class EmbeddingProvider:
    """Deterministic word -> vector lookup; returns None on miss."""

    dimension: int

    def lookup(self, word: str) -> np.ndarray | None:
        raise NotImplementedError

    def fingerprint(self) -> str:
        raise NotImplementedError


class HashEmbeddingProvider(EmbeddingProvider):
    """Offline fallback: per-word standard-normal vectors derived from a
    seeded hash of the word. Never misses."""

    def __init__(self, dimension: int = 100, seed: int = 0):
        self.dimension = dimension
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def lookup(self, word: str) -> np.ndarray:
        vec = self._cache.get(word)
        if vec is None:
            word_seed = _token_base_hash(word, self.seed ^ 0x5EED)
            rng = np.random.default_rng(word_seed)
            vec = rng.standard_normal(self.dimension)
            self._cache[word] = vec
        return vec

    def fingerprint(self) -> str:
        return f"hash:{self.dimension}:{self.seed}"


class WordVectorFileProvider(EmbeddingProvider):
    """Plain-text word vectors, one ``word v1 v2 ... vD`` per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._vectors: dict[str, np.ndarray] = {}
        dim = None
        with self.path.open() as fh:
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
                if dim is None:
                    dim = vec.size
                elif vec.size != dim:
                    raise ArtifactError(f"inconsistent vector width in {path}")
                self._vectors[parts[0]] = vec
        if dim is None:
            raise ArtifactError(f"no vectors found in {path}")
        self.dimension = dim

    def lookup(self, word: str) -> np.ndarray | None:
        return self._vectors.get(word)

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.path.read_bytes()).hexdigest()[:12]
        return f"file:{self.dimension}:{h}"


def projection_matrix(dim_in: int, dim_out: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim_in, dim_out)) / np.sqrt(dim_out)


def solo_embed(
    tokens,
    provider: EmbeddingProvider,
    projection: np.ndarray | None = None,
    pool_distinct: bool = True,
    out_dim: int = 100,
) -> tuple[np.ndarray, bool]:
    """Mean-pool token vectors, project to out_dim if needed, L2-normalize.

    Returns (vector, is_zero). Empty or all-miss bags give the zero vector
    with the flag set.
    """
    pool = sorted(set(tokens)) if pool_distinct else list(tokens)
    vecs = [v for v in (provider.lookup(t) for t in pool) if v is not None]
    if not vecs:
        return np.zeros(out_dim), True
    mean = np.mean(vecs, axis=0)
    if mean.size != out_dim:
        if projection is None or projection.shape != (mean.size, out_dim):
            raise ArtifactError(
                f"projection {None if projection is None else projection.shape} "
                f"cannot map {mean.size} -> {out_dim}"
            )
        mean = mean @ projection
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        return np.zeros(out_dim), True
    return mean / norm, False


# ---------------------------------------------------------------------------
# bundles and the profile store

@dataclass
class NumericStats:
    min: float
    max: float
    distinct_count: int
    value_count: int

    @property
    def domain_size(self) -> float:
        return self.max - self.min


@dataclass
class SoloEmbedding:
    content_vec: np.ndarray
    metadata_vec: np.ndarray
    content_zero: bool = False
    metadata_zero: bool = False


@dataclass
class SketchBundle:
    owner: str
    kind: DEKind
    name: str
    parent_table: str | None
    tags: tuple[str, ...]
    token_set: tuple[str, ...]                 # sorted distinct values/tokens
    content_counts: tuple[tuple[str, int], ...]  # BM25 term stream
    metadata_tokens: tuple[str, ...]           # sorted metadata term stream
    minhash: MinhashSignature | None
    numeric: NumericStats | None
    solo: SoloEmbedding
    value_count: int = 0
    distinct_count: int = 0


@dataclass
class ProfileStore:
    bundles: dict[str, SketchBundle] = field(default_factory=dict)
    tables: dict[str, dict] = field(default_factory=dict)
    num_hashes: int = 512
    seed: int = 0
    provider_fingerprint: str = ""
    projection_seed: int = 0
    config_fingerprint: str = ""

    def signature(self, de_id: str) -> MinhashSignature | None:
        bundle = self.bundles.get(de_id)
        return bundle.minhash if bundle else None

    def ids_of_kind(self, kind: DEKind) -> list[str]:
        return sorted(i for i, b in self.bundles.items() if b.kind == kind)


def _column_value_tokens(col: ColumnDE) -> list[str]:
    return sorted({v.lower() for v in col.non_empty})


def _column_content_terms(col: ColumnDE) -> Counter:
    from .text import content_tokens

    counts: Counter = Counter()
    for v in col.non_empty:
        counts.update(content_tokens(v))
    return counts


def _numeric_stats(col: ColumnDE) -> NumericStats:
    nums = []
    for v in col.non_empty:
        try:
            nums.append(float(v))
        except ValueError:
            continue
    if not nums:
        return NumericStats(0.0, 0.0, 0, 0)
    return NumericStats(min(nums), max(nums), len(set(nums)), len(nums))


def profile_corpus(
    corpus: Corpus,
    config: EngineConfig,
    provider: EmbeddingProvider | None = None,
    parallelism: int | None = None,
) -> ProfileStore:
    """Build a SketchBundle for every document and every tagged column;
    untagged columns get minimal bundles (no minhash, no embeddings)."""
    provider = provider or HashEmbeddingProvider(config.embedding_dim, config.seed)
    parallelism = parallelism or config.profile_parallelism
    projection = None
    if provider.dimension != config.embedding_dim:
        projection = projection_matrix(provider.dimension, config.embedding_dim, config.seed)
    cache = _TokenHashCache(config.seed)

    def embed(tokens) -> tuple[np.ndarray, bool]:
        return solo_embed(
            tokens, provider, projection,
            pool_distinct=config.pool_distinct, out_dim=config.embedding_dim,
        )

    def build_column(col_id: str) -> SketchBundle:
        col = corpus.columns[col_id]
        meta = tuple(corpus.column_metadata_tokens(col))
        tagged = bool(col.tags)
        values = _column_value_tokens(col)
        sig = None
        solo = SoloEmbedding(
            np.zeros(config.embedding_dim), np.zeros(config.embedding_dim), True, True
        )
        content_counts: tuple[tuple[str, int], ...] = ()
        if tagged:
            if values:
                sig = minhash_signature(values, config.num_hashes, config.seed, cache)
            content_counts = tuple(sorted(_column_content_terms(col).items()))
            cvec, czero = embed(values)
            mvec, mzero = embed(meta)
            solo = SoloEmbedding(cvec, mvec, czero, mzero)
        numeric = _numeric_stats(col) if TaskTag.NUMERIC_OVERLAP in col.tags else None
        return SketchBundle(
            owner=col.id,
            kind=DEKind.COLUMN,
            name=col.name,
            parent_table=col.parent_table,
            tags=tuple(sorted(t.value for t in col.tags)),
            token_set=tuple(values),
            content_counts=content_counts,
            metadata_tokens=meta,
            minhash=sig,
            numeric=numeric,
            solo=solo,
            value_count=col.value_count,
            distinct_count=col.distinct_count,
        )

    def build_document(doc_id: str) -> SketchBundle:
        doc = corpus.documents[doc_id]
        bag = corpus.bags[doc_id]
        tokens = sorted(bag.tokens)
        meta = tuple(corpus.document_metadata_tokens(doc))
        sig = (
            minhash_signature(tokens, config.num_hashes, config.seed, cache)
            if tokens else None
        )
        cvec, czero = embed(tokens)
        mvec, mzero = embed(meta)
        return SketchBundle(
            owner=doc.id,
            kind=DEKind.DOCUMENT,
            name=doc.title,
            parent_table=None,
            tags=(),
            token_set=tuple(tokens),
            content_counts=tuple(sorted(bag.tokens.items())),
            metadata_tokens=meta,
            minhash=sig,
            numeric=None,
            solo=SoloEmbedding(cvec, mvec, czero, mzero),
            value_count=bag.total,
            distinct_count=bag.distinct_count,
        )

    col_ids = sorted(corpus.columns)
    doc_ids = sorted(corpus.documents)
    store = ProfileStore(
        num_hashes=config.num_hashes,
        seed=config.seed,
        provider_fingerprint=provider.fingerprint(),
        projection_seed=config.seed,
        config_fingerprint=config.fingerprint(),
    )
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            col_bundles = list(pool.map(build_column, col_ids))
            doc_bundles = list(pool.map(build_document, doc_ids))
    else:
        col_bundles = [build_column(i) for i in col_ids]
        doc_bundles = [build_document(i) for i in doc_ids]
    for bundle in col_bundles + doc_bundles:
        store.bundles[bundle.owner] = bundle
    store.bundles = dict(sorted(store.bundles.items()))
    for tid in sorted(corpus.tables):
        t = corpus.tables[tid]
        store.tables[tid] = {
            "name": t.name,
            "column_ids": list(t.column_ids),
            "row_count": t.row_count,
        }
    return store


# ---------------------------------------------------------------------------
# store serialization: JSON header + packed binary arrays

_MAGIC = b"CLPROF1\n"


def save_profile_store(store: ProfileStore, path: str | Path) -> None:
    entries = []
    blobs: list[bytes] = []
    offset = 0

    def push(arr: np.ndarray) -> tuple[int, int]:
        nonlocal offset
        raw = arr.tobytes()
        blobs.append(raw)
        start = offset
        offset += len(raw)
        return start, len(raw)

    for de_id, b in store.bundles.items():
        entry = {
            "id": de_id,
            "kind": b.kind.value,
            "name": b.name,
            "parent_table": b.parent_table,
            "tags": list(b.tags),
            "token_set": list(b.token_set),
            "content_counts": [[t, c] for t, c in b.content_counts],
            "metadata_tokens": list(b.metadata_tokens),
            "value_count": b.value_count,
            "distinct_count": b.distinct_count,
            "content_zero": b.solo.content_zero,
            "metadata_zero": b.solo.metadata_zero,
            "content_span": push(b.solo.content_vec.astype(np.float64)),
            "metadata_span": push(b.solo.metadata_vec.astype(np.float64)),
        }
        if b.minhash is not None:
            entry["minhash_span"] = push(b.minhash.hashes)
            entry["set_cardinality"] = b.minhash.set_cardinality
        if b.numeric is not None:
            entry["numeric"] = {
                "min": b.numeric.min, "max": b.numeric.max,
                "distinct_count": b.numeric.distinct_count,
                "value_count": b.numeric.value_count,
            }
        entries.append(entry)

    header = {
        "version": 1,
        "num_hashes": store.num_hashes,
        "seed": store.seed,
        "provider_fingerprint": store.provider_fingerprint,
        "projection_seed": store.projection_seed,
        "config_fingerprint": store.config_fingerprint,
        "tables": store.tables,
        "entries": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def load_profile_store(path: str | Path, config: EngineConfig | None = None) -> ProfileStore:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ArtifactError(f"{path}: not a profile store")
    header_len = struct.unpack("<Q", data[len(_MAGIC): len(_MAGIC) + 8])[0]
    header_start = len(_MAGIC) + 8
    header = json.loads(data[header_start: header_start + header_len])
    if config is not None:
        if header["num_hashes"] != config.num_hashes or header["seed"] != config.seed:
            raise IncompatibleSignatures(
                f"profile store built with num_hashes={header['num_hashes']} "
                f"seed={header['seed']}; config expects {config.num_hashes}/{config.seed}"
            )
    blob_start = header_start + header_len

    def pull(span, dtype):
        start, length = span
        return np.frombuffer(data, dtype=dtype, count=length // np.dtype(dtype).itemsize,
                             offset=blob_start + start).copy()

    store = ProfileStore(
        num_hashes=header["num_hashes"],
        seed=header["seed"],
        provider_fingerprint=header["provider_fingerprint"],
        projection_seed=header["projection_seed"],
        config_fingerprint=header["config_fingerprint"],
        tables=header["tables"],
    )
    for e in header["entries"]:
        minhash = None
        if "minhash_span" in e:
            minhash = MinhashSignature(
                pull(e["minhash_span"], np.uint64),
                e["set_cardinality"], header["num_hashes"], header["seed"],
            )
        numeric = None
        if "numeric" in e:
            numeric = NumericStats(**e["numeric"])
        store.bundles[e["id"]] = SketchBundle(
            owner=e["id"],
            kind=DEKind(e["kind"]),
            name=e["name"],
            parent_table=e["parent_table"],
            tags=tuple(e["tags"]),
            token_set=tuple(e["token_set"]),
            content_counts=tuple((t, c) for t, c in e["content_counts"]),
            metadata_tokens=tuple(e["metadata_tokens"]),
            minhash=minhash,
            numeric=numeric,
            solo=SoloEmbedding(
                pull(e["content_span"], np.float64),
                pull(e["metadata_span"], np.float64),
                e["content_zero"],
                e["metadata_zero"],
            ),
            value_count=e["value_count"],
            distinct_count=e["distinct_count"],
        )
    return store
