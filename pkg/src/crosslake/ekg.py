"""Enterprise knowledge graph: relationship scoring and materialization.

Relations covered: document-to-column/table links through the joint (or
solo) embedding space, syntactic joins through value containment, PK-FK
discovery through containment + uniqueness + name gates, and table
unionability through a per-column ensemble score fed into a
maximum-weight bipartite matching.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import EngineConfig
from .corpus import DEKind
from .errors import UnknownDE
from .indexes import ContainmentIndex, VectorIndex, containment_query, vector_query
from .matching import MatchingResult, max_bipartite_matching
from .profiler import NumericStats, ProfileStore, estimate_containment_bulk
from .text import split_identifier

logger = logging.getLogger(__name__)

RELATIONS = (
    "DocToColumn", "DocToTable", "SyntacticJoin", "PkFk", "Unionable",
    "NameSim", "NumericSim", "SemanticSim",
)


@dataclass
class EKGEdge:
    src: str
    dst: str
    relation: str
    weight: float
    breakdown: dict[str, float]


@dataclass
class EdgePolicy:
    """Per-relation admission rule: ("topk", k) or ("threshold", eps)."""

    modes: dict[str, tuple[str, float]] = field(default_factory=dict)

    @classmethod
    def default(cls, config: EngineConfig) -> "EdgePolicy":
        eps = config.edge_epsilon
        return cls(
            modes={
                "DocToColumn": ("topk", config.doc_to_column_topk),
                "DocToTable": ("topk", config.doc_to_table_topk),
                "SyntacticJoin": ("threshold", eps),
                "PkFk": ("threshold", eps),
                "Unionable": ("threshold", eps),
                "NameSim": ("threshold", eps),
                "NumericSim": ("threshold", eps),
                "SemanticSim": ("threshold", eps),
            }
        )

    def admit(self, relation: str, ranked: list[EKGEdge]) -> list[EKGEdge]:
        mode, param = self.modes.get(relation, ("threshold", 0.5))
        if mode == "topk":
            return ranked[: int(param)]
        return [e for e in ranked if e.weight >= param]


# ---------------------------------------------------------------------------
# pairwise signals

@lru_cache(maxsize=262144)
def _name_features(name: str) -> frozenset[str]:
    tokens = split_identifier(name)
    normalized = "".join(ch for ch in name.lower() if ch.isalnum())
    grams = (
        {normalized[i : i + 3] for i in range(len(normalized) - 2)}
        if len(normalized) >= 3
        else ({normalized} if normalized else set())
    )
    return frozenset({f"t:{t}" for t in tokens} | {f"g:{g}" for g in grams})


@lru_cache(maxsize=1_048_576)
def name_similarity(name_a: str, name_b: str) -> float:
    """Jaccard over identifier tokens plus character 3-grams."""
    if not name_a or not name_b:
        return 0.0
    fa, fb = _name_features(name_a), _name_features(name_b)
    union = fa | fb
    return len(fa & fb) / len(union) if union else 0.0


def numeric_overlap(stats_a: NumericStats, stats_b: NumericStats) -> float:
    """Interval intersection over union of [min, max] ranges."""
    a_point = stats_a.min == stats_a.max
    b_point = stats_b.min == stats_b.max
    if a_point and b_point:
        return 1.0 if stats_a.min == stats_b.min else 0.0
    lo = max(stats_a.min, stats_b.min)
    hi = min(stats_a.max, stats_b.max)
    inter = max(0.0, hi - lo)
    union = max(stats_a.max, stats_b.max) - min(stats_a.min, stats_b.min)
    return inter / union if union > 0 else 0.0


@dataclass
class ColumnPairScores:
    name_sim: float | None = None
    containment_fwd: float | None = None
    containment_rev: float | None = None
    numeric_sim: float | None = None
    semantic_sim: float | None = None

    def present(self) -> dict[str, float]:
        out = {}
        if self.name_sim is not None:
            out["name"] = self.name_sim
        if self.containment_fwd is not None or self.containment_rev is not None:
            out["containment"] = max(
                self.containment_fwd or 0.0, self.containment_rev or 0.0
            )
        if self.numeric_sim is not None:
            out["numeric"] = self.numeric_sim
        if self.semantic_sim is not None:
            out["semantic"] = self.semantic_sim
        return out


def combine_scores(present: dict[str, float], weights: dict[str, float] | None = None) -> float:
    if not present:
        return 0.0
    if weights:
        weighted = [(present[k], weights.get(k, 1.0)) for k in present]
        total = sum(w for _, w in weighted)
        return sum(v * w for v, w in weighted) / total if total else 0.0
    return sum(present.values()) / len(present)


# ---------------------------------------------------------------------------
# vectorized ensemble scorer over the profiled columns

class EnsembleScorer:
    """Precomputed arrays for scoring one column against every other."""

    def __init__(self, store: ProfileStore, config: EngineConfig):
        self.store = store
        self.config = config
        self.col_ids = [
            c for c in store.ids_of_kind(DEKind.COLUMN) if store.bundles[c].tags
        ]
        self.pos = {c: i for i, c in enumerate(self.col_ids)}
        n = len(self.col_ids)
        dim = config.embedding_dim
        self.content = np.zeros((n, dim))
        self.content_ok = np.zeros(n, dtype=bool)
        self.sig_matrix = np.zeros((n, config.num_hashes), dtype=np.uint64)
        self.sig_ok = np.zeros(n, dtype=bool)
        self.cards = np.zeros(n)
        self.numeric_lo = np.zeros(n)
        self.numeric_hi = np.zeros(n)
        self.numeric_ok = np.zeros(n, dtype=bool)
        self.names: list[str] = []
        self.parents: list[str] = []
        for i, c in enumerate(self.col_ids):
            b = store.bundles[c]
            self.names.append(b.name)
            self.parents.append(b.parent_table or "")
            if not b.solo.content_zero:
                self.content[i] = b.solo.content_vec
                self.content_ok[i] = True
            if b.minhash is not None:
                self.sig_matrix[i] = b.minhash.hashes
                self.sig_ok[i] = True
                self.cards[i] = b.minhash.set_cardinality
            if b.numeric is not None and b.numeric.value_count > 0:
                self.numeric_lo[i] = b.numeric.min
                self.numeric_hi[i] = b.numeric.max
                self.numeric_ok[i] = True

    def pair_scores(self, col_a: str, col_b: str) -> ColumnPairScores:
        ia, ib = self.pos.get(col_a), self.pos.get(col_b)
        if ia is None or ib is None:
            raise UnknownDE(f"column not profiled: {col_a if ia is None else col_b}")
        scores = ColumnPairScores()
        scores.name_sim = name_similarity(self.names[ia], self.names[ib])
        if self.sig_ok[ia] and self.sig_ok[ib]:
            ba = self.store.bundles[col_a].minhash
            bb = self.store.bundles[col_b].minhash
            from .profiler import estimate_containment
            scores.containment_fwd = estimate_containment(ba, bb)
            scores.containment_rev = estimate_containment(bb, ba)
        if self.numeric_ok[ia] and self.numeric_ok[ib]:
            scores.numeric_sim = numeric_overlap(
                self.store.bundles[col_a].numeric, self.store.bundles[col_b].numeric
            )
        if self.content_ok[ia] and self.content_ok[ib]:
            cos = float(self.content[ia] @ self.content[ib])
            scores.semantic_sim = (cos + 1.0) / 2.0
        return scores

    def scores_against_all(self, col_a: str) -> np.ndarray:
        """Combined ensemble score of col_a versus every profiled column."""
        ia = self.pos.get(col_a)
        if ia is None:
            raise UnknownDE(f"column not profiled: {col_a}")
        n = len(self.col_ids)
        bundle = self.store.bundles[col_a]
        name_scores = np.array(
            [name_similarity(self.names[ia], self.names[j]) for j in range(n)]
        )
        present_count = np.ones(n)     # name always present
        total = name_scores.copy()
        if self.sig_ok[ia]:
            mask = self.sig_ok
            fwd = np.zeros(n)
            rev = np.zeros(n)
            sub = self.sig_matrix[mask]
            cards = self.cards[mask]
            fwd[mask] = estimate_containment_bulk(bundle.minhash, sub, cards)
            rev[mask] = _reverse_containment_bulk(bundle.minhash, sub, cards)
            contain = np.maximum(fwd, rev)
            total += np.where(mask, contain, 0.0)
            present_count += mask
        if self.numeric_ok[ia]:
            mask = self.numeric_ok
            lo = np.maximum(self.numeric_lo, self.numeric_lo[ia])
            hi = np.minimum(self.numeric_hi, self.numeric_hi[ia])
            inter = np.maximum(0.0, hi - lo)
            union = np.maximum(self.numeric_hi, self.numeric_hi[ia]) - np.minimum(
                self.numeric_lo, self.numeric_lo[ia]
            )
            both_points = (self.numeric_lo == self.numeric_hi) & (
                self.numeric_lo[ia] == self.numeric_hi[ia]
            )
            overlap = np.where(
                both_points,
                (self.numeric_lo == self.numeric_lo[ia]).astype(float),
                np.where(union > 0, inter / union, 0.0),
            )
            total += np.where(mask, overlap, 0.0)
            present_count += mask
        if self.content_ok[ia]:
            mask = self.content_ok
            cos = self.content @ self.content[ia]
            total += np.where(mask, (cos + 1.0) / 2.0, 0.0)
            present_count += mask
        return total / present_count


def _reverse_containment_bulk(query, hash_matrix, cardinalities) -> np.ndarray:
    """Containment of each candidate inside the query set."""
    from .profiler import _mle_containment

    q = query.hashes[None, :]
    n_eq = np.count_nonzero(hash_matrix == q, axis=1)
    n_ab = np.count_nonzero(hash_matrix > q, axis=1)    # min(query) smaller
    n_ba = np.count_nonzero(hash_matrix < q, axis=1)
    a = cardinalities.astype(float)
    b = np.full(hash_matrix.shape[0], query.set_cardinality, dtype=float)
    return _mle_containment(a, b, n_eq, n_ab, n_ba)


# ---------------------------------------------------------------------------
# relation builders

def doc_to_table(
    doc_id: str,
    k: int,
    index: VectorIndex,
    query_vec: np.ndarray,
    store: ProfileStore,
    config: EngineConfig,
    signal: str = "JointSemantic",
) -> tuple[list[EKGEdge], list[EKGEdge]]:
    """Rank tables for a document by the best of its columns' scores.

    Returns (table edges, column edges) ranked and truncated to k tables.
    """
    if np.linalg.norm(query_vec) < 1e-12:
        logger.warning("doc %s has a zero embedding; empty cross-modal result", doc_id)
        return [], []
    col_hits = vector_query(index, query_vec, config.doc_to_table_col_probe)
    col_edges = []
    table_best: dict[str, tuple[float, str]] = {}
    for hit in col_hits:
        bundle = store.bundles.get(hit.de)
        if bundle is None or bundle.kind != DEKind.COLUMN:
            continue
        col_edges.append(
            EKGEdge(doc_id, hit.de, "DocToColumn", hit.score, {signal: hit.score})
        )
        parent = bundle.parent_table or ""
        prev = table_best.get(parent)
        if prev is None or (hit.score, hit.de) > prev:
            table_best[parent] = (hit.score, hit.de)
    if config.doc_table_combiner == "sum_top3":
        sums: dict[str, list[float]] = {}
        for hit in col_hits:
            bundle = store.bundles.get(hit.de)
            if bundle is None or bundle.kind != DEKind.COLUMN:
                continue
            sums.setdefault(bundle.parent_table or "", []).append(hit.score)
        table_scores = {
            t: float(np.mean(sorted(s, reverse=True)[:3])) for t, s in sums.items()
        }
    else:
        table_scores = {t: s for t, (s, _) in table_best.items()}
    ranked = sorted(table_scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    table_edges = [
        EKGEdge(doc_id, t, "DocToTable", float(s), {signal: float(s)})
        for t, s in ranked
    ]
    return table_edges, col_edges


def syntactic_joins(
    col_id: str,
    k: int,
    index: ContainmentIndex,
    store: ProfileStore,
) -> list[EKGEdge]:
    """Joinable columns by two-directional containment, same table excluded."""
    bundle = store.bundles.get(col_id)
    if bundle is None:
        raise UnknownDE(col_id)
    if bundle.minhash is None:
        return []
    probe = max(4 * k + 16, 32)
    hits = containment_query(index, bundle.minhash, "topk", probe)
    scored: dict[str, dict[str, float]] = {}
    for h in hits:
        other = store.bundles.get(h.de)
        if other is None or h.de == col_id:
            continue
        if other.parent_table == bundle.parent_table:
            continue
        if other.minhash is None:
            continue
        from .profiler import estimate_containment
        fwd = h.score
        rev = estimate_containment(other.minhash, bundle.minhash)
        scored[h.de] = {
            "containment_fwd": fwd,
            "containment_rev": rev,
        }
    edges = [
        EKGEdge(col_id, de, "SyntacticJoin", max(s["containment_fwd"], s["containment_rev"]), s)
        for de, s in scored.items()
    ]
    edges.sort(key=lambda e: (-e.weight, e.dst))
    return edges[:k]


def discover_pkfk(
    store: ProfileStore,
    index: ContainmentIndex,
    config: EngineConfig,
) -> list[EKGEdge]:
    """Directed FK -> PK edges passing containment, uniqueness and name
    gates; numeric pairs additionally gate on range overlap."""
    edges: list[EKGEdge] = []
    candidates = [
        c for c in store.ids_of_kind(DEKind.COLUMN)
        if "PkFkCandidate" in store.bundles[c].tags and store.bundles[c].minhash is not None
    ]
    candidate_set = set(candidates)
    for fk in candidates:
        fb = store.bundles[fk]
        hits = containment_query(index, fb.minhash, "threshold", config.pkfk_containment_min)
        for h in hits:
            if h.de == fk or h.de not in candidate_set:
                continue
            pb = store.bundles[h.de]
            if pb.parent_table == fb.parent_table:
                continue
            if pb.value_count == 0:
                continue
            uniqueness = pb.distinct_count / pb.value_count
            if uniqueness < config.pk_uniqueness:
                continue
            nsim = name_similarity(fb.name, pb.name)
            if nsim < config.pkfk_name_min:
                continue
            breakdown = {
                "containment": h.score,
                "pk_uniqueness": uniqueness,
                "name": nsim,
            }
            if fb.numeric is not None and pb.numeric is not None:
                overlap = numeric_overlap(fb.numeric, pb.numeric)
                breakdown["numeric"] = overlap
                if overlap < config.pkfk_numeric_min:
                    continue
            weight = h.score * uniqueness * nsim
            edges.append(EKGEdge(fk, h.de, "PkFk", weight, breakdown))
    edges.sort(key=lambda e: (e.src, e.dst))
    return edges


def column_ensemble_score(
    scorer: EnsembleScorer, col_a: str, col_b: str,
    weights: dict[str, float] | None = None,
) -> tuple[ColumnPairScores, float]:
    scores = scorer.pair_scores(col_a, col_b)
    return scores, combine_scores(scores.present(), weights)


def unionable_tables(
    table_id: str,
    k: int,
    scorer: EnsembleScorer,
    store: ProfileStore,
    config: EngineConfig,
    per_column_k: int | None = None,
) -> list[EKGEdge]:
    """Candidate tables from per-column best matches; unionability is the
    bipartite matching total normalized by the query table's width."""
    if table_id not in store.tables:
        raise UnknownDE(table_id)
    per_column_k = per_column_k or config.per_column_k
    my_cols = [c for c in store.tables[table_id]["column_ids"] if c in scorer.pos]
    if not my_cols:
        return []
    candidates: set[str] = set()
    all_scores = {}
    for c in my_cols:
        scores = scorer.scores_against_all(c)
        all_scores[c] = scores
        order = np.argsort(-scores, kind="stable")
        found = 0
        for j in order:
            other = scorer.col_ids[int(j)]
            parent = scorer.parents[int(j)]
            if parent == table_id or not parent:
                continue
            candidates.add(parent)
            found += 1
            if found >= per_column_k:
                break
    edges = []
    width = len(store.tables[table_id]["column_ids"])
    for cand in sorted(candidates):
        cand_cols = [c for c in store.tables[cand]["column_ids"] if c in scorer.pos]
        if not cand_cols:
            continue
        matrix = np.array(
            [[all_scores[a][scorer.pos[b]] for b in cand_cols] for a in my_cols]
        )
        result: MatchingResult = max_bipartite_matching(matrix, config.min_pair_score)
        score = result.total / width if width else 0.0
        breakdown = {
            f"pair:{my_cols[i]}:{cand_cols[j]}": s for i, j, s in result.pairs
        }
        breakdown["matching_total"] = result.total
        edges.append(EKGEdge(table_id, cand, "Unionable", float(score), breakdown))
    edges.sort(key=lambda e: (-e.weight, e.dst))
    return edges[:k]


# ---------------------------------------------------------------------------
# graph container + materialization

@dataclass
class EKG:
    nodes: dict[str, dict] = field(default_factory=dict)
    edges: list[EKGEdge] = field(default_factory=list)
    adjacency: dict[str, list[int]] = field(default_factory=dict)

    def add_edge(self, edge: EKGEdge) -> None:
        idx = len(self.edges)
        self.edges.append(edge)
        self.adjacency.setdefault(edge.src, []).append(idx)
        self.adjacency.setdefault(edge.dst, []).append(idx)

    def neighbors(
        self, de_id: str, relations: set[str] | None = None, k: int | None = None
    ) -> list[tuple[str, EKGEdge]]:
        if de_id not in self.nodes:
            raise UnknownDE(de_id)
        out = []
        for idx in self.adjacency.get(de_id, ()):
            edge = self.edges[idx]
            if relations and edge.relation not in relations:
                continue
            other = edge.dst if edge.src == de_id else edge.src
            out.append((other, edge))
        out.sort(key=lambda t: (-t[1].weight, t[0], t[1].relation))
        if k is not None:
            out = out[:k]
        return out


def materialize_ekg(
    store: ProfileStore,
    containment_index: ContainmentIndex | None,
    semantic_index: VectorIndex | None,
    joint_vectors: dict[str, np.ndarray] | None,
    config: EngineConfig,
    policy: EdgePolicy | None = None,
) -> EKG:
    policy = policy or EdgePolicy.default(config)
    graph = EKG()
    for tid, t in sorted(store.tables.items()):
        graph.nodes[tid] = {"id": tid, "kind": "table", "name": t["name"]}
    for de_id, b in sorted(store.bundles.items()):
        graph.nodes[de_id] = {"id": de_id, "kind": b.kind.value, "name": b.name}

    relations = set(config.materialize_relations)
    failures: dict[str, int] = {}

    if "DocToTable" in relations or "DocToColumn" in relations:
        if semantic_index is not None:
            signal = semantic_index.signal
            for doc_id in store.ids_of_kind(DEKind.DOCUMENT):
                try:
                    if joint_vectors is not None:
                        vec = joint_vectors.get(doc_id)
                        if vec is None:
                            continue
                    else:
                        bundle = store.bundles[doc_id]
                        if bundle.solo.content_zero:
                            continue
                        vec = bundle.solo.content_vec
                    t_edges, c_edges = doc_to_table(
                        doc_id, max(config.doc_to_table_topk, 8), semantic_index,
                        vec, store, config, signal=signal,
                    )
                    if "DocToTable" in relations:
                        for e in policy.admit("DocToTable", t_edges):
                            graph.add_edge(e)
                    if "DocToColumn" in relations:
                        for e in policy.admit("DocToColumn", c_edges):
                            graph.add_edge(e)
                except Exception:
                    logger.exception("doc_to_table failed for %s", doc_id)
                    failures["DocToTable"] = failures.get("DocToTable", 0) + 1

    if "SyntacticJoin" in relations and containment_index is not None:
        seen_pairs: set[tuple[str, str]] = set()
        for col_id in store.ids_of_kind(DEKind.COLUMN):
            if store.bundles[col_id].minhash is None:
                continue
            try:
                edges = syntactic_joins(col_id, config.per_column_k, containment_index, store)
                for e in policy.admit("SyntacticJoin", edges):
                    key = (min(e.src, e.dst), max(e.src, e.dst))
                    if key in seen_pairs:
                        continue
                    seen_pairs.add(key)
                    graph.add_edge(e)
            except Exception:
                logger.exception("syntactic_joins failed for %s", col_id)
                failures["SyntacticJoin"] = failures.get("SyntacticJoin", 0) + 1

    if "PkFk" in relations and containment_index is not None:
        try:
            for e in discover_pkfk(store, containment_index, config):
                graph.add_edge(e)
        except Exception:
            logger.exception("discover_pkfk failed")
            failures["PkFk"] = failures.get("PkFk", 0) + 1

    if "Unionable" in relations:
        scorer = EnsembleScorer(store, config)
        for table_id in sorted(store.tables):
            try:
                edges = unionable_tables(
                    table_id, config.per_column_k, scorer, store, config
                )
                for e in policy.admit("Unionable", edges):
                    graph.add_edge(e)
            except Exception:
                logger.exception("unionable_tables failed for %s", table_id)
                failures["Unionable"] = failures.get("Unionable", 0) + 1

    if failures:
        logger.warning("relation builder failures: %s", failures)
    return graph


def save_ekg(graph: EKG, nodes_path: str | Path, edges_path: str | Path) -> None:
    with Path(nodes_path).open("w") as fh:
        for de_id in sorted(graph.nodes):
            fh.write(json.dumps(graph.nodes[de_id], sort_keys=True))
            fh.write("\n")
    with Path(edges_path).open("w") as fh:
        for e in graph.edges:
            fh.write(json.dumps({
                "src": e.src, "dst": e.dst, "relation": e.relation,
                "weight": e.weight, "breakdown": e.breakdown,
            }, sort_keys=True))
            fh.write("\n")


def load_ekg(nodes_path: str | Path, edges_path: str | Path) -> EKG:
    graph = EKG()
    with Path(nodes_path).open() as fh:
        for line in fh:
            node = json.loads(line)
            graph.nodes[node["id"]] = node
    with Path(edges_path).open() as fh:
        for line in fh:
            d = json.loads(line)
            graph.add_edge(EKGEdge(d["src"], d["dst"], d["relation"], d["weight"],
                                   d["breakdown"]))
    return graph
