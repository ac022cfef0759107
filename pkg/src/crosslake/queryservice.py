"""Discovery interface over the built artifacts.

Every discovery primitive (DP) is read-only and returns a Discovery
Result Set: a ranked (id, score) list carrying a provenance chain that
can be replayed to reproduce the same items. The CLI and the HTTP
service both dispatch through ``QueryEngine.execute_op`` so the two
surfaces return identical results.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import Workdir, make_provider
from .config import EngineConfig
from .corpus import DEKind, load_catalog, raw_document_tokens
from .ekg import EKG, EnsembleScorer, doc_to_table, load_ekg, unionable_tables
from .errors import (
    ArtifactError,
    IndexMissing,
    ModelMissing,
    UnknownDE,
)
from .indexes import (
    load_containment_index,
    load_text_index,
    load_vector_index,
    text_search,
)
from .jointrep import load_joint_model
from .profiler import load_profile_store, solo_embed, projection_matrix
from .text import content_tokens

DP_NAMES = (
    "content_search", "catalog_search", "crossModal_search",
    "pkfk", "unionable", "neighbors", "drs_combine",
)


@dataclass
class DRS:
    items: list[tuple[str, float]]
    provenance: list[dict] = field(default_factory=list)

    @property
    def drs_id(self) -> str:
        return self.provenance[-1]["id"] if self.provenance else ""

    def ids(self) -> list[str]:
        return [de for de, _ in self.items]

    def to_dict(self) -> dict:
        return {
            "drs_id": self.drs_id,
            "items": [{"id": de, "score": score} for de, score in self.items],
            "provenance": self.provenance,
        }


def _record(op: str, params: dict, parents: list[str]) -> dict:
    payload = json.dumps({"op": op, "params": params, "parents": parents}, sort_keys=True)
    return {
        "id": hashlib.sha256(payload.encode()).hexdigest()[:16],
        "op": op,
        "params": params,
        "parents": parents,
    }


def make_drs(items: list[tuple[str, float]], op: str, params: dict,
             parents: list["DRS"] | None = None) -> DRS:
    parents = parents or []
    chain: list[dict] = []
    seen: set[str] = set()
    for parent in parents:
        for rec in parent.provenance:
            if rec["id"] not in seen:
                seen.add(rec["id"])
                chain.append(rec)
    chain.append(_record(op, params, [p.drs_id for p in parents]))
    ordered = sorted(items, key=lambda t: (-t[1], t[0]))
    return DRS(items=[(de, float(s)) for de, s in ordered], provenance=chain)


def _minmax_normalize(items: list[tuple[str, float]]) -> dict[str, float]:
    if not items:
        return {}
    scores = [s for _, s in items]
    lo, hi = min(scores), max(scores)
    if hi == lo:
        return {de: 1.0 for de, _ in items}
    return {de: (s - lo) / (hi - lo) for de, s in items}


class QueryEngine:
    """Read-only discovery primitives over loaded artifacts."""

    def __init__(
        self,
        config: EngineConfig,
        catalog: dict,
        store,
        text_docs=None,
        text_cols=None,
        text_meta=None,
        containment=None,
        solo_cols=None,
        joint_cols=None,
        joint_docs=None,
        joint_model=None,
        graph: EKG | None = None,
        provider=None,
    ):
        self.config = config
        self.catalog = catalog
        self.store = store
        self.text_docs = text_docs
        self.text_cols = text_cols
        self.text_meta = text_meta
        self.containment = containment
        self.solo_cols = solo_cols
        self.joint_cols = joint_cols
        self.joint_docs = joint_docs
        self.joint_model = joint_model
        self.graph = graph
        self.provider = provider
        self._scorer: EnsembleScorer | None = None
        self._joint_doc_vecs: dict[str, np.ndarray] | None = None
        self._projection = None
        if provider is not None and provider.dimension != config.embedding_dim:
            self._projection = projection_matrix(
                provider.dimension, config.embedding_dim, config.seed
            )
        self._table_names = {t["id"]: t["name"] for t in catalog.get("tables", [])}
        self._column_meta = {c["id"]: c for c in catalog.get("columns", [])}
        self._doc_meta = {d["id"]: d for d in catalog.get("documents", [])}

    # -- helpers ---------------------------------------------------------

    @property
    def scorer(self) -> EnsembleScorer:
        if self._scorer is None:
            self._scorer = EnsembleScorer(self.store, self.config)
        return self._scorer

    def joint_doc_vector(self, doc_id: str) -> np.ndarray | None:
        if self.joint_docs is None:
            return None
        if self._joint_doc_vecs is None:
            self._joint_doc_vecs = {
                de: self.joint_docs.matrix[i] for i, de in enumerate(self.joint_docs.ids)
            }
        return self._joint_doc_vecs.get(doc_id)

    def kind_of(self, de_id: str) -> DEKind | None:
        if de_id in self._table_names:
            return DEKind.TABLE
        bundle = self.store.bundles.get(de_id) if self.store else None
        if bundle is not None:
            return bundle.kind
        if de_id in self._column_meta:
            return DEKind.COLUMN
        if de_id in self._doc_meta:
            return DEKind.DOCUMENT
        return None

    def _query_tokens(self, value: str) -> list[str]:
        return content_tokens(value)

    # -- discovery primitives --------------------------------------------

    def content_search(self, value: str, mode: str = "Text", k: int = 10) -> DRS:
        params = {"value": value, "mode": mode, "k": k}
        tokens = self._query_tokens(value)
        if mode == "Text":
            if self.text_docs is None:
                raise IndexMissing("document content index not built")
            hits = text_search(self.text_docs, tokens, k)
        elif mode == "Tabular":
            if self.text_cols is None:
                raise IndexMissing("column content index not built")
            hits = text_search(self.text_cols, tokens, k)
        elif mode == "Both":
            if self.text_docs is None or self.text_cols is None:
                raise IndexMissing("content indexes not built")
            merged = {h.de: h.score for h in text_search(self.text_docs, tokens, k)}
            for h in text_search(self.text_cols, tokens, k):
                merged[h.de] = max(merged.get(h.de, 0.0), h.score)
            hits = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
            return make_drs(list(hits), "content_search", params)
        else:
            raise ValueError(f"unknown content_search mode: {mode}")
        return make_drs([(h.de, h.score) for h in hits], "content_search", params)

    def catalog_search(self, value: str, k: int = 10) -> DRS:
        if self.text_meta is None or self.text_meta.n == 0:
            raise IndexMissing("metadata index not built")
        from .text import metadata_tokens
        tokens = metadata_tokens(value)
        hits = text_search(self.text_meta, tokens, k)
        return make_drs([(h.de, h.score) for h in hits],
                        "catalog_search", {"value": value, "k": k})

    def _cross_modal_vector(self, value: str) -> np.ndarray:
        """Joint-space query vector for a stored doc id or ad-hoc text."""
        if self.joint_model is None:
            raise ModelMissing("joint model not trained")
        if value in self._doc_meta:
            bundle = self.store.bundles.get(value) if self.store else None
            if bundle is not None:
                # single-row forward, the same kernel the ad-hoc path uses,
                # so stored-doc and raw-text queries agree bit for bit
                enc = np.concatenate([bundle.solo.metadata_vec, bundle.solo.content_vec])
                return self.joint_model.forward(enc)
            vec = self.joint_doc_vector(value)
            if vec is None:
                raise UnknownDE(value)
            return vec
        # ad-hoc text: corpus preprocessing path, empty metadata half
        if self.provider is None:
            raise ModelMissing("no embedding provider available for raw-text queries")
        tokens = raw_document_tokens(value)
        df = self.catalog.get("df_table", {})
        n_docs = self.catalog.get("n_docs", 0)
        cutoff = self.config.df_cutoff
        kept = [t for t in tokens if n_docs == 0 or df.get(t, 0) / n_docs <= cutoff]
        content, _ = solo_embed(
            kept, self.provider, self._projection,
            pool_distinct=self.config.pool_distinct,
            out_dim=self.config.embedding_dim,
        )
        enc = np.concatenate([np.zeros(self.config.embedding_dim), content])
        return self.joint_model.forward(enc)

    def crossModal_search(self, value: str, topn: int = 5) -> DRS:
        params = {"value": value, "topn": topn}
        index = self.joint_cols if self.joint_cols is not None else self.solo_cols
        if index is None:
            raise IndexMissing("no column vector index built")
        if len(value) == 32 and all(c in "0123456789abcdef" for c in value) \
                and value not in self._doc_meta and value not in self._column_meta \
                and value not in self._table_names:
            raise UnknownDE(value)
        vec = self._cross_modal_vector(value)
        edges, _ = doc_to_table(
            value if value in self._doc_meta else "adhoc",
            topn, index, vec, self.store, self.config, signal=index.signal,
        )
        return make_drs([(e.dst, e.weight) for e in edges], "crossModal_search", params)

    def pkfk(self, value: str, topn: int = 5) -> DRS:
        params = {"value": value, "topn": topn}
        if self.graph is None:
            raise IndexMissing("EKG not materialized")
        if value not in self._table_names:
            raise UnknownDE(value)
        my_cols = set(
            next(t["column_ids"] for t in self.catalog["tables"] if t["id"] == value)
        )
        best: dict[str, float] = {}
        for edge in self.graph.edges:
            if edge.relation != "PkFk":
                continue
            if edge.src in my_cols or edge.dst in my_cols:
                other_col = edge.dst if edge.src in my_cols else edge.src
                parent = self._column_meta.get(other_col, {}).get("parent_table")
                if parent and parent != value:
                    best[parent] = max(best.get(parent, 0.0), edge.weight)
        ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:topn]
        return make_drs(list(ranked), "pkfk", params)

    def unionable(self, value: str, topn: int = 5) -> DRS:
        params = {"value": value, "topn": topn}
        if value not in self._table_names:
            raise UnknownDE(value)
        ranked: list[tuple[str, float]] = []
        if self.graph is not None:
            edges = [
                e for e in self.graph.edges
                if e.relation == "Unionable" and e.src == value
            ]
            ranked = [(e.dst, e.weight) for e in edges]
        if not ranked and self.store is not None:
            edges = unionable_tables(value, topn, self.scorer, self.store, self.config)
            ranked = [(e.dst, e.weight) for e in edges]
        ranked.sort(key=lambda kv: (-kv[1], kv[0]))
        return make_drs(ranked[:topn], "unionable", params)

    def neighbors(self, de: str, relations: list[str] | None = None, k: int = 10) -> DRS:
        params = {"de": de, "relations": sorted(relations) if relations else [], "k": k}
        if self.graph is None:
            raise IndexMissing("EKG not materialized")
        rel_set = set(relations) if relations else None
        pairs = self.graph.neighbors(de, rel_set, k)
        best: dict[str, float] = {}
        for other, edge in pairs:
            best[other] = max(best.get(other, 0.0), edge.weight)
        ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        return make_drs(list(ranked), "neighbors", params)

    def drs_combine(self, a: DRS, b: DRS, op: str = "Union") -> DRS:
        params = {"op": op}
        na = _minmax_normalize(a.items)
        nb = _minmax_normalize(b.items)
        if op == "Union":
            ids = sorted(set(na) | set(nb))
        elif op == "Intersect":
            ids = sorted(set(na) & set(nb))
        else:
            raise ValueError(f"unknown combine op: {op}")
        items = [(de, na.get(de, 0.0) + nb.get(de, 0.0)) for de in ids]
        return make_drs(items, "drs_combine", params, parents=[a, b])

    # -- dispatch, replay, benchmarks --------------------------------------

    def execute_op(self, op: str, params: dict) -> DRS:
        if op == "content_search":
            return self.content_search(
                params["value"], params.get("mode", "Text"), int(params.get("k", 10))
            )
        if op == "catalog_search":
            return self.catalog_search(params["value"], int(params.get("k", 10)))
        if op == "crossModal_search":
            return self.crossModal_search(params["value"], int(params.get("topn", 5)))
        if op == "pkfk":
            return self.pkfk(params["value"], int(params.get("topn", 5)))
        if op == "unionable":
            return self.unionable(params["value"], int(params.get("topn", 5)))
        if op == "neighbors":
            return self.neighbors(
                params["de"], params.get("relations") or None, int(params.get("k", 10))
            )
        raise ValueError(f"unknown op: {op}")

    def replay(self, provenance: list[dict]) -> DRS:
        """Re-execute a recorded provenance chain."""
        by_id: dict[str, DRS] = {}
        last: DRS | None = None
        for rec in provenance:
            if rec["op"] == "drs_combine":
                a, b = (by_id[p] for p in rec["parents"])
                drs = self.drs_combine(a, b, rec["params"]["op"])
            else:
                drs = self.execute_op(rec["op"], rec["params"])
            by_id[rec["id"]] = drs
            last = drs
        if last is None:
            raise ValueError("empty provenance chain")
        return last

    def benchmark_query(self, task: str, query_id: str, k: int) -> list[str]:
        """Ranked answer ids for one benchmark query."""
        if task == "DocToTable":
            return self.crossModal_search(query_id, k).ids()
        if task == "SyntacticJoin":
            from .ekg import syntactic_joins
            if self.containment is None:
                raise IndexMissing("containment index not built")
            edges = syntactic_joins(query_id, k, self.containment, self.store)
            return [e.dst for e in edges]
        if task == "PkFk":
            return self.pkfk(query_id, k).ids()
        if task == "Unionable":
            return self.unionable(query_id, k).ids()
        raise ValueError(f"unknown benchmark task: {task}")

    # -- display metadata ---------------------------------------------------

    def describe(self, de_id: str) -> dict:
        if de_id in self._table_names:
            table = next(t for t in self.catalog["tables"] if t["id"] == de_id)
            return {
                "id": de_id,
                "kind": "table",
                "name": table["name"],
                "row_count": table["row_count"],
                "schema": [
                    {
                        "id": c,
                        "name": self._column_meta[c]["name"],
                        "inferred_type": self._column_meta[c]["inferred_type"],
                    }
                    for c in table["column_ids"]
                ],
            }
        if de_id in self._column_meta:
            c = self._column_meta[de_id]
            return {
                "id": de_id,
                "kind": "column",
                "name": c["name"],
                "parent_table": c["parent_table"],
                "parent_table_name": self._table_names.get(c["parent_table"], ""),
                "inferred_type": c["inferred_type"],
                "tags": c["tags"],
                "sample_values": c["sample_values"],
                "distinct_count": c["distinct_count"],
                "row_count": c["row_count"],
            }
        if de_id in self._doc_meta:
            d = self._doc_meta[de_id]
            return {
                "id": de_id,
                "kind": "document",
                "name": d["title"],
                "title": d["title"],
                "source": d["source"],
                "snippet": d["snippet"],
                "word_count": d["word_count"],
                "parent_doc": d["parent_doc"],
            }
        raise UnknownDE(de_id)

    def decorate(self, drs: DRS) -> dict:
        """Wire shape: DRS plus display metadata and per-signal breakdowns."""
        payload = drs.to_dict()
        op = drs.provenance[-1]["op"] if drs.provenance else ""
        params = drs.provenance[-1].get("params", {}) if drs.provenance else {}
        for item in payload["items"]:
            try:
                desc = self.describe(item["id"])
            except UnknownDE:
                desc = {"kind": "unknown", "name": item["id"]}
            item["kind"] = desc.get("kind", "unknown")
            item["name"] = desc.get("name", "")
            if item["kind"] == "column":
                item["parent_table"] = desc.get("parent_table", "")
                item["parent_table_name"] = desc.get("parent_table_name", "")
            if item["kind"] == "document":
                item["snippet"] = desc.get("snippet", "")
            breakdown = self._item_breakdown(op, params, item["id"], item["score"])
            if breakdown is not None:
                item["breakdown"] = breakdown
        return payload

    _SINGLE_SIGNAL_OPS = {
        "content_search": "BM25Content",
        "catalog_search": "BM25Metadata",
    }

    def _item_breakdown(self, op: str, params: dict, de_id: str,
                        score: float) -> dict | None:
        """Per-signal provenance for one result item: the persisted edge
        breakdown where an edge backs the item, a single-signal map
        otherwise."""
        if op in self._SINGLE_SIGNAL_OPS:
            return {self._SINGLE_SIGNAL_OPS[op]: score}
        if op == "crossModal_search":
            signal = self.joint_cols.signal if self.joint_cols is not None else \
                ("SoloSemantic" if self.solo_cols is not None else "SemanticSim")
            return {signal: score}
        if self.graph is None:
            return None
        if op == "pkfk":
            src = params.get("value", "")
            my_cols = set()
            for t in self.catalog.get("tables", []):
                if t["id"] == src:
                    my_cols = set(t["column_ids"])
            best = None
            for edge in self.graph.edges:
                if edge.relation != "PkFk":
                    continue
                ends = {edge.src, edge.dst}
                if ends & my_cols and any(
                    self._column_meta.get(c, {}).get("parent_table") == de_id
                    for c in ends
                ):
                    if best is None or edge.weight > best.weight:
                        best = edge
            return dict(best.breakdown) if best else None
        if op in ("unionable", "neighbors"):
            src = params.get("value") or params.get("de") or ""
            relation = "Unionable" if op == "unionable" else None
            best = None
            for idx in self.graph.adjacency.get(src, ()):
                edge = self.graph.edges[idx]
                if relation and edge.relation != relation:
                    continue
                other = edge.dst if edge.src == src else edge.src
                if other != de_id:
                    continue
                if best is None or edge.weight > best.weight:
                    best = edge
            return dict(best.breakdown) if best else None
        return None

    def neighborhood(self, de_id: str, depth: int = 1) -> dict:
        if self.graph is None:
            raise IndexMissing("EKG not materialized")
        if de_id not in self.graph.nodes:
            raise UnknownDE(de_id)
        seen = {de_id}
        frontier = [de_id]
        nodes = [de_id]
        edges: list[dict] = []
        edge_keys: set[tuple] = set()
        for _ in range(max(0, depth)):
            next_frontier = []
            for node in frontier:
                for other, edge in self.graph.neighbors(node, None, k=50):
                    key = (edge.src, edge.dst, edge.relation)
                    if key not in edge_keys:
                        edge_keys.add(key)
                        edges.append({
                            "src": edge.src, "dst": edge.dst,
                            "relation": edge.relation, "weight": edge.weight,
                            "breakdown": edge.breakdown,
                        })
                    if other not in seen:
                        seen.add(other)
                        nodes.append(other)
                        next_frontier.append(other)
            frontier = next_frontier
        node_payload = []
        for n in nodes:
            try:
                node_payload.append(self.describe(n))
            except UnknownDE:
                node_payload.append({"id": n, "kind": "unknown", "name": n})
        return {"center": de_id, "depth": depth, "nodes": node_payload, "edges": edges}

    def summary(self) -> dict:
        relations: dict[str, int] = {}
        if self.graph is not None:
            for e in self.graph.edges:
                relations[e.relation] = relations.get(e.relation, 0) + 1
        return {
            "tables": len(self.catalog.get("tables", [])),
            "columns": len(self.catalog.get("columns", [])),
            "documents": len(self.catalog.get("documents", [])),
            "edges_by_relation": dict(sorted(relations.items())),
            "joint_model": self.joint_model is not None,
        }


def load_engine(
    workdir_path: str | Path,
    config: EngineConfig | None = None,
    embeddings_path: str | None = None,
) -> QueryEngine:
    wd = Workdir(Path(workdir_path))
    if not wd.config_path.exists():
        raise ArtifactError(f"no pipeline artifacts at {wd.root}")
    if config is None:
        config = EngineConfig.load(wd.config_path)
    catalog = load_catalog(wd.catalog)
    store = load_profile_store(wd.profile, config) if wd.profile.exists() else None

    def opt_text(name):
        path = wd.index_file(name)
        return load_text_index(path) if path.exists() else None

    def opt_vec(name):
        path = wd.index_file(name)
        return load_vector_index(path) if path.exists() else None

    containment = None
    if wd.index_file("containment").exists():
        containment = load_containment_index(wd.index_file("containment"))
    joint_model = load_joint_model(wd.joint_model) if wd.joint_model.exists() else None
    graph = None
    if wd.ekg_nodes.exists() and wd.ekg_edges.exists():
        graph = load_ekg(wd.ekg_nodes, wd.ekg_edges)
    provider = make_provider(config, embeddings_path)
    if store is not None and provider.fingerprint() != store.provider_fingerprint:
        if embeddings_path is None and not store.provider_fingerprint.startswith("hash:"):
            provider = None   # raw-text queries disabled without the vector file
    return QueryEngine(
        config=config,
        catalog=catalog,
        store=store,
        text_docs=opt_text("text_docs"),
        text_cols=opt_text("text_cols"),
        text_meta=opt_text("text_meta"),
        containment=containment,
        solo_cols=opt_vec("solo_cols"),
        joint_cols=opt_vec("joint_cols"),
        joint_docs=opt_vec("joint_docs"),
        joint_model=joint_model,
        graph=graph,
        provider=provider,
    )
