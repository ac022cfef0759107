"""On-disk pipeline artifacts and stage runners.

Every CLI stage reads the artifacts of the stage before it, verifies the
recorded fingerprints, and writes its own outputs plus fingerprint
metadata so stale artifacts are detected instead of silently mixed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EngineConfig
from .corpus import Corpus, DEKind, load_catalog, load_lake, save_catalog
from .ekg import EKG, EdgePolicy, load_ekg, materialize_ekg, save_ekg
from .errors import ArtifactError, StaleArtifact
from .indexes import (
    build_containment_index,
    build_text_index,
    build_vector_index,
    file_fingerprint,
    load_containment_index,
    load_text_index,
    load_vector_index,
    save_containment_index,
    save_text_index,
    save_vector_index,
)
from .jointrep import (
    TrainResult,
    embed_all,
    load_joint_model,
    save_joint_model,
    save_loss_history,
    train_joint_model,
)
from .profiler import (
    EmbeddingProvider,
    HashEmbeddingProvider,
    ProfileStore,
    WordVectorFileProvider,
    load_profile_store,
    profile_corpus,
    save_profile_store,
)
from .weaklabel import (
    GoldLabels,
    generate_training_set,
    load_training_set,
    save_training_set,
)

logger = logging.getLogger(__name__)


@dataclass
class Workdir:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def catalog(self) -> Path:
        return self.root / "catalog.json"

    @property
    def profile(self) -> Path:
        return self.root / "profile.bin"

    @property
    def indexes_dir(self) -> Path:
        return self.root / "indexes"

    @property
    def indexes_meta(self) -> Path:
        return self.indexes_dir / "indexes.meta.json"

    def index_file(self, name: str) -> Path:
        return self.indexes_dir / f"{name}.bin"

    @property
    def training_set(self) -> Path:
        return self.root / "training_set.jsonl"

    @property
    def labels_meta(self) -> Path:
        return self.root / "labels.meta.json"

    @property
    def joint_model(self) -> Path:
        return self.root / "joint_model.json"

    @property
    def loss_history(self) -> Path:
        return self.root / "loss_history.csv"

    @property
    def ekg_nodes(self) -> Path:
        return self.root / "ekg" / "nodes.jsonl"

    @property
    def ekg_edges(self) -> Path:
        return self.root / "ekg" / "edges.jsonl"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"


INDEX_NAMES = ("text_docs", "text_cols", "text_meta", "containment",
               "solo_cols", "joint_cols", "joint_docs")


def make_provider(config: EngineConfig, embeddings_path: str | None = None) -> EmbeddingProvider:
    if embeddings_path:
        return WordVectorFileProvider(embeddings_path)
    return HashEmbeddingProvider(config.embedding_dim, config.seed)


def stage_ingest(lake_root: str | Path, workdir: Workdir, config: EngineConfig) -> Corpus:
    corpus = load_lake(lake_root, config)
    workdir.root.mkdir(parents=True, exist_ok=True)
    save_catalog(corpus, config, workdir.catalog)
    config.save(workdir.config_path)
    (workdir.root / "lake_root.txt").write_text(str(Path(lake_root).resolve()))
    return corpus


def stage_profile(
    lake_root: str | Path,
    workdir: Workdir,
    config: EngineConfig,
    embeddings_path: str | None = None,
    corpus: Corpus | None = None,
) -> ProfileStore:
    if not workdir.catalog.exists():
        raise ArtifactError("run ingest before profile")
    catalog = load_catalog(workdir.catalog)
    if catalog["config_fingerprint"] != config.fingerprint():
        raise StaleArtifact("catalog was built with a different config")
    corpus = corpus or load_lake(lake_root, config)
    provider = make_provider(config, embeddings_path)
    store = profile_corpus(corpus, config, provider)
    save_profile_store(store, workdir.profile)
    return store


def stage_index(workdir: Workdir, config: EngineConfig,
                store: ProfileStore | None = None) -> dict:
    if store is None:
        store = load_profile_store(workdir.profile, config)
    workdir.indexes_dir.mkdir(parents=True, exist_ok=True)
    doc_ids = store.ids_of_kind(DEKind.DOCUMENT)
    col_ids = store.ids_of_kind(DEKind.COLUMN)

    text_docs = build_text_index(
        {d: list(store.bundles[d].content_counts) for d in doc_ids},
        "content", config.bm25_k1, config.bm25_b,
    )
    save_text_index(text_docs, workdir.index_file("text_docs"))

    keyword_cols = [c for c in col_ids if "KeywordSearch" in store.bundles[c].tags]
    text_cols = build_text_index(
        {c: list(store.bundles[c].content_counts) for c in keyword_cols},
        "content", config.bm25_k1, config.bm25_b,
    )
    save_text_index(text_cols, workdir.index_file("text_cols"))

    meta_bags = {}
    for de in doc_ids + col_ids:
        tokens = store.bundles[de].metadata_tokens
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        meta_bags[de] = sorted(counts.items())
    text_meta = build_text_index(meta_bags, "metadata", config.bm25_k1, config.bm25_b)
    save_text_index(text_meta, workdir.index_file("text_meta"))

    col_sigs = {
        c: store.bundles[c].minhash for c in col_ids
        if store.bundles[c].minhash is not None
    }
    if col_sigs:
        containment = build_containment_index(
            col_sigs,
            threshold=config.containment_threshold,
            partition_ratio=config.lsh_partition_ratio,
            target_collision=config.lsh_target_collision,
        )
        save_containment_index(containment, workdir.index_file("containment"))

    solo_vectors = {
        c: store.bundles[c].solo.content_vec
        for c in col_ids
        if "CrossModal" in store.bundles[c].tags and not store.bundles[c].solo.content_zero
    }
    if solo_vectors:
        solo_idx = build_vector_index(
            solo_vectors, "SoloSemantic", backend=config.vector_backend,
            rh_hyperplanes=config.rh_hyperplanes, rh_tables=config.rh_tables,
            seed=config.seed,
        )
        save_vector_index(solo_idx, workdir.index_file("solo_cols"))

    meta = {
        "profile_fingerprint": file_fingerprint(workdir.profile),
        "config_fingerprint": config.fingerprint(),
        "files": {},
    }
    for name in INDEX_NAMES:
        path = workdir.index_file(name)
        if path.exists():
            meta["files"][name] = file_fingerprint(path)
    workdir.indexes_meta.write_text(json.dumps(meta, sort_keys=True, indent=1))
    return meta


def check_index_freshness(workdir: Workdir, config: EngineConfig) -> None:
    if not workdir.indexes_meta.exists():
        raise ArtifactError("run index before this stage")
    meta = json.loads(workdir.indexes_meta.read_text())
    if meta["profile_fingerprint"] != file_fingerprint(workdir.profile):
        raise StaleArtifact("indexes were built from a different profile store")
    if meta["config_fingerprint"] != config.fingerprint():
        raise StaleArtifact("indexes were built with a different config")


def stage_labels(
    workdir: Workdir,
    config: EngineConfig,
    gold_path: str | Path | None = None,
    store: ProfileStore | None = None,
):
    if store is None:
        store = load_profile_store(workdir.profile, config)
    gold = GoldLabels.from_csv(gold_path) if gold_path else None
    run = generate_training_set(store, config, gold)
    save_training_set(run.training_set, workdir.training_set)
    workdir.labels_meta.write_text(json.dumps({
        "active_lfs": list(run.active_lfs),
        "lf_accuracy": {k: v for k, v in sorted(run.label_model.lf_accuracy.items())},
        "class_prior": run.label_model.class_prior,
        "sampled_docs": len(run.sample.docs),
        "sampled_cols": len(run.sample.cols),
        "matrix_entries": len(run.matrix.votes),
        "profile_fingerprint": file_fingerprint(workdir.profile),
    }, sort_keys=True, indent=1))
    return run


def stage_train(workdir: Workdir, config: EngineConfig,
                store: ProfileStore | None = None) -> TrainResult:
    if store is None:
        store = load_profile_store(workdir.profile, config)
    training_set = load_training_set(workdir.training_set)
    result = train_joint_model(training_set, config, store)
    save_joint_model(result, config, workdir.joint_model)
    save_loss_history(result.history, workdir.loss_history)

    joint = embed_all(result.model, store)
    col_vecs = {de: v for de, v in joint.items()
                if store.bundles[de].kind == DEKind.COLUMN}
    doc_vecs = {de: v for de, v in joint.items()
                if store.bundles[de].kind == DEKind.DOCUMENT}
    workdir.indexes_dir.mkdir(parents=True, exist_ok=True)
    if col_vecs:
        save_vector_index(
            build_vector_index(col_vecs, "JointSemantic",
                               backend=config.vector_backend,
                               rh_hyperplanes=config.rh_hyperplanes,
                               rh_tables=config.rh_tables, seed=config.seed),
            workdir.index_file("joint_cols"),
        )
    if doc_vecs:
        save_vector_index(
            build_vector_index(doc_vecs, "JointSemantic"),
            workdir.index_file("joint_docs"),
        )
    if workdir.indexes_meta.exists():
        meta = json.loads(workdir.indexes_meta.read_text())
        for name in ("joint_cols", "joint_docs"):
            path = workdir.index_file(name)
            if path.exists():
                meta["files"][name] = file_fingerprint(path)
        workdir.indexes_meta.write_text(json.dumps(meta, sort_keys=True, indent=1))
    return result


def stage_ekg(workdir: Workdir, config: EngineConfig,
              store: ProfileStore | None = None,
              policy: EdgePolicy | None = None) -> EKG:
    if store is None:
        store = load_profile_store(workdir.profile, config)
    check_index_freshness(workdir, config)
    containment = None
    if workdir.index_file("containment").exists():
        containment = load_containment_index(workdir.index_file("containment"))
    joint_docs = None
    if workdir.index_file("joint_docs").exists():
        joint_docs = load_vector_index(workdir.index_file("joint_docs"))
    semantic = None
    joint_vectors = None
    if workdir.index_file("joint_cols").exists():
        semantic = load_vector_index(workdir.index_file("joint_cols"))
        if joint_docs is not None:
            joint_vectors = {
                de: joint_docs.matrix[i] for i, de in enumerate(joint_docs.ids)
            }
    elif workdir.index_file("solo_cols").exists():
        semantic = load_vector_index(workdir.index_file("solo_cols"))
    graph = materialize_ekg(store, containment, semantic, joint_vectors, config, policy)
    workdir.ekg_nodes.parent.mkdir(parents=True, exist_ok=True)
    save_ekg(graph, workdir.ekg_nodes, workdir.ekg_edges)
    return graph


def run_full_pipeline(
    lake_root: str | Path,
    workdir_path: str | Path,
    config: EngineConfig,
    gold_path: str | Path | None = None,
    embeddings_path: str | None = None,
) -> Workdir:
    wd = Workdir(Path(workdir_path))
    corpus = stage_ingest(lake_root, wd, config)
    store = stage_profile(lake_root, wd, config, embeddings_path, corpus=corpus)
    stage_index(wd, config, store=store)
    stage_labels(wd, config, gold_path, store=store)
    stage_train(wd, config, store=store)
    stage_ekg(wd, config, store=store)
    return wd
