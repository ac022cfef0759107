"""Engine configuration.

One flat dataclass holds every tunable the pipeline reads, so a single JSON
file (plus CLI flag overrides) fully determines a run. Field names are the
canonical knob names used throughout the code and the docs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class EngineConfig:
    # global
    seed: int = 7

    # corpus / preprocessing
    df_cutoff: float = 0.2
    categorical_ratio: float = 0.05
    long_text_chars: int = 200
    max_de_words: int = 500
    type_inference_threshold: float = 0.9

    # profiler
    num_hashes: int = 512
    embedding_dim: int = 100
    pool_distinct: bool = True
    provider: str = "hash"          # "hash" or path handled by CLI flag
    profile_parallelism: int = 1

    # text index
    bm25_k1: float = 1.2
    bm25_b: float = 0.75

    # containment index
    containment_threshold: float = 0.3
    lsh_partition_ratio: int = 4
    lsh_target_collision: float = 0.9

    # vector index
    vector_backend: str = "exact"   # "exact" | "rhlsh"
    rh_hyperplanes: int = 16
    rh_tables: int = 8

    # weak labeling
    sample_fraction: float = 0.10
    gold_fraction: float = 0.10
    k_probe: int = 10
    lf_floor_bm25: float = 0.0      # strict > floor
    lf_bm25_rel_floor: float = 0.5  # fraction of the probe's best score
    lf_floor_containment: float = 0.3
    lf_floor_cosine: float = 0.5
    rel_threshold: float = 0.5
    min_gold_pairs: int = 20

    # discriminator
    disc_hidden: int = 128
    disc_lr: float = 1.0
    disc_max_iters: int = 2000
    disc_loss_delta: float = 1e-7
    disc_class_balance: bool = True

    # joint representation
    margin_beta: float = 0.2
    batch_fraction: float = 0.08
    pos_threshold: float = 0.5
    hard_cutoff: str = "avg"        # "avg" | "median" | "all"
    joint_lr: float = 0.01
    convergence_delta: float = 1e-4
    max_epochs: int = 500

    # EKG
    pkfk_containment_min: float = 0.9
    pk_uniqueness: float = 0.95
    pkfk_name_min: float = 0.3
    pkfk_numeric_min: float = 0.5
    min_pair_score: float = 0.4
    edge_epsilon: float = 0.5
    per_column_k: int = 10
    doc_to_table_col_probe: int = 64
    doc_table_combiner: str = "max"  # "max" | "sum_top3"
    ensemble_weights: dict[str, float] = field(default_factory=dict)
    materialize_relations: tuple[str, ...] = (
        "DocToColumn", "DocToTable", "SyntacticJoin", "PkFk", "Unionable",
    )
    doc_to_table_topk: int = 5
    doc_to_column_topk: int = 10

    def fingerprint(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True, default=list)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "materialize_relations" in data:
            data = dict(data)
            data["materialize_relations"] = tuple(data["materialize_relations"])
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "EngineConfig":
        data = json.loads(Path(path).read_text()) if path else {}
        if overrides:
            data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())
