#!/usr/bin/env python3
"""Paired document-to-table run: joint embeddings vs solo embeddings.

Generates a planted lake per seed, runs the full pipeline once, then ranks
tables for every ground-truth document twice: through the trained joint
space and through the raw solo content space. Reports precision@k for
both, per seed and aggregated.

Usage:
    python3 scripts/joint_vs_solo.py --seeds 1,2,3 --k 5 [--fast]
"""

from __future__ import annotations

import argparse
import tempfile
import time
from pathlib import Path

import numpy as np

from crosslake.artifacts import run_full_pipeline
from crosslake.config import EngineConfig
from crosslake.ekg import doc_to_table
from crosslake.evalkit import (
    acceptance_lake_spec,
    generate_synthetic_lake,
    precision_recall_at_k,
)
from crosslake.indexes import load_vector_index
from crosslake.queryservice import load_engine


def paired_run(seed: int, k: int, fast: bool, workroot: Path) -> dict:
    spec = acceptance_lake_spec(seed, fast)
    lake = generate_synthetic_lake(spec, workroot / f"lake_{seed}")
    config = EngineConfig(seed=seed)          # all engine defaults, incl. 10% / 8% / 0.2
    t0 = time.perf_counter()
    wd = run_full_pipeline(lake.root, workroot / f"work_{seed}", config)
    build_s = time.perf_counter() - t0
    engine = load_engine(wd.root, config)
    solo_index = load_vector_index(wd.index_file("solo_cols"))

    joint_ps, solo_ps = [], []
    truth = lake.truths["DocToTable"].entries
    for doc_id in sorted(truth):
        answers = truth[doc_id]
        joint_ids = engine.crossModal_search(doc_id, k).ids()
        bundle = engine.store.bundles[doc_id]
        solo_edges, _ = doc_to_table(
            doc_id, k, solo_index, bundle.solo.content_vec,
            engine.store, config, signal="SoloSemantic",
        )
        solo_ids = [e.dst for e in solo_edges]
        joint_ps.append(precision_recall_at_k(joint_ids, answers, k)[0])
        solo_ps.append(precision_recall_at_k(solo_ids, answers, k)[0])
    return {
        "seed": seed,
        "joint_p": float(np.mean(joint_ps)),
        "solo_p": float(np.mean(solo_ps)),
        "build_seconds": build_s,
        "docs": len(truth),
    }


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", default="1,2,3")
    parser.add_argument("--k", type=int, default=5)
    parser.add_argument("--fast", action="store_true")
    parser.add_argument("--workdir", default=None)
    args = parser.parse_args()
    workroot = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp())
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = []
    for seed in seeds:
        row = paired_run(seed, args.k, args.fast, workroot)
        rows.append(row)
        print(
            f"seed {row['seed']}: joint p@{args.k} {row['joint_p']:.4f}  "
            f"solo p@{args.k} {row['solo_p']:.4f}  "
            f"({row['docs']} docs, build {row['build_seconds']:.1f}s)"
        )
    joint = float(np.mean([r["joint_p"] for r in rows]))
    solo = float(np.mean([r["solo_p"] for r in rows]))
    print(f"mean over {len(seeds)} seeds: joint {joint:.4f} vs solo {solo:.4f} "
          f"-> {'joint >= solo' if joint >= solo else 'JOINT BELOW SOLO'}")


if __name__ == "__main__":
    main()
