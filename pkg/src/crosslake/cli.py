"""Command-line pipeline: each subcommand reads/writes on-disk artifacts.

    crosslake gen-lake --spec spec.json --out LAKE_DIR
    crosslake ingest   --lake LAKE_DIR --workdir WORK
    crosslake profile  --lake LAKE_DIR --workdir WORK [--embeddings vec.txt]
    crosslake index    --workdir WORK
    crosslake labels   --workdir WORK [--gold gold.csv]
    crosslake train    --workdir WORK
    crosslake ekg      --workdir WORK
    crosslake query    --workdir WORK --op content_search --params '{...}'
    crosslake serve    --workdir WORK [--host H --port P]
    crosslake eval     --workdir WORK --truth FILE --task DocToTable \
                       --k-list 1,5,10 --out report.json
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .artifacts import (
    Workdir,
    stage_ekg,
    stage_index,
    stage_ingest,
    stage_labels,
    stage_profile,
    stage_train,
)
from .config import EngineConfig
from .errors import CrosslakeError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")


def _load_config(args) -> EngineConfig:
    overrides: dict = {}
    for item in args.set:
        key, _, raw = item.partition("=")
        if not _:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    if args.seed is not None:
        overrides["seed"] = args.seed
    return EngineConfig.load(args.config, overrides) if args.config else \
        EngineConfig.from_dict(overrides)


def _workdir_config(args) -> EngineConfig:
    """Stages after ingest default to the config frozen in the workdir."""
    wd = Workdir(Path(args.workdir))
    if args.config is None and not args.set and args.seed is None \
            and wd.config_path.exists():
        return EngineConfig.load(wd.config_path)
    return _load_config(args)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="crosslake")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-lake", help="generate a synthetic lake + ground truth")
    p.add_argument("--spec", required=True, help="SyntheticLakeSpec JSON file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="load the lake and write catalog.json")
    p.add_argument("--lake", required=True)
    p.add_argument("--workdir", required=True)
    _add_common(p)

    p = sub.add_parser("profile", help="build sketches into profile.bin")
    p.add_argument("--lake", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--embeddings", help="word-vector file (word v1 .. vD per line)")
    _add_common(p)

    p = sub.add_parser("index", help="build text/containment/vector indexes")
    p.add_argument("--workdir", required=True)
    _add_common(p)

    p = sub.add_parser("labels", help="generate the weakly supervised training set")
    p.add_argument("--workdir", required=True)
    p.add_argument("--gold", help="gold labels CSV: doc_id,col_id,label")
    _add_common(p)

    p = sub.add_parser("train", help="train the joint model and embed all DEs")
    p.add_argument("--workdir", required=True)
    _add_common(p)

    p = sub.add_parser("ekg", help="materialize the knowledge graph")
    p.add_argument("--workdir", required=True)
    _add_common(p)

    p = sub.add_parser("query", help="run one discovery primitive")
    p.add_argument("--workdir", required=True)
    p.add_argument("--op", required=True)
    p.add_argument("--params", default="{}", help="JSON parameters for the op")
    p.add_argument("--embeddings")
    _add_common(p)

    p = sub.add_parser("serve", help="run the HTTP discovery service")
    p.add_argument("--workdir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8265)
    p.add_argument("--embeddings")
    _add_common(p)

    p = sub.add_parser("eval", help="run a benchmark against ground truth")
    p.add_argument("--workdir", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--task", required=True,
                   choices=["DocToTable", "SyntacticJoin", "PkFk", "Unionable"])
    p.add_argument("--k-list", default="1,5,10")
    p.add_argument("--out", required=True)
    _add_common(p)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except CrosslakeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "gen-lake":
        from .evalkit import SyntheticLakeSpec, generate_synthetic_lake

        spec_data = json.loads(Path(args.spec).read_text())
        known = {f.name for f in dataclasses.fields(SyntheticLakeSpec)}
        unknown = set(spec_data) - known
        if unknown:
            raise SystemExit(f"unknown lake-spec keys: {sorted(unknown)}")
        if "pk_duplicate_tables" in spec_data:
            spec_data["pk_duplicate_tables"] = tuple(spec_data["pk_duplicate_tables"])
        lake = generate_synthetic_lake(SyntheticLakeSpec(**spec_data), args.out)
        print(json.dumps({
            "lake": str(lake.root),
            "truth_dir": str(lake.truth_dir),
            "tables": len(lake.table_ids),
            "documents": len(lake.doc_ids),
        }, indent=1))
        return 0

    if args.command == "ingest":
        config = _load_config(args)
        corpus = stage_ingest(args.lake, Workdir(Path(args.workdir)), config)
        print(json.dumps({
            "tables": len(corpus.tables),
            "columns": len(corpus.columns),
            "documents": len(corpus.documents),
        }, indent=1))
        return 0

    if args.command == "profile":
        config = _workdir_config(args)
        store = stage_profile(args.lake, Workdir(Path(args.workdir)), config,
                              embeddings_path=args.embeddings)
        print(json.dumps({"bundles": len(store.bundles)}, indent=1))
        return 0

    if args.command == "index":
        config = _workdir_config(args)
        meta = stage_index(Workdir(Path(args.workdir)), config)
        print(json.dumps(meta, indent=1))
        return 0

    if args.command == "labels":
        config = _workdir_config(args)
        run = stage_labels(Workdir(Path(args.workdir)), config, gold_path=args.gold)
        print(json.dumps({
            "training_pairs": len(run.training_set),
            "active_lfs": list(run.active_lfs),
            "lf_accuracy": run.label_model.lf_accuracy,
        }, indent=1))
        return 0

    if args.command == "train":
        config = _workdir_config(args)
        result = stage_train(Workdir(Path(args.workdir)), config)
        print(json.dumps({
            "epochs": len(result.history),
            "final_loss": result.history[-1][1] if result.history else None,
        }, indent=1))
        return 0

    if args.command == "ekg":
        config = _workdir_config(args)
        graph = stage_ekg(Workdir(Path(args.workdir)), config)
        by_rel: dict[str, int] = {}
        for e in graph.edges:
            by_rel[e.relation] = by_rel.get(e.relation, 0) + 1
        print(json.dumps({"nodes": len(graph.nodes), "edges": by_rel}, indent=1))
        return 0

    if args.command == "query":
        from .queryservice import load_engine

        config = _workdir_config(args)
        engine = load_engine(args.workdir, config, embeddings_path=args.embeddings)
        drs = engine.execute_op(args.op, json.loads(args.params))
        print(json.dumps(engine.decorate(drs), indent=1))
        return 0

    if args.command == "serve":
        from .service import serve

        serve(args.workdir, host=args.host, port=args.port,
              embeddings_path=args.embeddings)
        return 0

    if args.command == "eval":
        from .evalkit import load_ground_truth, run_benchmark
        from .queryservice import load_engine

        config = _workdir_config(args)
        engine = load_engine(args.workdir, config)
        truth = load_ground_truth(args.truth, task=args.task)
        k_list = [int(k) for k in args.k_list.split(",") if k]
        sizes = _de_sizes(engine.catalog)
        report = run_benchmark(engine, truth, args.task, k_list, sizes=sizes)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json())
        out.with_suffix(".csv").write_text(report.to_csv())
        out.with_name(out.stem + ".timing.json").write_text(
            json.dumps({"runtime_seconds": report.runtime_seconds})
        )
        print(report.to_json())
        return 0

    raise SystemExit(f"unhandled command {args.command}")


def _de_sizes(catalog: dict) -> dict[str, int]:
    sizes = {}
    for d in catalog.get("documents", []):
        sizes[d["id"]] = d["bag_distinct"]
    for c in catalog.get("columns", []):
        sizes[c["id"]] = c["distinct_count"]
    for t in catalog.get("tables", []):
        sizes[t["id"]] = t["row_count"]
    return sizes


if __name__ == "__main__":
    sys.exit(main())
