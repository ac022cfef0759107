"""Metrics, ground truth, a seeded synthetic-lake generator, and benchmark
runners.

The generator plants every relation the engine discovers: doc-to-table
links through per-table vocabularies, PK-FK links through star-schema key
columns, and unionable families through projections/selections of base
tables. At zero noise the planted truth is exactly recoverable by the
brute-force oracles, which is what the acceptance tests lean on.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DEKind, make_de_id
from .errors import EmptyTruth, InvalidSpec
from .porter import stem
from .text import STOPWORDS

TASKS = ("DocToTable", "SyntacticJoin", "PkFk", "Unionable")


# ---------------------------------------------------------------------------
# metrics

def precision_recall_at_k(result_ids: list[str], truth: set[str], k: int) -> tuple[float, float]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not truth:
        raise EmptyTruth("empty answer set")
    if not result_ids:
        return 0.0, 0.0
    top = result_ids[:k]
    hits = len(set(top) & truth)
    return hits / min(k, len(result_ids)), hits / len(truth)


def r_precision(result_ids: list[str], truth: set[str]) -> float:
    if not truth:
        raise EmptyTruth("empty answer set")
    p, _ = precision_recall_at_k(result_ids, truth, len(truth))
    return p


def compute_mqcr(links: list[tuple[str, str]], sizes: dict[str, int]) -> float:
    """Median of size(query)/size(answer) over ground-truth links."""
    if not links:
        raise EmptyTruth("no ground-truth links")
    ratios = []
    for q, c in links:
        denom = sizes.get(c, 0)
        if denom <= 0:
            continue
        ratios.append(sizes.get(q, 0) / denom)
    if not ratios:
        raise EmptyTruth("no resolvable link sizes")
    return float(np.median(ratios))


def relative_recall(
    per_measure_hits: dict[str, set[tuple[str, str]]],
) -> dict[str, dict[str, float]]:
    """Per-measure share of the union's true hits plus the fraction of
    queries answered (>= 1 true hit)."""
    if len(per_measure_hits) < 2:
        raise ValueError("relative recall needs at least two measures")
    union: set[tuple[str, str]] = set()
    for hits in per_measure_hits.values():
        union |= hits
    all_queries = {q for q, _ in union}
    out = {}
    for measure, hits in sorted(per_measure_hits.items()):
        rr = len(hits) / len(union) if union else 0.0
        answered = {q for q, _ in hits}
        frac = len(answered) / len(all_queries) if all_queries else 0.0
        out[measure] = {"relative_recall": rr, "queries_answered": frac}
    return out


# ---------------------------------------------------------------------------
# ground truth files

@dataclass
class GroundTruth:
    task: str
    entries: dict[str, set[str]]

    def links(self) -> list[tuple[str, str]]:
        return [(q, a) for q in sorted(self.entries) for a in sorted(self.entries[q])]


def save_ground_truth(truth: GroundTruth, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for q in sorted(truth.entries):
            fh.write(json.dumps({"query_id": q, "answers": sorted(truth.entries[q])}))
            fh.write("\n")


def load_ground_truth(path: str | Path, task: str = "") -> GroundTruth:
    entries: dict[str, set[str]] = {}
    text = Path(path).read_text()
    if str(path).endswith(".csv"):
        for row in csv.reader(text.splitlines()):
            if not row or row[0] == "query_id":
                continue
            entries.setdefault(row[0], set()).add(row[1])
    else:
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            entries.setdefault(d["query_id"], set()).update(d["answers"])
    return GroundTruth(task=task, entries=entries)


# ---------------------------------------------------------------------------
# synthetic lake generator

@dataclass
class SyntheticLakeSpec:
    seed: int = 0
    n_base_tables: int = 10
    rows_per_table: int = 80
    text_cols_per_table: int = 3
    numeric_cols_per_table: int = 1
    vocab_per_table: int = 30
    distractor_vocab: int = 150
    n_docs: int = 60
    doc_words: int = 40
    doc_table_affinity: float = 0.8
    title_hint_rate: float = 1.0
    meta_only_doc_fraction: float = 0.0   # docs linked by title, not content
    shared_pool_size: int = 0
    shared_vocab_fraction: float = 0.0
    n_fk_tables: int = 4
    fk_rows: int = 100
    fk_coverage: float = 0.7
    unionable_families: int = 2
    projections_per_family: int = 2
    projection_fraction: float = 0.5
    selection_fraction: float = 0.6
    rename_prob: float = 0.0
    rename_style: str = "suffix"        # "suffix" | "fresh"
    noise_rate: float = 0.0
    pk_duplicate_rate: float = 0.0
    pk_duplicate_tables: tuple[int, ...] = ()

    def validate(self) -> None:
        if self.n_base_tables < 1 or self.rows_per_table < 2:
            raise InvalidSpec("need at least one base table with two rows")
        if self.n_fk_tables > self.n_base_tables:
            raise InvalidSpec("more FK tables than base tables")
        if not 0 <= self.doc_table_affinity <= 1:
            raise InvalidSpec("doc_table_affinity must be in [0,1]")
        if self.unionable_families > self.n_base_tables:
            raise InvalidSpec("more unionable families than base tables")


_CONSONANTS = "bcdfghjklmnpqrtvwxz"
_VOWELS = "aeiou"


def _stable_word(rng: np.random.Generator) -> str:
    """Random pronounceable word that the stemmer leaves unchanged."""
    while True:
        n = int(rng.integers(2, 4))
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n)
        ) + _CONSONANTS[rng.integers(len(_CONSONANTS))]
        if word in STOPWORDS:
            continue
        if stem(word) == word:
            return word


def _vocab(rng: np.random.Generator, size: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < size:
        w = _stable_word(rng)
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


@dataclass
class GeneratedLake:
    root: Path
    truth_dir: Path
    table_ids: dict[str, str]              # table name -> DE id
    column_ids: dict[tuple[str, str], str]  # (table, column) -> DE id
    doc_ids: dict[str, str]                # doc file stem -> DE id
    truths: dict[str, GroundTruth]


def generate_synthetic_lake(spec: SyntheticLakeSpec, out_dir: str | Path) -> GeneratedLake:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    root = Path(out_dir)
    (root / "tables").mkdir(parents=True, exist_ok=True)
    (root / "docs").mkdir(parents=True, exist_ok=True)
    truth_dir = root / "truth"
    truth_dir.mkdir(parents=True, exist_ok=True)

    taken: set[str] = set()
    topics = _vocab(rng, spec.n_base_tables, taken)
    shared_pool = _vocab(rng, spec.shared_pool_size, taken) if spec.shared_pool_size else []
    table_vocabs = {}
    for t in topics:
        n_shared = int(spec.shared_vocab_fraction * spec.vocab_per_table) if shared_pool else 0
        own = _vocab(rng, spec.vocab_per_table - n_shared, taken)
        shared = (
            [shared_pool[j] for j in sorted(
                rng.choice(len(shared_pool), size=min(n_shared, len(shared_pool)),
                           replace=False).tolist())]
            if n_shared else []
        )
        table_vocabs[t] = own + shared
    distractors = _vocab(rng, spec.distractor_vocab, taken)

    tables: dict[str, list[list[str]]] = {}      # name -> rows (incl header)
    table_ids: dict[str, str] = {}
    column_ids: dict[tuple[str, str], str] = {}
    manifest: dict[str, dict] = {}

    def register_table(name: str, header: list[str], rows: list[list[str]]) -> None:
        tables[name] = [header] + rows
        rel = f"tables/{name}.csv"
        table_ids[name] = make_de_id(DEKind.TABLE, rel, name)
        for col in header:
            column_ids[(name, col)] = make_de_id(DEKind.COLUMN, rel, col)

    def corrupt(rows: list[list[str]]) -> list[list[str]]:
        if spec.noise_rate <= 0:
            return rows
        for row in rows:
            for j in range(len(row)):
                if rng.random() < spec.noise_rate:
                    row[j] = _stable_word(rng)
        return rows

    pk_values: dict[str, list[str]] = {}
    base_headers: dict[str, list[str]] = {}
    for i, topic in enumerate(topics):
        name = f"{topic}_catalog"
        key_col = f"{topic}_id"
        header = [key_col]
        header += [f"{topic}_attr{j}" for j in range(spec.text_cols_per_table)]
        header += [f"{topic}_value{j}" for j in range(spec.numeric_cols_per_table)]
        keys = [f"{topic}-{k:05d}" for k in range(spec.rows_per_table)]
        if spec.pk_duplicate_rate > 0 and i in spec.pk_duplicate_tables:
            # one extra duplicate pushes uniqueness strictly past the gate
            n_dup = int(spec.pk_duplicate_rate * len(keys)) + 1
            for d in range(n_dup):
                keys[-(d + 1)] = keys[d]
        pk_values[name] = keys
        vocab = table_vocabs[topic]
        rows = []
        for r in range(spec.rows_per_table):
            row = [keys[r]]
            for j in range(spec.text_cols_per_table):
                row.append(vocab[int(rng.integers(len(vocab)))])
            for j in range(spec.numeric_cols_per_table):
                lo = 100.0 * i
                row.append(f"{lo + float(rng.uniform(0, 50)):.2f}")
            rows.append(row)
        register_table(name, header, corrupt(rows))
        base_headers[name] = header

    pkfk_truth: dict[str, set[str]] = {}
    for i in range(spec.n_fk_tables):
        topic = topics[i]
        base_name = f"{topic}_catalog"
        name = f"{topic}_events"
        key_col = f"{topic}_id"
        header = [key_col, f"{topic}_detail", "event_value"]
        base_keys = sorted(set(pk_values[base_name]))
        n_used = max(1, int(spec.fk_coverage * len(base_keys)))
        used = [base_keys[j] for j in sorted(rng.choice(len(base_keys), n_used, replace=False).tolist())]
        vocab = table_vocabs[topic]
        rows = []
        for r in range(spec.fk_rows):
            rows.append([
                used[int(rng.integers(len(used)))],
                vocab[int(rng.integers(len(vocab)))],
                f"{float(rng.uniform(0, 1000)):.2f}",
            ])
        register_table(name, header, corrupt(rows))
        # duplicate-polluted PKs are not valid targets
        keys = pk_values[base_name]
        if len(set(keys)) / len(keys) >= 0.999:
            fk_id = column_ids[(name, key_col)]
            pk_id = column_ids[(base_name, key_col)]
            pkfk_truth.setdefault(fk_id, set()).add(pk_id)

    unionable_truth: dict[str, set[str]] = {}
    families: list[list[str]] = []
    for i in range(spec.unionable_families):
        topic = topics[i]
        base_name = f"{topic}_catalog"
        family = [base_name]
        header = base_headers[base_name]
        n_keep = max(2, math.ceil(spec.projection_fraction * len(header)))
        for p in range(spec.projections_per_family):
            proj_name = f"{topic}_proj{p}"
            keep_idx = sorted(
                rng.choice(len(header), size=n_keep, replace=False).tolist()
            )
            # make sure at least one non-key text column survives
            if all(header[j].endswith("_id") or "value" in header[j] for j in keep_idx):
                keep_idx[-1] = 1
                keep_idx = sorted(set(keep_idx))
            body = tables[base_name][1:]
            n_rows = max(2, int(spec.selection_fraction * len(body)))
            row_idx = sorted(rng.choice(len(body), size=n_rows, replace=False).tolist())
            new_header = []
            for idx_pos, j in enumerate(keep_idx):
                col = header[j]
                if rng.random() < spec.rename_prob:
                    if spec.rename_style == "fresh":
                        col = f"field{idx_pos}x{p}"
                    else:
                        col = f"{col}_v2"
                new_header.append(col)
            rows = [[body[r][j] for j in keep_idx] for r in row_idx]
            register_table(proj_name, new_header, rows)
            family.append(proj_name)
        families.append(family)
        for member in family:
            others = {table_ids[m] for m in family if m != member}
            unionable_truth[table_ids[member]] = others

    for name in sorted(tables):
        with (root / "tables" / f"{name}.csv").open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerows(tables[name])

    doc_truth: dict[str, set[str]] = {}
    doc_ids: dict[str, str] = {}
    doc_col_links: list[tuple[str, str]] = []
    for d in range(spec.n_docs):
        i = d % spec.n_base_tables
        topic = topics[i]
        table_name = f"{topic}_catalog"
        vocab = table_vocabs[topic]
        meta_only = rng.random() < spec.meta_only_doc_fraction
        affinity = 0.0 if meta_only else spec.doc_table_affinity
        words = []
        for _ in range(spec.doc_words):
            if rng.random() < affinity:
                words.append(vocab[int(rng.integers(len(vocab)))])
            else:
                words.append(distractors[int(rng.integers(len(distractors)))])
        sentences = []
        for s in range(0, len(words), 8):
            chunk = words[s : s + 8]
            sentences.append(" ".join(chunk).capitalize() + ".")
        stem_name = f"doc_{d:04d}"
        rel = f"docs/{stem_name}.txt"
        (root / "docs" / f"{stem_name}.txt").write_text(" ".join(sentences) + "\n")
        hinted = rng.random() < spec.title_hint_rate
        title = f"{topic} notes {d}" if hinted else f"notes {d}"
        manifest[rel] = {"title": title, "source": "synthetic"}
        doc_id = make_de_id(DEKind.DOCUMENT, rel, "0")
        doc_ids[stem_name] = doc_id
        doc_truth[doc_id] = {table_ids[table_name]}
        for j in range(spec.text_cols_per_table):
            doc_col_links.append((doc_id, column_ids[(table_name, f"{topic}_attr{j}")]))

    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))

    join_truth = _brute_force_join_truth(tables, column_ids)

    truths = {
        "DocToTable": GroundTruth("DocToTable", doc_truth),
        "SyntacticJoin": GroundTruth("SyntacticJoin", join_truth),
        "PkFk": GroundTruth("PkFk", pkfk_truth),
        "Unionable": GroundTruth("Unionable", unionable_truth),
    }
    for task, truth in truths.items():
        save_ground_truth(truth, truth_dir / f"{_task_file(task)}.jsonl")
    (truth_dir / "doc_column_links.jsonl").write_text(
        "".join(json.dumps({"query_id": q, "answers": [c]}) + "\n" for q, c in doc_col_links)
    )
    (root / "lake_spec.json").write_text(json.dumps(asdict(spec), sort_keys=True, indent=1))
    return GeneratedLake(
        root=root,
        truth_dir=truth_dir,
        table_ids=table_ids,
        column_ids=column_ids,
        doc_ids=doc_ids,
        truths=truths,
    )


def _task_file(task: str) -> str:
    return {
        "DocToTable": "doc_to_table",
        "SyntacticJoin": "syntactic_join",
        "PkFk": "pkfk",
        "Unionable": "unionable",
    }[task]


def _brute_force_join_truth(
    tables: dict[str, list[list[str]]],
    column_ids: dict[tuple[str, str], str],
    threshold: float = 0.5,
) -> dict[str, set[str]]:
    """Exact two-directional containment over all cross-table column pairs."""
    col_values: dict[str, set[str]] = {}
    col_table: dict[str, str] = {}
    for (table, col), de_id in column_ids.items():
        header = tables[table][0]
        j = header.index(col)
        values = {row[j].lower() for row in tables[table][1:] if row[j] != ""}
        col_values[de_id] = values
        col_table[de_id] = table
    truth: dict[str, set[str]] = {}
    ids = sorted(col_values)
    for a in ids:
        va = col_values[a]
        if not va:
            continue
        for b in ids:
            if a == b or col_table[a] == col_table[b]:
                continue
            vb = col_values[b]
            if not vb:
                continue
            inter = len(va & vb)
            score = max(inter / len(va), inter / len(vb))
            if score >= threshold:
                truth.setdefault(a, set()).add(b)
    return truth


# ---------------------------------------------------------------------------
# experiment presets and convergence machinery

def acceptance_lake_spec(seed: int, fast: bool = False) -> SyntheticLakeSpec:
    """Planted lake for the joint-vs-solo comparison: well-separated
    content vocabularies plus a quarter of documents whose content is pure
    distractor noise and whose only link to their table is the title."""
    return SyntheticLakeSpec(
        seed=seed,
        n_base_tables=50,
        rows_per_table=40 if fast else 60,
        text_cols_per_table=3,
        numeric_cols_per_table=1,
        vocab_per_table=24,
        distractor_vocab=400,
        n_docs=300,
        doc_words=25,
        doc_table_affinity=0.85,
        title_hint_rate=1.0,
        meta_only_doc_fraction=0.25,
        n_fk_tables=10,
        fk_rows=60,
        unionable_families=2,
    )


def probe_triplet_set(training_set, store, config, probe_seed: int = 9999,
                      cap: int = 2000):
    """Fixed all-combinations triplets over the full training matrix; a
    shared yardstick for comparing the two triplet-generation modes."""
    from .jointrep import generate_triplets, input_encoding, make_mini_batches

    encodings = {
        de: input_encoding(store, de)
        for de in {p.doc for p in training_set} | {p.col for p in training_set}
    }
    batches = make_mini_batches(training_set, 1.0, probe_seed)
    triplets = []
    for batch in batches:
        triplets.extend(
            generate_triplets(batch, config.pos_threshold, "all", None, encodings)
        )
    if len(triplets) > cap:
        idx = np.linspace(0, len(triplets) - 1, cap).astype(int)
        triplets = [triplets[i] for i in idx]
    return triplets


def probe_loss(model, triplets, beta: float) -> float:
    anchors = np.stack([t.anchor for t in triplets])
    pos = np.stack([t.positive for t in triplets])
    neg = np.stack([t.negative for t in triplets])
    a, p, n = model.forward(anchors), model.forward(pos), model.forward(neg)
    d_pos = np.linalg.norm(a - p, axis=1)
    d_neg = np.linalg.norm(a - n, axis=1)
    return float(np.mean(np.maximum(0.0, beta + d_pos - d_neg)))


def compare_hard_sampling(training_set, store, config, batch_fraction: float = 0.25,
                          max_epochs: int = 300):
    """Train both modes; return (epochs_hard_to_reach_target, epochs_all,
    target_probe_loss, hard_curve, all_curve)."""
    from dataclasses import replace

    from .jointrep import train_joint_model

    probes = probe_triplet_set(training_set, store, config)
    curves: dict[str, list[float]] = {}

    def run(mode: str):
        cfg = replace(config, hard_cutoff=mode, batch_fraction=batch_fraction,
                      max_epochs=max_epochs, convergence_delta=1e-4)
        curve: list[float] = []

        def on_epoch(epoch, model):
            curve.append(probe_loss(model, probes, cfg.margin_beta))

        train_joint_model(training_set, cfg, store, on_epoch=on_epoch)
        curves[mode] = curve

    run("all")
    run("avg")
    target = curves["all"][-1]
    epochs_all = len(curves["all"])
    epochs_hard = next(
        (i + 1 for i, loss in enumerate(curves["avg"]) if loss <= target), None
    )
    return epochs_hard, epochs_all, target, curves["avg"], curves["all"]


# ---------------------------------------------------------------------------
# benchmark runner

@dataclass
class BenchmarkReport:
    task: str
    k_list: list[int]
    per_k: dict[int, dict[str, float]]
    r_precision_mean: float
    mqcr: float | None
    per_query: list[dict]
    runtime_seconds: float | None = field(default=None, compare=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "task": self.task,
                "k_list": self.k_list,
                "per_k": {str(k): v for k, v in self.per_k.items()},
                "r_precision_mean": self.r_precision_mean,
                "mqcr": self.mqcr,
                "per_query": self.per_query,
            },
            sort_keys=True,
            indent=1,
        )

    def to_csv(self) -> str:
        lines = ["k,precision,recall"]
        for k in self.k_list:
            lines.append(
                f"{k},{self.per_k[k]['precision']!r},{self.per_k[k]['recall']!r}"
            )
        return "\n".join(lines) + "\n"


def run_benchmark(
    engine,
    truth: GroundTruth,
    task: str,
    k_list: list[int],
    sizes: dict[str, int] | None = None,
) -> BenchmarkReport:
    """One query per truth entry through the engine's discovery surface."""
    import time

    if not truth.entries:
        raise EmptyTruth("benchmark truth is empty")
    start = time.perf_counter()
    max_k = max(max(k_list), max(len(v) for v in truth.entries.values()))
    per_query = []
    for query_id in sorted(truth.entries):
        answers = truth.entries[query_id]
        ranked = engine.benchmark_query(task, query_id, max_k)
        row = {"query": query_id, "truth_size": len(answers)}
        for k in k_list:
            p, r = precision_recall_at_k(ranked, answers, k)
            row[f"p@{k}"] = p
            row[f"r@{k}"] = r
        row["r_precision"] = r_precision(ranked, answers)
        per_query.append(row)
    per_k = {
        k: {
            "precision": float(np.mean([q[f"p@{k}"] for q in per_query])),
            "recall": float(np.mean([q[f"r@{k}"] for q in per_query])),
        }
        for k in k_list
    }
    mqcr = None
    if sizes:
        try:
            mqcr = compute_mqcr(truth.links(), sizes)
        except EmptyTruth:
            mqcr = None
    return BenchmarkReport(
        task=task,
        k_list=list(k_list),
        per_k=per_k,
        r_precision_mean=float(np.mean([q["r_precision"] for q in per_query])),
        mqcr=mqcr,
        per_query=per_query,
        runtime_seconds=time.perf_counter() - start,
    )
