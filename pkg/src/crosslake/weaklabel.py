"""Weakly supervised training-set generation.

Index probes act as labeling functions over a sampled doc x column
universe; a conditionally-independent generative model turns their sparse
agreement structure into probabilistic labels; a small discriminator
generalizes those labels into a relatedness degree for every sampled pair.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EngineConfig
from .corpus import DEKind
from .errors import (
    DegenerateMatrix,
    EmptyModality,
    MissingIndex,
    NonFiniteLoss,
)
from .indexes import (
    build_containment_index,
    build_text_index,
    build_vector_index,
    containment_query,
    text_search,
    vector_query,
)
from .nnet import sigmoid, softplus, xavier_uniform
from .profiler import ProfileStore

logger = logging.getLogger(__name__)

LF_SEMANTIC = "semantic_solo"
LF_CONTAINMENT = "containment"
LF_CONTENT = "content_bm25"
LF_METADATA = "metadata_bm25"
ALL_LFS = (LF_SEMANTIC, LF_CONTAINMENT, LF_CONTENT, LF_METADATA)


@dataclass
class PairSample:
    docs: tuple[str, ...]
    cols: tuple[str, ...]
    seed: int
    sample_fraction: float

    @property
    def universe_size(self) -> int:
        return len(self.docs) * len(self.cols)


def sample_pairs(
    doc_ids: list[str],
    col_ids: list[str],
    sample_fraction: float,
    seed: int,
) -> PairSample:
    """Uniform without-replacement sample of ceil(f*n) from each modality."""
    docs = sorted(doc_ids)
    cols = sorted(col_ids)
    if not docs or not cols:
        raise EmptyModality("need at least one document and one cross-modal column")
    rng = np.random.default_rng(seed)
    n_docs = math.ceil(sample_fraction * len(docs))
    n_cols = math.ceil(sample_fraction * len(cols))
    picked_docs = sorted(rng.choice(len(docs), size=n_docs, replace=False).tolist())
    picked_cols = sorted(rng.choice(len(cols), size=n_cols, replace=False).tolist())
    return PairSample(
        docs=tuple(docs[i] for i in picked_docs),
        cols=tuple(cols[i] for i in picked_cols),
        seed=seed,
        sample_fraction=sample_fraction,
    )


@dataclass
class LabelMatrix:
    lf_ids: tuple[str, ...]
    votes: dict[tuple[str, str], frozenset[str]] = field(default_factory=dict)
    k_probe: int = 10

    def voted_pairs(self) -> list[tuple[str, str]]:
        return sorted(self.votes)


@dataclass
class SampleIndexes:
    """The four LF probe structures, restricted to the sampled columns."""

    vector: object | None
    containment: object | None
    content: object | None
    metadata: object | None


def build_sample_indexes(store: ProfileStore, sample: PairSample, config: EngineConfig) -> SampleIndexes:
    col_bundles = {c: store.bundles[c] for c in sample.cols}
    vectors = {
        c: b.solo.content_vec for c, b in col_bundles.items() if not b.solo.content_zero
    }
    vec_idx = build_vector_index(vectors, "SoloSemantic") if vectors else None
    sigs = {c: b.minhash for c, b in col_bundles.items() if b.minhash is not None}
    cont_idx = (
        build_containment_index(
            sigs,
            threshold=config.lf_floor_containment,
            partition_ratio=config.lsh_partition_ratio,
            target_collision=config.lsh_target_collision,
        )
        if sigs else None
    )
    content_bags = {c: list(b.content_counts) for c, b in col_bundles.items()}
    content_idx = (
        build_text_index(content_bags, "content", config.bm25_k1, config.bm25_b)
        if any(content_bags.values()) else None
    )
    meta_bags = {
        c: _count_terms(b.metadata_tokens) for c, b in col_bundles.items()
    }
    meta_idx = (
        build_text_index(meta_bags, "metadata", config.bm25_k1, config.bm25_b)
        if any(meta_bags.values()) else None
    )
    return SampleIndexes(vec_idx, cont_idx, content_idx, meta_idx)


def _count_terms(tokens) -> list[tuple[str, int]]:
    counts: dict[str, int] = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    return sorted(counts.items())


def apply_labeling_functions(
    sample: PairSample,
    store: ProfileStore,
    indexes: SampleIndexes,
    config: EngineConfig,
) -> LabelMatrix:
    """Each LF probes its index per document; sampled columns in the top-k
    and above the LF's floor get a vote of 1, everything else abstains."""
    if indexes.vector is None and indexes.containment is None and \
            indexes.content is None and indexes.metadata is None:
        raise MissingIndex("no sample indexes could be built")
    k = config.k_probe
    matrix = LabelMatrix(lf_ids=ALL_LFS, k_probe=k)
    sampled_cols = set(sample.cols)

    def vote(doc: str, col: str, lf: str) -> None:
        key = (doc, col)
        matrix.votes[key] = matrix.votes.get(key, frozenset()) | {lf}

    for doc in sample.docs:
        bundle = store.bundles[doc]
        if indexes.vector is not None and not bundle.solo.content_zero:
            for h in vector_query(indexes.vector, bundle.solo.content_vec, k):
                if h.de in sampled_cols and h.score >= config.lf_floor_cosine:
                    vote(doc, h.de, LF_SEMANTIC)
        if indexes.containment is not None and bundle.minhash is not None:
            hits = containment_query(indexes.containment, bundle.minhash, "topk", k)
            for h in hits:
                if h.de in sampled_cols and h.score >= config.lf_floor_containment:
                    vote(doc, h.de, LF_CONTAINMENT)
        if indexes.content is not None and bundle.content_counts:
            query = [t for t, c in bundle.content_counts for _ in range(c)]
            hits = text_search(indexes.content, query, k)
            floor = max(config.lf_floor_bm25,
                        config.lf_bm25_rel_floor * hits[0].score if hits else 0.0)
            for h in hits:
                if h.de in sampled_cols and h.score > config.lf_floor_bm25 \
                        and h.score >= floor:
                    vote(doc, h.de, LF_CONTENT)
        if indexes.metadata is not None and bundle.metadata_tokens:
            hits = text_search(indexes.metadata, list(bundle.metadata_tokens), k)
            floor = max(config.lf_floor_bm25,
                        config.lf_bm25_rel_floor * hits[0].score if hits else 0.0)
            for h in hits:
                if h.de in sampled_cols and h.score > config.lf_floor_bm25 \
                        and h.score >= floor:
                    vote(doc, h.de, LF_METADATA)
    matrix.votes = dict(sorted(matrix.votes.items()))
    return matrix


# ---------------------------------------------------------------------------
# gold labels and LF pruning

@dataclass
class GoldLabels:
    entries: dict[tuple[str, str], int]

    @classmethod
    def from_csv(cls, path: str | Path) -> "GoldLabels":
        entries = {}
        with Path(path).open(newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0] == "doc_id":
                    continue
                entries[(row[0], row[1])] = int(row[2])
        return cls(entries)


def lf_accuracies_on_gold(
    matrix: LabelMatrix,
    sample: PairSample,
    gold: GoldLabels,
) -> tuple[dict[str, float], int]:
    """Accuracy per LF on gold-covered pairs of the sampled universe;
    abstain counts as a 0 prediction."""
    docs, cols = set(sample.docs), set(sample.cols)
    covered = [
        (pair, label)
        for pair, label in sorted(gold.entries.items())
        if pair[0] in docs and pair[1] in cols
    ]
    acc = {}
    for lf in matrix.lf_ids:
        correct = sum(
            (1 if lf in matrix.votes.get(pair, frozenset()) else 0) == label
            for pair, label in covered
        )
        acc[lf] = correct / len(covered) if covered else 0.0
    return acc, len(covered)


def prune_lfs_with_gold(
    matrix: LabelMatrix,
    sample: PairSample,
    gold: GoldLabels | None,
    config: EngineConfig,
) -> tuple[str, ...]:
    """Deactivate LFs whose gold accuracy falls below rel_threshold times
    the best LF's accuracy. Insufficient gold keeps everything active."""
    if gold is None:
        return matrix.lf_ids
    acc, covered = lf_accuracies_on_gold(matrix, sample, gold)
    if covered < config.min_gold_pairs:
        logger.warning(
            "gold labels cover only %d sampled pairs (< %d); keeping all LFs",
            covered, config.min_gold_pairs,
        )
        return matrix.lf_ids
    best = max(acc.values())
    active = tuple(
        lf for lf in matrix.lf_ids if acc[lf] >= config.rel_threshold * best
    )
    return active


# ---------------------------------------------------------------------------
# generative label model (EM over conditionally independent LFs)

@dataclass
class LabelModel:
    lf_accuracy: dict[str, float]
    class_prior: float


def fit_label_model(
    matrix: LabelMatrix,
    active_lfs: tuple[str, ...],
    max_iters: int = 500,
    tol: float = 1e-9,
) -> tuple[LabelModel, dict[tuple[str, str], float]]:
    """EM for latent pair relatedness over conditionally independent LFs.

    Each LF fires with probability a_i on related pairs and b_i on
    unrelated ones (a Bernoulli mixture over the fire/abstain pattern);
    the reported accuracy is P(implied vote == y) with abstain read as a
    0 vote, matching the gold-pruning convention. Pairs where no active
    LF fired are labeled 0 downstream.
    """
    pairs = [
        p for p in matrix.voted_pairs()
        if matrix.votes[p] & set(active_lfs)
    ]
    if len(active_lfs) == 0:
        raise DegenerateMatrix("no active labeling functions")
    if len(active_lfs) == 1:
        lf = active_lfs[0]
        labels = {p: 1.0 for p in pairs}
        return LabelModel({lf: 1.0}, class_prior=0.5), labels
    if not pairs:
        raise DegenerateMatrix("label matrix has no votes from active LFs")

    fired = np.array(
        [[lf in matrix.votes[p] for lf in active_lfs] for p in pairs], dtype=float
    )
    patterns = {tuple(row) for row in fired.astype(bool)}
    if len(patterns) == 1:
        logger.warning("all vote patterns identical; using majority-vote fallback")
        frac = fired[0].mean()
        label = 1.0 if frac > 0.5 else 0.0
        return (
            LabelModel({lf: 0.5 for lf in active_lfs}, class_prior=label),
            {p: label for p in pairs},
        )

    lo, hi = 1e-4, 1 - 1e-4
    a = np.full(len(active_lfs), 0.7)   # P(fire | y=1)
    b = np.full(len(active_lfs), 0.3)   # P(fire | y=0)
    prior = 0.5
    gamma = np.full(len(pairs), prior)
    for _ in range(max_iters):
        log_pos = np.log(prior) + fired @ np.log(a) + (1 - fired) @ np.log1p(-a)
        log_neg = np.log1p(-prior) + fired @ np.log(b) + (1 - fired) @ np.log1p(-b)
        m = np.maximum(log_pos, log_neg)
        new_gamma = np.exp(log_pos - m) / (np.exp(log_pos - m) + np.exp(log_neg - m))
        pos_mass = new_gamma.sum()
        neg_mass = len(pairs) - pos_mass
        new_a = np.clip((fired * new_gamma[:, None]).sum(axis=0) / max(pos_mass, 1e-9), lo, hi)
        new_b = np.clip((fired * (1 - new_gamma)[:, None]).sum(axis=0) / max(neg_mass, 1e-9), lo, hi)
        new_prior = float(np.clip(new_gamma.mean(), lo, hi))
        delta = max(
            float(np.max(np.abs(new_a - a))),
            float(np.max(np.abs(new_b - b))),
            abs(new_prior - prior),
            float(np.max(np.abs(new_gamma - gamma))),
        )
        a, b, prior, gamma = new_a, new_b, new_prior, new_gamma
        if delta < tol:
            break
    accuracy = prior * a + (1 - prior) * (1 - b)
    model = LabelModel(
        {lf: float(acc) for lf, acc in zip(active_lfs, accuracy)}, class_prior=prior
    )
    labels = {p: float(g) for p, g in zip(pairs, gamma)}
    return model, labels


# ---------------------------------------------------------------------------
# discriminator

@dataclass
class TrainingPair:
    doc: str
    col: str
    relatedness: float


class RelatednessModel:
    """One-hidden-layer net (in -> hidden -> 1, tanh/sigmoid) trained with
    full-batch gradient descent on cross-entropy against soft labels."""

    def __init__(self, dim_in: int = 400, hidden: int = 128, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.w1 = xavier_uniform(rng, dim_in, hidden)
        self.b1 = np.zeros(hidden)
        self.w2 = xavier_uniform(rng, hidden, 1)
        self.b2 = np.zeros(1)

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = np.tanh(x @ self.w1 + self.b1)
        return (h @ self.w2 + self.b2).ravel()

    def predict(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.logits(x))

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray,
                       weights: np.ndarray | None = None):
        """Cross-entropy against soft labels; per-sample weights must sum
        to 1 (uniform when omitted)."""
        n = x.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights
        h_pre = x @ self.w1 + self.b1
        h = np.tanh(h_pre)
        z = (h @ self.w2 + self.b2).ravel()
        loss = float(np.sum(w * (softplus(z) - y * z)))
        dz = (w * (sigmoid(z) - y))[:, None]
        dw2 = h.T @ dz
        db2 = dz.sum(axis=0)
        dh = dz @ self.w2.T
        dpre = dh * (1.0 - h * h)
        dw1 = x.T @ dpre
        db1 = dpre.sum(axis=0)
        return loss, [dw1, db1, dw2, db2]

    def fit(self, x: np.ndarray, y: np.ndarray, lr: float, max_iters: int,
            loss_delta: float, weights: np.ndarray | None = None) -> list[float]:
        history = []
        prev = None
        for it in range(max_iters):
            loss, grads = self.loss_and_grads(x, y, weights)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"discriminator loss became {loss} at iter {it}")
            history.append(loss)
            for p, g in zip(self.params(), grads):
                p -= lr * g
            if prev is not None and abs(prev - loss) < loss_delta:
                break
            prev = loss
        return history


def class_balance_weights(y: np.ndarray) -> np.ndarray:
    """Half the total weight on positive label mass, half on negative;
    soft labels split their unit proportionally. Guards the positive class
    against the extreme scarcity that top-k probing produces."""
    pos_mass = float(y.sum())
    neg_mass = float(np.sum(1.0 - y))
    if pos_mass <= 0 or neg_mass <= 0:
        return np.full(len(y), 1.0 / len(y))
    return 0.5 * y / pos_mass + 0.5 * (1.0 - y) / neg_mass


def pair_features(store: ProfileStore, doc: str, col: str) -> np.ndarray:
    """Doc solo encoding (content||metadata) followed by column solo
    encoding (content||metadata): 4 x dim features."""
    d = store.bundles[doc].solo
    c = store.bundles[col].solo
    return np.concatenate([d.content_vec, d.metadata_vec, c.content_vec, c.metadata_vec])


def train_discriminator(
    sample: PairSample,
    labels: dict[tuple[str, str], float],
    store: ProfileStore,
    config: EngineConfig,
) -> tuple[RelatednessModel, list[TrainingPair], list[float]]:
    """Train on every sampled pair (label 0 where no LF fired) and emit the
    relatedness degree for the whole sampled universe."""
    pairs = [(d, c) for d in sample.docs for c in sample.cols]
    x = np.stack([pair_features(store, d, c) for d, c in pairs])
    y = np.array([labels.get(p, 0.0) for p in pairs])
    model = RelatednessModel(
        dim_in=x.shape[1], hidden=config.disc_hidden, seed=config.seed
    )
    weights = class_balance_weights(y) if config.disc_class_balance else None
    history = model.fit(x, y, config.disc_lr, config.disc_max_iters,
                        config.disc_loss_delta, weights=weights)
    preds = model.predict(x)
    training = [
        TrainingPair(doc=d, col=c, relatedness=float(p))
        for (d, c), p in zip(pairs, preds)
    ]
    return model, training, history


# ---------------------------------------------------------------------------
# end-to-end

@dataclass
class LabelingRun:
    sample: PairSample
    matrix: LabelMatrix
    active_lfs: tuple[str, ...]
    label_model: LabelModel
    labels: dict[tuple[str, str], float]
    training_set: list[TrainingPair]
    discriminator: RelatednessModel


def generate_training_set(
    store: ProfileStore,
    config: EngineConfig,
    gold: GoldLabels | None = None,
) -> LabelingRun:
    doc_ids = store.ids_of_kind(DEKind.DOCUMENT)
    col_ids = [
        c for c in store.ids_of_kind(DEKind.COLUMN)
        if "CrossModal" in store.bundles[c].tags
    ]
    sample = sample_pairs(doc_ids, col_ids, config.sample_fraction, config.seed)
    indexes = build_sample_indexes(store, sample, config)
    matrix = apply_labeling_functions(sample, store, indexes, config)
    active = prune_lfs_with_gold(matrix, sample, gold, config)
    label_model, labels = fit_label_model(matrix, active)
    discriminator, training, _ = train_discriminator(sample, labels, store, config)
    return LabelingRun(
        sample=sample,
        matrix=matrix,
        active_lfs=active,
        label_model=label_model,
        labels=labels,
        training_set=training,
        discriminator=discriminator,
    )


def save_training_set(pairs: list[TrainingPair], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for p in pairs:
            fh.write(json.dumps({"doc": p.doc, "col": p.col, "relatedness": p.relatedness}))
            fh.write("\n")


def load_training_set(path: str | Path) -> list[TrainingPair]:
    out = []
    with Path(path).open() as fh:
        for line in fh:
            d = json.loads(line)
            out.append(TrainingPair(d["doc"], d["col"], d["relatedness"]))
    return out
