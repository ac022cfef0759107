"""Joint document/column representation learning.

Mini-batches partition the training set's DEs; per document row we
aggregate positive columns into one mean encoding and hard negatives
(close to the anchor in the current output space) into another, yielding
one triplet per qualifying document. A small feed-forward net maps the
200-dim input encoding (metadata || content) to a unit 100-dim joint
embedding under the margin loss max(0, beta + d_pos - d_neg).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EngineConfig
from .errors import NoTriplets, NonFiniteLoss
from .nnet import xavier_uniform
from .profiler import ProfileStore
from .weaklabel import TrainingPair


def input_encoding(store: ProfileStore, de_id: str) -> np.ndarray:
    solo = store.bundles[de_id].solo
    return np.concatenate([solo.metadata_vec, solo.content_vec])


@dataclass
class MiniBatch:
    docs: tuple[str, ...]
    cols: tuple[str, ...]
    relatedness: np.ndarray      # (len(docs), len(cols))


def make_mini_batches(
    training_set: list[TrainingPair],
    batch_fraction: float,
    seed: int,
) -> list[MiniBatch]:
    docs = sorted({p.doc for p in training_set})
    cols = sorted({p.col for p in training_set})
    rel = {(p.doc, p.col): p.relatedness for p in training_set}
    rng = np.random.default_rng(seed)
    doc_order = [docs[i] for i in rng.permutation(len(docs))]
    col_order = [cols[i] for i in rng.permutation(len(cols))]
    m = max(1, round(batch_fraction * len(docs)))
    n = max(1, round(batch_fraction * len(cols)))
    n_batches = max(math.ceil(len(docs) / m), math.ceil(len(cols) / n))
    batches = []
    for i in range(n_batches):
        batch_docs = tuple(doc_order[i * m : (i + 1) * m])
        batch_cols = tuple(col_order[i * n : (i + 1) * n])
        matrix = np.array(
            [[rel.get((d, c), 0.0) for c in batch_cols] for d in batch_docs]
        ).reshape(len(batch_docs), len(batch_cols))
        batches.append(MiniBatch(batch_docs, batch_cols, matrix))
    return batches


@dataclass
class Triplet:
    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray


def triplet_loss(anchor_out: np.ndarray, pos_out: np.ndarray, neg_out: np.ndarray,
                 beta: float) -> float:
    d_pos = float(np.linalg.norm(anchor_out - pos_out))
    d_neg = float(np.linalg.norm(anchor_out - neg_out))
    # grouping the difference keeps the d_pos == d_neg boundary at exactly beta
    return max(0.0, beta + (d_pos - d_neg))


class JointModel:
    """200 -> 150 -> 100 with tanh hidden and L2-normalized output."""

    def __init__(self, dim_in: int = 200, hidden: int = 150, dim_out: int = 100,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.dims = (dim_in, hidden, dim_out)
        self.w1 = xavier_uniform(rng, dim_in, hidden)
        self.b1 = np.zeros(hidden)
        self.w2 = xavier_uniform(rng, hidden, dim_out)
        self.b2 = np.zeros(dim_out)

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: np.ndarray) -> np.ndarray:
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        h = np.tanh(x2 @ self.w1 + self.b1)
        z = h @ self.w2 + self.b2
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        out = z / np.maximum(norms, 1e-12)
        return out[0] if single else out

    def _forward_cached(self, x: np.ndarray):
        h = np.tanh(x @ self.w1 + self.b1)
        z = h @ self.w2 + self.b2
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        out = z / np.maximum(norms, 1e-12)
        return h, z, norms, out

    def _backward(self, x, h, z, norms, out, d_out):
        """Backprop through normalize -> linear -> tanh -> linear."""
        dz = (d_out - out * np.sum(d_out * out, axis=1, keepdims=True)) / norms
        dw2 = h.T @ dz
        db2 = dz.sum(axis=0)
        dh = dz @ self.w2.T
        dpre = dh * (1.0 - h * h)
        dw1 = x.T @ dpre
        db1 = dpre.sum(axis=0)
        return [dw1, db1, dw2, db2]

    def batch_loss_and_grads(self, triplets: list[Triplet], beta: float):
        """Mean triplet loss over the batch and its weight gradients."""
        t = len(triplets)
        anchors = np.stack([tr.anchor for tr in triplets])
        positives = np.stack([tr.positive for tr in triplets])
        negatives = np.stack([tr.negative for tr in triplets])
        ca = self._forward_cached(anchors)
        cp = self._forward_cached(positives)
        cn = self._forward_cached(negatives)
        a_out, p_out, n_out = ca[3], cp[3], cn[3]
        diff_p = a_out - p_out
        diff_n = a_out - n_out
        d_pos = np.linalg.norm(diff_p, axis=1)
        d_neg = np.linalg.norm(diff_n, axis=1)
        margins = beta + (d_pos - d_neg)
        active = margins > 0
        loss = float(np.mean(np.maximum(margins, 0.0)))
        scale = active.astype(float) / t
        safe_pos = np.maximum(d_pos, 1e-12)[:, None]
        safe_neg = np.maximum(d_neg, 1e-12)[:, None]
        g_pos = diff_p / safe_pos * scale[:, None]
        g_neg = diff_n / safe_neg * scale[:, None]
        d_a = g_pos - g_neg
        d_p = -g_pos
        d_n = g_neg
        grads = self._backward(anchors, *ca[:3], ca[3], d_a)
        for g, extra in zip(grads, self._backward(positives, *cp[:3], cp[3], d_p)):
            g += extra
        for g, extra in zip(grads, self._backward(negatives, *cn[:3], cn[3], d_n)):
            g += extra
        return loss, grads

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "JointModel":
        model = cls(*data["dims"])
        model.w1 = np.array(data["w1"])
        model.b1 = np.array(data["b1"])
        model.w2 = np.array(data["w2"])
        model.b2 = np.array(data["b2"])
        return model


def generate_triplets(
    batch: MiniBatch,
    pos_threshold: float,
    hard_cutoff: str,
    model: JointModel,
    encodings: dict[str, np.ndarray],
) -> list[Triplet]:
    """Hard modes emit at most one aggregated triplet per document row;
    "all" emits every positive x negative combination."""
    triplets: list[Triplet] = []
    if not batch.docs or not batch.cols:
        return triplets
    col_enc = np.stack([encodings[c] for c in batch.cols])
    col_out = model.forward(col_enc) if hard_cutoff != "all" else None
    for i, doc in enumerate(batch.docs):
        rel = batch.relatedness[i]
        pos_mask = rel >= pos_threshold
        neg_mask = ~pos_mask
        if not pos_mask.any() or not neg_mask.any():
            continue
        anchor = encodings[doc]
        if hard_cutoff == "all":
            for pi in np.flatnonzero(pos_mask):
                for ni in np.flatnonzero(neg_mask):
                    triplets.append(Triplet(anchor, col_enc[pi], col_enc[ni]))
            continue
        anchor_out = model.forward(anchor)
        neg_idx = np.flatnonzero(neg_mask)
        dists = np.linalg.norm(col_out[neg_idx] - anchor_out, axis=1)
        if hard_cutoff == "avg":
            cutoff = float(np.mean(dists))
        elif hard_cutoff == "median":
            cutoff = float(np.median(dists))
        else:
            raise ValueError(f"unknown hard_cutoff mode: {hard_cutoff}")
        hard = neg_idx[dists <= cutoff]
        if hard.size == 0:
            continue
        positive = col_enc[pos_mask].mean(axis=0)
        negative = col_enc[hard].mean(axis=0)
        triplets.append(Triplet(anchor, positive, negative))
    return triplets


@dataclass
class TrainResult:
    model: JointModel
    history: list[tuple[int, float, int]]     # (epoch, mean loss, triplet count)
    converged_epoch: int


def _epoch_seed(seed: int, epoch: int) -> int:
    return (seed * 1_000_003 + epoch) % (2**63)


def train_joint_model(
    training_set: list[TrainingPair],
    config: EngineConfig,
    store: ProfileStore,
    encodings: dict[str, np.ndarray] | None = None,
    on_epoch=None,
) -> TrainResult:
    if not training_set:
        raise NoTriplets("empty training set")
    ids = sorted({p.doc for p in training_set} | {p.col for p in training_set})
    if encodings is None:
        encodings = {i: input_encoding(store, i) for i in ids}
    # a doc can anchor a triplet only with a positive and a negative column
    per_doc: dict[str, list[float]] = {}
    for p in training_set:
        per_doc.setdefault(p.doc, []).append(p.relatedness)
    thr = config.pos_threshold
    if not any(
        any(r >= thr for r in rels) and any(r < thr for r in rels)
        for rels in per_doc.values()
    ):
        raise NoTriplets("training set yields zero triplets")
    dim_in = len(next(iter(encodings.values())))
    model = JointModel(dim_in=dim_in, seed=config.seed)
    history: list[tuple[int, float, int]] = []
    converged = config.max_epochs
    window = 10
    for epoch in range(config.max_epochs):
        batches = make_mini_batches(
            training_set, config.batch_fraction, _epoch_seed(config.seed, epoch)
        )
        total_loss = 0.0
        total_triplets = 0
        for batch in batches:
            triplets = generate_triplets(
                batch, config.pos_threshold, config.hard_cutoff, model, encodings
            )
            if not triplets:
                continue
            loss, grads = model.batch_loss_and_grads(triplets, config.margin_beta)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"joint loss became {loss} at epoch {epoch}")
            for p, g in zip(model.params(), grads):
                p -= config.joint_lr * g
            total_loss += loss * len(triplets)
            total_triplets += len(triplets)
        if total_triplets == 0:
            # small fractions can leave an epoch's random batches without
            # any positive/negative row; resample next epoch
            continue
        epoch_loss = total_loss / total_triplets
        history.append((epoch, epoch_loss, total_triplets))
        if on_epoch is not None:
            on_epoch(epoch, model)
        # epoch losses are noisy at desk scale (few triplets per epoch), so
        # the consecutive-epoch rule is applied to windowed means
        if len(history) >= 2 * window:
            recent = float(np.mean([l for _, l, _ in history[-window:]]))
            older = float(np.mean([l for _, l, _ in history[-2 * window : -window]]))
            if abs(recent - older) < config.convergence_delta:
                converged = epoch
                break
    if not history:
        raise NoTriplets("no epoch produced any triplet")
    return TrainResult(model=model, history=history, converged_epoch=converged)


def embed_all(
    model: JointModel,
    store: ProfileStore,
    encodings: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Joint embeddings for every document and every cross-modal column."""
    from .corpus import DEKind

    targets = store.ids_of_kind(DEKind.DOCUMENT) + [
        c for c in store.ids_of_kind(DEKind.COLUMN)
        if "CrossModal" in store.bundles[c].tags
    ]
    out: dict[str, np.ndarray] = {}
    if not targets:
        return out
    if encodings is None:
        encodings = {i: input_encoding(store, i) for i in targets}
    matrix = np.stack([encodings[i] for i in targets])
    embedded = model.forward(matrix)
    for i, de in enumerate(targets):
        out[de] = embedded[i]
    return out


def save_joint_model(result: TrainResult, config: EngineConfig, path: str | Path) -> None:
    payload = result.model.to_dict()
    payload["seed"] = config.seed
    payload["config"] = {
        "margin_beta": config.margin_beta,
        "batch_fraction": config.batch_fraction,
        "pos_threshold": config.pos_threshold,
        "hard_cutoff": config.hard_cutoff,
        "joint_lr": config.joint_lr,
        "convergence_delta": config.convergence_delta,
        "max_epochs": config.max_epochs,
    }
    payload["converged_epoch"] = result.converged_epoch
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_joint_model(path: str | Path) -> JointModel:
    return JointModel.from_dict(json.loads(Path(path).read_text()))


def save_loss_history(history: list[tuple[int, float, int]], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "triplet_count"])
        for epoch, loss, count in history:
            writer.writerow([epoch, repr(loss), count])
