import numpy as np
import pytest

from crosslake.config import EngineConfig
from crosslake.errors import EmptyModality, NonFiniteLoss
from crosslake.profiler import profile_corpus
from crosslake.weaklabel import (
    ALL_LFS,
    GoldLabels,
    LabelMatrix,
    PairSample,
    RelatednessModel,
    apply_labeling_functions,
    build_sample_indexes,
    fit_label_model,
    lf_accuracies_on_gold,
    prune_lfs_with_gold,
    sample_pairs,
    train_discriminator,
)


class TestSamplePairs:
    def test_counting(self):
        docs = [f"d{i:03d}" for i in range(100)]
        cols = [f"c{i:03d}" for i in range(200)]
        s = sample_pairs(docs, cols, 0.10, seed=1)
        assert len(s.docs) == 10 and len(s.cols) == 20
        assert s.universe_size == 200

    def test_full_fraction(self):
        docs, cols = ["d1", "d2"], ["c1", "c2", "c3"]
        s = sample_pairs(docs, cols, 1.0, seed=0)
        assert set(s.docs) == set(docs) and set(s.cols) == set(cols)

    def test_determinism(self):
        docs = [f"d{i}" for i in range(50)]
        cols = [f"c{i}" for i in range(50)]
        assert sample_pairs(docs, cols, 0.2, 9) == sample_pairs(docs, cols, 0.2, 9)

    def test_empty_modality(self):
        with pytest.raises(EmptyModality):
            sample_pairs([], ["c"], 0.5, 0)


class TestLabelingFunctions:
    def test_identical_doc_and_column_all_lfs_vote(self, tmp_path):
        # one column whose values equal the doc's tokens, with matching metadata
        from tests.conftest import write_lake
        from crosslake.corpus import load_lake

        cfg = EngineConfig(seed=5, df_cutoff=1.0, categorical_ratio=0.01)
        words = ["rotor", "flang", "piston", "clutch", "gasket", "manifold"]
        rows = "\n".join(words)
        root = write_lake(
            tmp_path / "lake",
            {"rotor.csv": f"flang\n{rows}\n"},
            {"doc0.txt": " ".join(words)},
            manifest={"docs/doc0.txt": {"title": "rotor flang", "source": ""}},
        )
        corpus = load_lake(root, cfg)
        store = profile_corpus(corpus, cfg)
        doc_id = sorted(corpus.documents)[0]
        col_id = sorted(corpus.columns)[0]
        sample = PairSample(docs=(doc_id,), cols=(col_id,), seed=0, sample_fraction=1.0)
        indexes = build_sample_indexes(store, sample, cfg)
        matrix = apply_labeling_functions(sample, store, indexes, cfg)
        assert matrix.votes[(doc_id, col_id)] == frozenset(ALL_LFS)

    def test_unrelated_doc_absent_from_matrix(self, tiny_lake):
        corpus, cfg, _ = tiny_lake
        store = profile_corpus(corpus, cfg)
        doc_ids = sorted(corpus.documents)
        col_ids = sorted(corpus.columns)
        sample = PairSample(docs=tuple(doc_ids), cols=tuple(col_ids), seed=0,
                            sample_fraction=1.0)
        indexes = build_sample_indexes(store, sample, cfg)
        matrix = apply_labeling_functions(sample, store, indexes, cfg)
        weather_doc = next(
            d for d in doc_ids if "weather" in corpus.documents[d].title
        )
        # the off-topic doc shares no values with any instrument column
        content_votes = [
            p for p, lfs in matrix.votes.items()
            if p[0] == weather_doc and ("containment" in lfs or "content_bm25" in lfs)
        ]
        assert content_votes == []

    def test_sparsity_bound(self, tiny_lake):
        corpus, cfg, _ = tiny_lake
        store = profile_corpus(corpus, cfg)
        sample = PairSample(
            docs=tuple(sorted(corpus.documents)),
            cols=tuple(sorted(corpus.columns)),
            seed=0, sample_fraction=1.0,
        )
        indexes = build_sample_indexes(store, sample, cfg)
        matrix = apply_labeling_functions(sample, store, indexes, cfg)
        assert len(matrix.votes) <= len(sample.docs) * cfg.k_probe * len(ALL_LFS)


def synthetic_matrix(accs_votes):
    """Build a LabelMatrix directly from per-LF voted pair sets."""
    matrix = LabelMatrix(lf_ids=tuple(accs_votes))
    for lf, pairs in accs_votes.items():
        for p in pairs:
            matrix.votes[p] = matrix.votes.get(p, frozenset()) | {lf}
    matrix.votes = dict(sorted(matrix.votes.items()))
    return matrix


class TestPruning:
    def _setup(self):
        # 20 gold pairs, 10 true / 10 false
        docs = [f"d{i}" for i in range(20)]
        pairs = [(d, "c0") for d in docs]
        gold = GoldLabels({p: 1 if i < 10 else 0 for i, p in enumerate(pairs)})
        return pairs, gold

    def test_relative_rule(self):
        pairs, gold = self._setup()
        true_pairs = pairs[:10]
        false_pairs = pairs[10:]
        votes = {
            "lf_a": set(true_pairs[:9] + false_pairs[:1]),   # acc: 9 TP + 9 TN = 18/20 = 0.9
            "lf_b": set(true_pairs[:8] + false_pairs[:2]),   # 8 + 8 = 16/20 = 0.8
            "lf_c": set(true_pairs[:9] + false_pairs[:2]),   # 9 + 8 = 17/20 = 0.85
            "lf_d": set(true_pairs[:3] + false_pairs[:7]),   # 3 + 3 = 6/20 = 0.3
        }
        matrix = synthetic_matrix(votes)
        sample = PairSample(docs=tuple(f"d{i}" for i in range(20)), cols=("c0",),
                            seed=0, sample_fraction=1.0)
        cfg = EngineConfig(rel_threshold=0.5, min_gold_pairs=20)
        acc, covered = lf_accuracies_on_gold(matrix, sample, gold)
        assert acc == {"lf_a": 0.9, "lf_b": 0.8, "lf_c": 0.85, "lf_d": 0.3}
        active = prune_lfs_with_gold(matrix, sample, gold, cfg)
        assert set(active) == {"lf_a", "lf_b", "lf_c"}

    def test_equal_accuracies_none_pruned(self):
        pairs, gold = self._setup()
        votes = {f"lf{i}": set(pairs[:10]) for i in range(3)}
        matrix = synthetic_matrix(votes)
        sample = PairSample(docs=tuple(f"d{i}" for i in range(20)), cols=("c0",),
                            seed=0, sample_fraction=1.0)
        active = prune_lfs_with_gold(matrix, sample, gold, EngineConfig())
        assert set(active) == set(votes)

    def test_insufficient_gold_keeps_all(self):
        pairs, _ = self._setup()
        votes = {"lf_a": set(pairs[:5]), "lf_b": set(pairs[5:10])}
        matrix = synthetic_matrix(votes)
        gold = GoldLabels({pairs[0]: 1})
        sample = PairSample(docs=tuple(f"d{i}" for i in range(20)), cols=("c0",),
                            seed=0, sample_fraction=1.0)
        active = prune_lfs_with_gold(matrix, sample, gold, EngineConfig(min_gold_pairs=20))
        assert set(active) == {"lf_a", "lf_b"}

    def test_best_lf_never_pruned(self):
        pairs, gold = self._setup()
        votes = {"lf_a": set(pairs[:10]), "lf_b": set(pairs[10:])}
        matrix = synthetic_matrix(votes)
        sample = PairSample(docs=tuple(f"d{i}" for i in range(20)), cols=("c0",),
                            seed=0, sample_fraction=1.0)
        active = prune_lfs_with_gold(matrix, sample, gold, EngineConfig())
        assert "lf_a" in active


class TestLabelModel:
    def test_two_agreeing_lfs(self):
        pairs_voted = [(f"d{i}", "c") for i in range(20)]
        votes = {"lf1": set(pairs_voted), "lf2": set(pairs_voted[:12])}
        matrix = synthetic_matrix(votes)
        model, labels = fit_label_model(matrix, ("lf1", "lf2"))
        assert all(v > 0.5 for p, v in labels.items() if p in votes["lf2"])
        assert model.lf_accuracy["lf1"] > 0.5
        assert model.lf_accuracy["lf2"] > 0.5

    def test_perfect_vs_random_lf(self):
        rng = np.random.default_rng(0)
        docs = [f"d{i:03d}" for i in range(200)]
        truth = {d: rng.random() < 0.4 for d in docs}
        perfect = {(d, "c") for d in docs if truth[d]}
        random_votes = {(d, "c") for d in docs if rng.random() < 0.5}
        matrix = synthetic_matrix({"perfect": perfect, "random": random_votes})
        model, labels = fit_label_model(matrix, ("perfect", "random"))
        assert model.lf_accuracy["perfect"] > model.lf_accuracy["random"]
        voted = set(labels)
        agree = sum(
            (labels[p] > 0.5) == (p in perfect) for p in voted
        )
        assert agree / len(voted) >= 0.95

    def test_single_lf_pass_through(self):
        votes = {"only": {("d1", "c"), ("d2", "c")}}
        matrix = synthetic_matrix(votes)
        _, labels = fit_label_model(matrix, ("only",))
        assert labels == {("d1", "c"): 1.0, ("d2", "c"): 1.0}

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        docs = [f"d{i}" for i in range(50)]
        v1 = {(d, "c") for d in docs if rng.random() < 0.5}
        v2 = {(d, "c") for d in docs if rng.random() < 0.5}
        matrix = synthetic_matrix({"a": v1, "b": v2})
        m1, l1 = fit_label_model(matrix, ("a", "b"))
        m2, l2 = fit_label_model(matrix, ("b", "a"))
        for p in l1:
            assert l1[p] == pytest.approx(l2[p], abs=1e-6)
        assert m1.lf_accuracy["a"] == pytest.approx(m2.lf_accuracy["a"], abs=1e-6)


class TestDiscriminator:
    def test_linearly_separable(self):
        rng = np.random.default_rng(0)
        n, dim = 300, 20
        w = rng.standard_normal(dim)
        x = rng.standard_normal((n, dim))
        y = (x @ w > 0).astype(float)
        model = RelatednessModel(dim_in=dim, hidden=32, seed=1)
        model.fit(x, y, lr=0.5, max_iters=2000, loss_delta=0.0)
        preds = model.predict(x) > 0.5
        assert np.mean(preds == y.astype(bool)) >= 0.98

    def test_uniform_labels_constant_output(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((100, 10))
        y = np.full(100, 0.5)
        model = RelatednessModel(dim_in=10, hidden=8, seed=2)
        model.fit(x, y, lr=0.2, max_iters=3000, loss_delta=0.0)
        preds = model.predict(x)
        assert np.all(np.abs(preds - 0.5) < 0.05)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for trial in range(5):
            x = rng.standard_normal((12, 6))
            y = rng.random(12)
            model = RelatednessModel(dim_in=6, hidden=4, seed=trial)
            _, grads = model.loss_and_grads(x, y)
            h = 1e-6
            for p, g in zip(model.params(), grads):
                flat = p.ravel()
                idx = rng.integers(0, flat.size, size=min(10, flat.size))
                for i in idx:
                    orig = flat[i]
                    flat[i] = orig + h
                    lp, _ = model.loss_and_grads(x, y)
                    flat[i] = orig - h
                    lm, _ = model.loss_and_grads(x, y)
                    flat[i] = orig
                    fd = (lp - lm) / (2 * h)
                    denom = max(abs(fd), abs(g.ravel()[i]), 1e-8)
                    assert abs(fd - g.ravel()[i]) / denom <= 1e-4

    def test_relatedness_in_unit_interval(self, tiny_lake):
        corpus, cfg, _ = tiny_lake
        store = profile_corpus(corpus, cfg)
        sample = PairSample(
            docs=tuple(sorted(corpus.documents)),
            cols=tuple(sorted(corpus.columns))[:4],
            seed=0, sample_fraction=1.0,
        )
        labels = {(sample.docs[0], sample.cols[0]): 1.0}
        _, training, _ = train_discriminator(sample, labels, store, cfg)
        assert len(training) == sample.universe_size
        assert all(0.0 <= p.relatedness <= 1.0 for p in training)


def test_all_perfect_lfs_labels_equal_gold():
    """When every LF fires exactly on the true pairs, the probabilistic
    labels match gold on every voted pair."""
    rng = np.random.default_rng(4)
    docs = [f"d{i:03d}" for i in range(80)]
    truth = {d: bool(rng.random() < 0.4) for d in docs}
    true_pairs = {(d, "c0") for d in docs if truth[d]}
    matrix = synthetic_matrix({"lf_a": true_pairs, "lf_b": true_pairs,
                               "lf_c": true_pairs})
    _, labels = fit_label_model(matrix, ("lf_a", "lf_b", "lf_c"))
    assert set(labels) == true_pairs
    assert all(v >= 0.5 for v in labels.values())
