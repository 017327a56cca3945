import io

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from stancelens import bias_predictor as bp
from stancelens.bias_predictor import FeatureBlock


def planted(n_per_class=100, topics=3, noise=0.15, seed=0):
    """Valence features centred at +0.6 / 0 / -0.6 for left / center / right media."""
    rng = np.random.default_rng(seed)
    centers = {"left": 0.6, "center": 0.0, "right": -0.6}
    scores, gold = {}, {}
    for lab, mu in centers.items():
        for i in range(n_per_class):
            dom = f"{lab}{i:03d}.com"
            scores[dom] = {f"t{k}": float(np.clip(mu + rng.normal(0, noise), -1, 1)) for k in range(topics)}
            gold[dom] = lab
    return scores, gold, [f"t{k}" for k in range(topics)]


class TestLabels:
    @pytest.mark.parametrize("label, merged", [
        ("extreme-left", "left"), ("left", "left"), ("center", "center"), ("right", "right"),
        ("extreme-right", "right"), ("left-center", None), ("right-center", None),
        ("Least Biased", "center"), ("far_right", "right"), ("  LEFT ", "left"),
    ])
    def test_merge(self, label, merged):
        assert bp.merge_labels(label) == merged

    def test_unknown(self):
        with pytest.raises(ValueError):
            bp.merge_labels("satire")

    def test_read_gold(self):
        rows = bp.read_gold_tsv(["domain\tbias\tfactuality\n", "# note\n", "https://www.CNN.com/x\tleft-center\thigh\n",
                                 "\n", "foxnews.com\tright\tmixed\n"])
        assert rows["cnn.com"] == bp.MediaRecord("cnn.com", "left-center", "high")
        assert rows["foxnews.com"].bias == "right" and len(rows) == 2


class TestMetrics:
    def test_accuracy(self):
        assert bp.accuracy(["left", "right", "center", "left"], ["left", "left", "center", "right"]) == 0.5

    def test_mae(self):
        assert bp.mae(["left", "right", "center", "left"], ["left", "left", "center", "right"]) == 1.0
        assert bp.mae(["center", "center", "left", "right"], ["left", "right", "left", "right"]) == 0.5

    @pytest.mark.parametrize("fn", [bp.accuracy, bp.mae])
    def test_mismatch(self, fn):
        with pytest.raises(ValueError):
            fn(["left"], ["left", "right"])
        with pytest.raises(ValueError):
            fn([], [])

    @pytest.mark.parametrize("score, lean", [(0.21, "left"), (0.2, "center"), (-0.2, "center"),
                                             (-0.5, "right"), (0.0, "center")])
    def test_unsupervised_leaning(self, score, lean):
        assert bp.unsupervised_leaning(score) == lean


class TestFeatures:
    def test_valence_block_presence(self):
        block = bp.valence_block({"a.com": {"t1": 0.5}, "b.com": {"t0": -1.0, "t1": 0.0}}, ["t0", "t1"])
        np.testing.assert_array_equal(block.rows["a.com"], [0.0, 0.5, 0.0, 1.0])
        np.testing.assert_array_equal(block.rows["b.com"], [-1.0, 0.0, 1.0, 1.0])
        assert block.columns == ["valence:t0", "valence:t1", "present:t0", "present:t1"]

    def test_assemble_intersection(self):
        a = FeatureBlock("a", ["a0"], {"x": np.array([1.0]), "y": np.array([2.0])})
        b = bp.vector_block("b", {"y": np.array([3.0, 4.0]), "z": np.array([5.0, 6.0])})
        X, kept, layout = bp.assemble([a, b], ["x", "y", "z"])
        assert kept == ["y"] and layout == ["a0", "b:0", "b:1"]
        np.testing.assert_array_equal(X, [[2.0, 3.0, 4.0]])

    def test_assemble_empty(self):
        X, kept, _ = bp.assemble([FeatureBlock("a", ["a0"], {})], ["x"])
        assert X.shape == (0, 1) and kept == []


class TestTraining:
    def test_matches_sklearn(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(90, 4))
        y = np.array(bp.CLASSES)[np.argmax(X[:, :3] + rng.normal(0, 0.8, (90, 3)), axis=1)]
        model = bp.train(X, list(y), C=0.1)
        Z = (X - X.mean(0)) / X.std(0)
        ref = LogisticRegression(C=0.1, tol=1e-12, max_iter=10000).fit(Z, y)
        order = [list(ref.classes_).index(c) for c in bp.CLASSES]
        np.testing.assert_allclose(model.proba(X), ref.predict_proba(Z)[:, order], atol=1e-6)

    def test_separable_high_C(self):
        X = np.array([[-2.0], [-1.8], [-1.5], [0.0], [0.1], [-0.1], [1.5], [1.9], [2.2]])
        y = ["left"] * 3 + ["center"] * 3 + ["right"] * 3
        model = bp.train(X, y, C=1e6, max_iter=20000, tol=1e-4)
        preds, _ = bp.predict(model, X)
        assert bp.accuracy(preds, y) == 1.0

    def test_tiny_C_gives_prior(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(60, 3))
        y = ["left"] * 30 + ["center"] * 20 + ["right"] * 10
        model = bp.train(X, y, C=1e-9)
        np.testing.assert_allclose(model.proba(X), np.tile([0.5, 1 / 3, 1 / 6], (60, 1)), atol=1e-6)

    def test_probabilities_sum_to_one(self):
        scores, gold, topics = planted(20, seed=1)
        X, kept, _ = bp.assemble([bp.valence_block(scores, topics)], sorted(gold))
        _, proba = bp.predict(bp.train(X, [gold[d] for d in kept]), X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(proba >= 0)

    @pytest.mark.parametrize("factor", [0.001, 3.0, 1e4])
    def test_rescaling_invariant(self, factor):
        scores, gold, topics = planted(20, noise=0.4, seed=2)
        X, kept, _ = bp.assemble([bp.valence_block(scores, topics)], sorted(gold))
        y = [gold[d] for d in kept]
        p1, _ = bp.predict(bp.train(X, y), X)
        p2, _ = bp.predict(bp.train(X * factor, y), X * factor)
        assert p1 == p2

    def test_training_fold_statistics(self):
        X = np.array([[0.0], [2.0], [4.0], [6.0]])
        model = bp.train(X, ["left", "left", "right", "right"])
        assert model.mean[0] == 3.0 and model.scale[0] == pytest.approx(np.sqrt(5.0))

    def test_not_converged(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 5))
        y = list(np.array(bp.CLASSES)[rng.integers(0, 3, 50)])
        with pytest.raises(bp.ConvergenceError):
            bp.train(X, y, C=100.0, max_iter=1, tol=1e-12)

    @pytest.mark.parametrize("X, y", [
        (np.array([[np.nan], [1.0]]), ["left", "right"]),
        (np.array([[0.0], [1.0]]), ["left", "left"]),
    ])
    def test_invalid(self, X, y):
        with pytest.raises(ValueError):
            bp.train(X, y)


class TestEvaluation:
    def test_planted_valence_accuracy(self):
        scores, gold, topics = planted()
        X, kept, _ = bp.assemble([bp.valence_block(scores, topics)], sorted(gold))
        acc, err = bp.cross_validate(X, [gold[d] for d in kept], folds=5, seed=0)
        assert acc >= 0.9 and err <= 0.1

    def test_shuffled_labels_near_chance(self):
        scores, gold, topics = planted(40)
        X, kept, _ = bp.assemble([bp.valence_block(scores, topics)], sorted(gold))
        accs = []
        for seed in range(5):
            labels = list(np.random.default_rng(seed).permutation([gold[d] for d in kept]))
            accs.append(bp.cross_validate(X, labels, seed=seed)[0])
        assert abs(np.mean(accs) - 1 / 3) < 0.1

    def test_evaluate_rows(self):
        scores, gold, topics = planted(30)
        rng = np.random.default_rng(0)
        graph = bp.vector_block("hashtag_graph", {d: rng.normal(size=4) for d in list(gold)[::2]})
        avg = {d: float(np.mean(list(v.values()))) for d, v in scores.items()}
        rows = bp.evaluate({"valence": bp.valence_block(scores, topics), "hashtag_graph": graph},
                           gold, average_valence=avg)
        names = [r.name for r in rows]
        assert names == ["majority class", "average valence", "valence", "hashtag_graph", "valence+hashtag_graph"]
        by = {r.name: r for r in rows}
        assert by["majority class"].accuracy == pytest.approx(1 / 3, abs=0.05)
        assert by["average valence"].accuracy > 0.9
        assert by["hashtag_graph"].n_media == 45 and by["valence"].n_media == 90
        buf = io.StringIO()
        bp.write_report_tsv(rows, buf)
        assert buf.getvalue().splitlines()[0] == "features\tn_media\taccuracy\tmae"
        assert len(buf.getvalue().splitlines()) == 6

    def test_too_few_per_class(self):
        with pytest.raises(ValueError):
            bp.cross_validate(np.zeros((3, 1)), ["left", "left", "right"])

    def test_confusion(self):
        cats = {"a.com": "++", "b.com": "++", "c.com": "0", "d.com": "--", "e.com": "-"}
        gold = {"a.com": "extreme-left", "b.com": "Left", "c.com": "least biased", "d.com": "right"}
        mat = bp.confusion_table(cats, gold)
        assert mat.shape == (5, 7) and mat.sum() == 4
        assert mat[4, 0] == 1 and mat[4, 1] == 1 and mat[2, 3] == 1 and mat[0, 5] == 1
        buf = io.StringIO()
        bp.write_confusion_tsv(mat, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0].split("\t")[1:] == list(bp.GOLD_LABELS) and len(lines) == 6
