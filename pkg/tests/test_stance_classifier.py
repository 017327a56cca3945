import io
import struct

import numpy as np
import pytest

from stancelens import stance_classifier as sc
from stancelens import user_model
from stancelens.clustering import ClusterAssignment
from stancelens.user_model import UserVector

from conftest import small_corpus

LEFT = [f"a{i}" for i in range(5)]
RIGHT = [f"b{i}" for i in range(5)]


def separable(n=20, seed=0):
    rng = np.random.default_rng(seed)
    vectors, labels = {}, {}
    for side, vocab in enumerate((LEFT, RIGHT)):
        for i in range(n):
            picks = rng.choice(vocab, size=rng.integers(2, 5), replace=False)
            uid = f"{side}_{i:02d}"
            vectors[uid] = UserVector(uid, {a: int(rng.integers(1, 4)) for a in sorted(picks)})
            labels[uid] = side
    return vectors, labels


def planted():
    corpus = small_corpus(0)
    vectors = user_model.build_vectors(corpus.posts)
    labels = {u: 0 if corpus.users[u] == "a" else 1 for u in vectors}
    return vectors, labels


class TestTrain:
    def test_separable_training_accuracy(self):
        vectors, labels = separable()
        model = sc.train(vectors, labels, seed=1)
        assert sc.accuracy_on(model, vectors, labels) == 1.0
        assert set(model.vocabulary) == set(LEFT + RIGHT)

    def test_planted_holdout(self):
        vectors, labels = planted()
        assert sc.holdout_eval(vectors, labels, split=0.8, seed=0) >= 0.95

    def test_shuffled_labels_are_chance(self):
        vectors, labels = planted()
        users = sorted(labels)
        accs = []
        for seed in range(5):
            perm = np.random.default_rng(100 + seed).permutation([labels[u] for u in users])
            accs.append(sc.holdout_eval(vectors, dict(zip(users, perm.tolist())), seed=seed))
        assert 0.4 <= float(np.mean(accs)) <= 0.6

    def test_single_class_rejected(self):
        vectors, labels = separable()
        with pytest.raises(ValueError):
            sc.train(vectors, {u: 0 for u in labels})
        with pytest.raises(ValueError):
            sc.train(vectors, {u: 2 * v for u, v in labels.items()})

    def test_deterministic(self):
        vectors, labels = separable()
        a, b = sc.train(vectors, labels, seed=3), sc.train(vectors, labels, seed=3)
        assert np.array_equal(a.embeddings, b.embeddings) and np.array_equal(a.output, b.output)

    def test_swapped_labels_mirror(self):
        vectors, labels = separable(seed=4)
        m = sc.train(vectors, labels, seed=2)
        mirrored = sc.train(vectors, {u: 1 - v for u, v in labels.items()}, seed=2)
        queries = list(vectors.values()) + [UserVector("q", {"a0": 1, "b1": 3, "zz": 2})]
        for user in queries:
            p, q = m.proba(user), mirrored.proba(user)
            assert abs(p[0] - q[1]) <= 1e-6 and abs(p[1] - q[0]) <= 1e-6


class TestPredict:
    def test_exclusive_accounts_confident(self):
        vectors, labels = separable()
        model = sc.train(vectors, labels, epochs=25, seed=0)
        label, conf = sc.predict(model, UserVector("x", {a: 2 for a in LEFT}))
        assert label == 0 and conf > 0.99

    def test_all_unknown(self):
        vectors, labels = separable()
        model = sc.train(vectors, labels)
        assert sc.predict(model, UserVector("x", {"nobody": 4})) == (0, 0.5)

    def test_balanced_user_is_uncertain(self):
        vectors, labels = separable(seed=5)
        model = sc.train(vectors, labels, seed=5)
        _, conf = sc.predict(model, UserVector("x", {a: 1 for a in LEFT + RIGHT}))
        assert conf == pytest.approx(0.5, abs=0.05)

    def test_distribution(self):
        vectors, labels = planted()
        model = sc.train(vectors, labels)
        for user in list(vectors.values())[:50]:
            p = model.proba(user)
            assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-6


class TestExpand:
    def setup_method(self):
        vectors, labels = separable(seed=6)
        self.model = sc.train(vectors, labels, epochs=25, seed=0)
        self.base = ClusterAssignment("t", {u: labels[u] for u in list(labels)[:4]}, 0, 1)

    def test_four_distinct_accounts_rejected(self):
        user = UserVector("new", {a: 5 for a in LEFT[:4]})
        assert sc.predict(self.model, user)[1] > 0.99
        out = sc.expand(self.model, {"new": user}, self.base)
        assert "new" not in out.stance
        # counting retweets instead of distinct accounts admits this user
        out = sc.expand(self.model, {"new": user}, self.base, distinct_accounts=False)
        assert out.stance["new"] == 0

    def test_threshold_is_strict(self):
        user = UserVector("new", {a: 1 for a in LEFT + RIGHT[:2]})
        _, conf = sc.predict(self.model, user)
        assert "new" not in sc.expand(self.model, {"new": user}, self.base, threshold=conf).stance
        below = float(np.nextafter(conf, -np.inf))
        assert "new" in sc.expand(self.model, {"new": user}, self.base, threshold=below).stance

    def test_six_accounts_confident_assigned(self):
        user = UserVector("new", {a: 1 for a in RIGHT + ["zz"]})
        out = sc.expand(self.model, {"new": user}, self.base, threshold=0.8)
        assert out.stance["new"] == 1 and out.provenance["new"] == "expanded"

    def test_existing_labels_untouched(self):
        uid = next(iter(self.base.stance))
        flipped = 1 - self.base.stance[uid]
        vocab = RIGHT if flipped == 1 else LEFT
        out = sc.expand(self.model, {uid: UserVector(uid, {a: 3 for a in vocab})}, self.base)
        assert out.stance[uid] == self.base.stance[uid]
        assert out.provenance[uid] == "clustered"

    def test_threshold_monotone(self):
        vectors, _ = planted()
        base = ClusterAssignment("t", {}, 0, 1)
        model = sc.train(*planted())
        counts = [len(sc.expand(model, vectors, base, threshold=t).stance) for t in (0.5, 0.7, 0.8, 0.9, 0.95)]
        assert counts == sorted(counts, reverse=True)


def test_holdout_gives_up_after_attempts():
    vectors, labels = separable()
    with pytest.raises(ValueError, match="attempts"):
        sc.holdout_eval(vectors, labels, split=1.0)


class TestModelFile:
    def test_round_trip(self, tmp_path):
        vectors, labels = separable()
        model = sc.train(vectors, labels)
        model.meta = "stancelens test header"
        path = tmp_path / "m.bin"
        sc.save_model_file(model, path)
        back = sc.load_model_file(path)
        assert back.vocabulary == model.vocabulary and back.meta == model.meta
        np.testing.assert_allclose(back.embeddings, model.embeddings, rtol=1e-6)
        for user in vectors.values():
            np.testing.assert_allclose(back.proba(user), model.proba(user), atol=1e-6)

    def test_layout(self):
        model = sc.StanceModel({"x": 0}, np.array([[1.5, -2.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]),
                               np.array([0.25, -0.25]), "m")
        buf = io.BytesIO()
        sc.save_model(model, buf)
        raw = buf.getvalue()
        assert raw[:4] == b"SLBM"
        assert struct.unpack("<II", raw[4:12]) == (1, 1)
        assert raw[12:13] == b"m"
        assert struct.unpack("<III", raw[13:25]) == (1, 2, 2)
        assert struct.unpack("<I", raw[25:29]) == (1,) and raw[29:30] == b"x"
        floats = struct.unpack("<8f", raw[30:])
        assert floats == (1.5, -2.0, 1.0, 0.0, 0.0, 1.0, 0.25, -0.25)

    def test_rejects_foreign_file(self):
        with pytest.raises(ValueError):
            sc.load_model(io.BytesIO(b"NOPE" + bytes(20)))
