import io
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chi2

from stancelens import graph_embeddings as ge
from stancelens.graph_embeddings import BipartiteGraph, NodeEmbeddings
from stancelens.ingest import Post

from conftest import BACKENDS
from oracles import transition_distribution


def post(pid, user, hashtags=(), mentions=()):
    return Post(str(pid), user, 0.0, "", None, (), tuple(hashtags), tuple(mentions), None)


def csr(n, edges):
    """Symmetric CSR arrays from {(u, v): w} over integer nodes."""
    rows = [[] for _ in range(n)]
    for (u, v), w in edges.items():
        rows[u].append((v, w))
        rows[v].append((u, w))
    indptr, indices, weights = [0], [], []
    for r in rows:
        for v, w in sorted(r):
            indices.append(v)
            weights.append(w)
        indptr.append(len(indices))
    return (np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int32),
            np.array(weights, dtype=np.float64))


def chi_square(counts: dict, probs: dict) -> tuple[float, int]:
    total = sum(counts.values())
    stat = sum((counts.get(x, 0) - total * p) ** 2 / (total * p) for x, p in probs.items())
    return stat, len(probs) - 1


class TestBuildGraph:
    def test_two_hashtags_one_post(self):
        g = ge.build_graph([post(1, "u", ["a", "b"])], "hashtag")
        assert g.edges == {("u:u", "h:a"): 1, ("u:u", "h:b"): 1}

    def test_repeated_hashtag_weight(self):
        g = ge.build_graph([post(i, "u", ["a"]) for i in range(3)], "hashtag")
        assert g.edges == {("u:u", "h:a"): 3}

    def test_item_counted_once_per_post(self):
        g = ge.build_graph([post(1, "u", mentions=["x", "x"])], "mention")
        assert g.edges == {("u:u", "m:x"): 1}

    def test_empty(self):
        g = ge.build_graph([post(1, "u")], "hashtag")
        assert g.edges == {} and ge.random_walks(g) == []
        assert ge.node2vec(g, ge.Node2VecParams(dim=4)).vectors == {}

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            ge.build_graph([], "url")

    def test_bipartite_adjacency(self):
        g = ge.build_graph([post(1, "u", ["a"]), post(2, "v", ["a", "b"])], "hashtag")
        names, indptr, indices, _ = g.adjacency()
        for i, name in enumerate(names):
            for j in indices[indptr[i]:indptr[i + 1]]:
                assert name[:2] != names[j][:2]


class TestWalks:
    def test_first_order_when_unbiased(self):
        g = BipartiteGraph("hashtag", {("u:1", "h:a"): 1, ("u:1", "h:b"): 3, ("u:2", "h:a"): 2, ("u:2", "h:b"): 5})
        walks = ge.random_walks(g, walk_length=2501, walks_per_node=10, seed=11)
        counts: dict = {}
        for w in walks:
            for a, b in zip(w, w[1:]):
                counts.setdefault(a, Counter())[b] += 1
        steps = sum(sum(c.values()) for c in counts.values())
        assert steps == 10 ** 5
        stat, dof = 0.0, 0
        for node, c in counts.items():
            s, d = chi_square(c, transition_distribution(g.edges, node))
            stat, dof = stat + s, dof + d
        assert chi2.sf(stat, dof) > 0.01

    @pytest.mark.parametrize("p, q", [(0.25, 4.0), (4.0, 0.25), (1.0, 1.0)])
    def test_second_order_distribution(self, p, q):
        # triangle 0-1-2 plus pendant 3 on node 1: all three move types occur from node 1
        edges = {(0, 1): 2.0, (1, 2): 1.0, (0, 2): 1.0, (1, 3): 3.0}
        indptr, indices, weights = csr(4, edges)
        starts = np.zeros(20000, dtype=np.int64)
        walks = ge.walk_indices(indptr, indices, weights, starts, 6, p, q, seed=5)
        counts: dict = {}
        for w in walks:
            for prev, cur, nxt in zip(w, w[1:], w[2:]):
                counts.setdefault((prev, cur), Counter())[nxt] += 1
        stat, dof = 0.0, 0
        for (prev, cur), c in counts.items():
            exact = transition_distribution(edges, cur, prev, p, q)
            helper = ge.transition_probs(indptr, indices, weights, prev, cur, p, q)
            assert helper == pytest.approx(exact)
            s, d = chi_square(c, exact)
            stat, dof = stat + s, dof + d
        assert chi2.sf(stat, dof) > 0.01

    def test_path_graph_returns_when_outward_is_suppressed(self):
        indptr, indices, weights = csr(3, {(0, 1): 1.0, (1, 2): 1.0})
        probs = ge.transition_probs(indptr, indices, weights, 0, 1, p=1.0, q=1e12)
        assert probs[0] == pytest.approx(1.0) and probs[2] == pytest.approx(0.0, abs=1e-11)
        walks = ge.walk_indices(indptr, indices, weights, np.zeros(200, dtype=np.int64), 3, 1.0, 1e12, seed=0)
        assert all(w[2] == 0 for w in walks if w[1] == 1)

    def test_walk_length_two(self, corpus):
        g = ge.build_graph(corpus.posts[:300], "hashtag")
        walks = ge.random_walks(g, walk_length=2, walks_per_node=3, seed=1)
        assert len(walks) == 3 * len(g.nodes)
        assert all(len(w) == 2 for w in walks)

    def test_steps_follow_edges(self, corpus):
        g = ge.build_graph(corpus.posts[:300], "mention")
        pairs = set(g.edges) | {(b, a) for a, b in g.edges}
        for w in ge.random_walks(g, p=0.5, q=2.0, walk_length=10, walks_per_node=2, seed=3):
            assert all((a, b) in pairs for a, b in zip(w, w[1:]))

    def test_isolated_node_singleton(self):
        indptr, indices, weights = csr(3, {(0, 1): 1.0})
        walks = ge.walk_indices(indptr, indices, weights, np.array([2, 0], dtype=np.int64), 5, 1, 1, seed=0)
        assert walks[0].tolist() == [2, -1, -1, -1, -1]
        assert -1 not in walks[1]

    def test_deterministic(self, corpus):
        g = ge.build_graph(corpus.posts[:300], "hashtag")
        assert ge.random_walks(g, seed=4, walks_per_node=2) == ge.random_walks(g, seed=4, walks_per_node=2)

    @pytest.mark.parametrize("kwargs", [dict(p=0), dict(q=-1), dict(walk_length=1)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ge.random_walks(BipartiteGraph("hashtag", {("u:a", "h:b"): 1}), **kwargs)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_backends_agree(self, corpus, backend):
        g = ge.build_graph(corpus.posts[:400], "hashtag")
        ref = ge.random_walks(g, 0.5, 2.0, 12, 2, seed=9, backend="python")
        assert ge.random_walks(g, 0.5, 2.0, 12, 2, seed=9, backend=backend) == ref


def two_components():
    edges = {}
    for side in "ab":
        for u in range(15):
            for t in range(6):
                if (u + t) % 3:
                    edges[(f"u:{side}{u}", f"h:{side}tag{t}")] = 1 + (u * t) % 3
    return BipartiteGraph("hashtag", edges)


def mean_cos(emb, xs, ys):
    m = ge.cosine_matrix(np.array([emb[x] for x in xs] + [emb[y] for y in ys]))
    block = m[: len(xs), len(xs):]
    if xs == ys:
        return (block.sum() - np.trace(block)) / (len(xs) ** 2 - len(xs))
    return block.mean()


class TestSkipGram:
    @pytest.mark.parametrize("seed", range(5))
    def test_components_separate(self, seed):
        g = two_components()
        emb = ge.node2vec(g, ge.Node2VecParams(dim=16, walk_length=20, walks_per_node=5), seed=seed)
        a = [n for n in g.nodes if n[2] == "a"]
        b = [n for n in g.nodes if n[2] == "b"]
        intra = (mean_cos(emb, a, a) + mean_cos(emb, b, b)) / 2
        assert intra > mean_cos(emb, a, b)

    def test_repeated_pair_is_close(self):
        rng = np.random.default_rng(0)
        others = [f"n{i}" for i in range(12)]
        walks = [["x", "y"] * 5 for _ in range(40)] + [list(rng.choice(others, 10)) for _ in range(80)]
        emb = ge.train_skipgram(walks, dim=16, epochs=3, seed=1)
        names = sorted(emb.vectors)
        sim = ge.cosine_matrix(np.array([emb[n] for n in names]))
        off = sim[~np.eye(len(names), dtype=bool)].mean()
        assert sim[names.index("x"), names.index("y")] > off

    def test_dimension(self):
        emb = ge.train_skipgram([["a", "b", "c"]] * 5, dim=8, seed=0)
        assert emb.dim == 8 and all(v.shape == (8,) for v in emb.vectors.values())
        assert set(emb.vectors) == {"a", "b", "c"}

    def test_deterministic(self):
        walks = [["a", "b", "c", "a"], ["c", "d"]] * 10
        a = ge.train_skipgram(walks, dim=6, seed=2)
        b = ge.train_skipgram(walks, dim=6, seed=2)
        assert all(np.array_equal(a[n], b[n]) for n in a.vectors)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ge.train_skipgram([])
        with pytest.raises(ValueError):
            ge.train_skipgram([["a", "b"]], window=0)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_backends_agree(self, backend):
        walks = [list("abcabdce"), list("edcba")] * 8
        ref = ge.train_skipgram(walks, dim=5, epochs=2, seed=3, backend="python")
        out = ge.train_skipgram(walks, dim=5, epochs=2, seed=3, backend=backend)
        for n in ref.vectors:
            np.testing.assert_allclose(out[n], ref[n], atol=1e-12)


class TestMediumEmbedding:
    emb = NodeEmbeddings({"u:a": np.array([1.0, 0.0]), "u:b": np.array([0.0, 1.0])}, 2)

    def test_single_user(self):
        np.testing.assert_array_equal(ge.medium_embedding({"a": 4}, self.emb), [1.0, 0.0])

    def test_midpoint(self):
        np.testing.assert_allclose(ge.medium_embedding({"a": 2, "b": 2}, self.emb), [0.5, 0.5])

    def test_weighted(self):
        np.testing.assert_allclose(ge.medium_embedding({"a": 3, "b": 1, "ghost": 7}, self.emb), [0.75, 0.25])

    def test_none_embedded(self):
        assert ge.medium_embedding({"ghost": 3}, self.emb) is None

    def test_convex_hull(self):
        rng = np.random.default_rng(0)
        emb = NodeEmbeddings({f"u:{i}": rng.normal(size=3) for i in range(6)}, 3)
        v = ge.medium_embedding({str(i): int(rng.integers(1, 9)) for i in range(6)}, emb)
        stack = np.array(list(emb.vectors.values()))
        assert np.all(v >= stack.min(0) - 1e-12) and np.all(v <= stack.max(0) + 1e-12)


def test_user_citations():
    posts = [Post("1", "u", 0.0, "", None, ("https://x.com/a", "https://y.com/b"), (), (), None),
             Post("2", "u", 0.0, "", None, ("https://x.com/c",), (), (), None),
             Post("3", "v", 0.0, "", None, ("bad",), (), (), None)]
    out = ge.user_citations(posts, lambda url: None if url == "bad" else url.split("/")[2])
    assert out == {"x.com": Counter({"u": 2}), "y.com": Counter({"u": 1})}


class TestVectorFile:
    def test_round_trip(self, tmp_path):
        vecs = {"b": np.array([1.0, -2.5]), "a": np.array([1 / 3, 0.0])}
        buf = io.StringIO()
        ge.write_vectors(vecs, 2, buf)
        assert buf.getvalue().splitlines()[0] == "2 2"
        path = tmp_path / "v.vec"
        path.write_text(buf.getvalue())
        back = ge.read_vectors(path)
        assert back.dim == 2
        np.testing.assert_allclose(back["a"], vecs["a"], rtol=1e-8)

    @pytest.mark.parametrize("text", ["", "2 2\na 1 2\n", "1 2\na 1\n", "1 2\na 1 nan\n"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            ge.read_vectors(io.StringIO(text))
