"""User-to-hashtag / user-to-mention graphs and node2vec embeddings."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

from . import kernels
from .ingest import Post

USER_PREFIX = "u:"
ITEM_PREFIX = {"hashtag": "h:", "mention": "m:"}


@dataclass
class BipartiteGraph:
    """Undirected weighted user-item graph; node names carry a side prefix."""

    mode: str
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def nodes(self) -> list[str]:
        return sorted({n for e in self.edges for n in e})

    def adjacency(self) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
        """CSR adjacency (names, indptr, indices, weights), neighbors sorted by index."""
        names = self.nodes
        index = {n: i for i, n in enumerate(names)}
        nbrs: list[list[tuple[int, float]]] = [[] for _ in names]
        for (u, item), w in self.edges.items():
            nbrs[index[u]].append((index[item], float(w)))
            nbrs[index[item]].append((index[u], float(w)))
        indptr = np.zeros(len(names) + 1, dtype=np.int64)
        indices, weights = [], []
        for i, row in enumerate(nbrs):
            row.sort()
            indices.extend(j for j, _ in row)
            weights.extend(w for _, w in row)
            indptr[i + 1] = len(indices)
        return (names, indptr, np.asarray(indices, dtype=np.int32),
                np.asarray(weights, dtype=np.float64))


@dataclass
class NodeEmbeddings:
    vectors: dict[str, np.ndarray]
    dim: int

    def __contains__(self, node: str) -> bool:
        return node in self.vectors

    def __getitem__(self, node: str) -> np.ndarray:
        return self.vectors[node]


@dataclass
class Node2VecParams:
    dim: int = 100
    p: float = 1.0
    q: float = 1.0
    walk_length: int = 80
    walks_per_node: int = 10
    window: int = 5
    negatives: int = 5
    epochs: int = 1
    learning_rate: float = 0.025


def build_graph(posts: Iterable[Post], mode: str) -> BipartiteGraph:
    """Edge weight = number of the user's posts containing the item."""
    if mode not in ITEM_PREFIX:
        raise ValueError(f"mode must be 'hashtag' or 'mention', not {mode!r}")
    prefix = ITEM_PREFIX[mode]
    edges: Counter = Counter()
    for post in posts:
        items = post.hashtags if mode == "hashtag" else post.mentions
        for item in sorted(set(items)):
            edges[(USER_PREFIX + post.author_id, prefix + item)] += 1
    return BipartiteGraph(mode, dict(sorted(edges.items())))


def transition_probs(indptr, indices, weights, prev: int | None, cur: int, p: float, q: float) -> dict[int, float]:
    """Exact normalized second-order transition distribution out of ``cur``."""
    lo, hi = indptr[cur], indptr[cur + 1]
    prev_nbrs = set() if prev is None else set(indices[indptr[prev]:indptr[prev + 1]].tolist())
    raw = {}
    for e in range(lo, hi):
        x = int(indices[e])
        if prev is None:
            bias = 1.0
        elif x == prev:
            bias = 1.0 / p
        elif x in prev_nbrs:
            bias = 1.0
        else:
            bias = 1.0 / q
        raw[x] = raw.get(x, 0.0) + weights[e] * bias
    total = sum(raw.values())
    return {x: w / total for x, w in raw.items()}


def random_walks(
    graph: BipartiteGraph,
    p: float = 1.0,
    q: float = 1.0,
    walk_length: int = 80,
    walks_per_node: int = 10,
    seed: int = 0,
    backend: str | None = None,
) -> list[list[str]]:
    """node2vec walks; every node starts ``walks_per_node`` walks in shuffled order.

    An isolated node yields a walk of length 1.
    """
    if p <= 0 or q <= 0:
        raise ValueError("p and q must be positive")
    if walk_length < 2:
        raise ValueError("walk_length must be >= 2")
    names, indptr, indices, weights = graph.adjacency()
    if not names:
        return []
    rng = np.random.default_rng(seed)
    starts = np.concatenate([rng.permutation(len(names)) for _ in range(walks_per_node)]).astype(np.int64)
    rows = walk_indices(indptr, indices, weights, starts, walk_length, p, q,
                        kernels.derive_seed(rng), backend)
    return [[names[i] for i in row if i >= 0] for row in rows]


def walk_indices(indptr, indices, weights, starts, walk_length, p, q, seed, backend=None) -> np.ndarray:
    kern = kernels.get_backend(backend)
    return kern.node2vec_walks(
        np.ascontiguousarray(indptr, dtype=np.int64), np.ascontiguousarray(indices, dtype=np.int32),
        np.ascontiguousarray(weights, dtype=np.float64), np.ascontiguousarray(starts, dtype=np.int64),
        int(walk_length), 1.0 / p, 1.0 / q, kernels.rng_state(seed),
    )


def train_skipgram(
    walks: list[list[str]],
    dim: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 1,
    seed: int = 0,
    learning_rate: float = 0.025,
    backend: str | None = None,
) -> NodeEmbeddings:
    """Skip-gram with negative sampling (unigram^0.75 noise) over the walks."""
    if not walks:
        raise ValueError("empty walk corpus")
    if window < 1:
        raise ValueError("window must be >= 1")
    freq = Counter(node for walk in walks for node in walk)
    vocab = sorted(freq)
    index = {n: i for i, n in enumerate(vocab)}
    corpus = np.fromiter((index[n] for walk in walks for n in walk), dtype=np.int32)
    offsets = np.zeros(len(walks) + 1, dtype=np.int64)
    np.cumsum([len(w) for w in walks], out=offsets[1:])

    rng = np.random.default_rng(seed)
    syn0 = np.ascontiguousarray((rng.random((len(vocab), dim)) - 0.5) / dim)
    syn1 = np.zeros((len(vocab), dim))
    noise = np.array([freq[n] for n in vocab], dtype=np.float64) ** 0.75
    cdf = np.cumsum(noise)
    kern = kernels.get_backend(backend)
    kern.sgns_train(corpus, offsets, syn0, syn1, cdf, int(window), int(negatives), int(epochs),
                    float(learning_rate), float(learning_rate) * 1e-4,
                    kernels.rng_state(kernels.derive_seed(rng)))
    return NodeEmbeddings({n: syn0[i].copy() for n, i in index.items()}, dim)


def node2vec(graph: BipartiteGraph, params: Node2VecParams | None = None, seed: int = 0,
             backend: str | None = None) -> NodeEmbeddings:
    params = params or Node2VecParams()
    walks = random_walks(graph, params.p, params.q, params.walk_length, params.walks_per_node,
                         seed, backend)
    if not walks:
        return NodeEmbeddings({}, params.dim)
    return train_skipgram(walks, params.dim, params.window, params.negatives, params.epochs,
                          seed + 1, params.learning_rate, backend)


def medium_embedding(
    citing_users: Mapping[str, int], embeddings: NodeEmbeddings
) -> np.ndarray | None:
    """Citation-weighted mean of citing users' vectors; ``None`` if none are embedded."""
    acc = np.zeros(embeddings.dim)
    total = 0
    for user in sorted(citing_users):
        count = citing_users[user]
        node = USER_PREFIX + user
        if count <= 0 or node not in embeddings:
            continue
        acc += count * embeddings[node]
        total += count
    if total == 0:
        return None
    return acc / total


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    unit = vectors / np.where(norms == 0, 1.0, norms)
    return unit @ unit.T


# -- text vector format ---------------------------------------------------------
# "count dim" header, then "name v1 ... vdim" per line.


def write_vectors(vectors: Mapping[str, np.ndarray], dim: int, fh: IO[str]) -> None:
    fh.write(f"{len(vectors)} {dim}\n")
    for name in sorted(vectors):
        vals = " ".join(f"{v:.9g}" for v in vectors[name])
        fh.write(f"{name} {vals}\n")


def read_vectors(source: str | Path | Iterable[str]) -> NodeEmbeddings:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_vectors(fh.readlines())
    lines = [ln for ln in source if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty vector file")
    count, dim = (int(x) for x in lines[0].split())
    vectors = {}
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != dim + 1:
            raise ValueError(f"expected {dim} components for {parts[0]!r}")
        vec = np.array([float(x) for x in parts[1:]])
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite vector for {parts[0]!r}")
        vectors[parts[0]] = vec
    if len(vectors) != count:
        raise ValueError(f"header says {count} vectors, found {len(vectors)}")
    return NodeEmbeddings(vectors, dim)


def user_citations(posts: Iterable[Post], domain_of) -> dict[str, Counter]:
    """domain -> Counter(user -> citations) using ``domain_of(url)`` (None to skip)."""
    out: dict[str, Counter] = {}
    for post in posts:
        for url in post.urls:
            dom = domain_of(url)
            if dom is not None:
                out.setdefault(dom, Counter())[post.author_id] += 1
    return out

