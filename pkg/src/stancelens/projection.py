"""Two-dimensional UMAP-style projection of user retweet vectors.

Exact k-NN on cosine distance, smoothed exponential memberships fused with
the probabilistic t-conorm, spectral initialization, and negative-sampling
SGD on the low-dimensional cross-entropy.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Sequence

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.optimize import curve_fit

from . import kernels
from .user_model import SimilarityMatrix

logger = logging.getLogger(__name__)

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3


@dataclass
class KNNGraph:
    indices: np.ndarray  # (n, k) neighbor rows, nearest first
    distances: np.ndarray  # (n, k)

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass
class Embedding2D:
    user_ids: list[str]
    coords: np.ndarray

    def __post_init__(self) -> None:
        if self.coords.shape[0] != len(self.user_ids):
            raise ValueError("row count does not match user count")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("embedding has non-finite coordinates")


@dataclass
class LayoutParams:
    n_neighbors: int = 15
    min_dist: float = 0.1
    spread: float = 1.0
    n_epochs: int = 200
    negative_sample_rate: int = 5
    repulsion_strength: float = 1.0
    learning_rate: float = 1.0
    init: str = "spectral"


def knn_graph(similarity: SimilarityMatrix | np.ndarray, k: int) -> KNNGraph:
    """Exact k nearest neighbors under cosine distance ``1 - similarity``.

    Ties are broken by row order, which keeps the graph deterministic.
    """
    sim = similarity.values if isinstance(similarity, SimilarityMatrix) else np.asarray(similarity)
    n = sim.shape[0]
    if k < 2:
        raise ValueError("k must be at least 2")
    if n <= k:
        raise ValueError(f"k={k} needs more than {k} points but only {n} given; lower k")
    dist = np.clip(1.0 - sim, 0.0, None)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return KNNGraph(order.astype(np.int64), np.take_along_axis(dist, order, axis=1))


def smooth_knn_dist(distances: np.ndarray, k: float, n_iter: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (sigma, rho) so that sum_j exp(-(d_j - rho)/sigma) = log2(k)."""
    target = np.log2(k)
    n = distances.shape[0]
    rho = np.zeros(n)
    sigma = np.zeros(n)
    mean_all = float(np.mean(distances))
    for i in range(n):
        row = distances[i]
        nonzero = row[row > 0.0]
        if nonzero.size:
            rho[i] = float(np.min(nonzero))
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(n_iter):
            d = row - rho[i]
            psum = float(np.sum(np.exp(-np.maximum(d, 0.0) / mid)))
            if abs(psum - target) < SMOOTH_K_TOLERANCE:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2 if hi == np.inf else (lo + hi) / 2.0
        floor = MIN_K_DIST_SCALE * (float(np.mean(row)) if rho[i] > 0.0 else mean_all)
        sigma[i] = max(mid, floor)
    return sigma, rho


def membership_strengths(graph: KNNGraph) -> sparse.csr_matrix:
    """Directed fuzzy memberships; the nearest neighbor of each point gets 1."""
    sigma, rho = smooth_knn_dist(graph.distances, graph.k)
    shifted = np.maximum(graph.distances - rho[:, None], 0.0)
    vals = np.exp(-shifted / sigma[:, None])
    rows = np.repeat(np.arange(graph.n), graph.k)
    mat = sparse.csr_matrix((vals.ravel(), (rows, graph.indices.ravel())), shape=(graph.n, graph.n))
    mat.eliminate_zeros()
    return mat


def fuse(directed: sparse.spmatrix) -> sparse.csr_matrix:
    """Probabilistic t-conorm a + b - ab of a directed graph and its transpose."""
    directed = sparse.csr_matrix(directed)
    transpose = directed.T.tocsr()
    prod = directed.multiply(transpose)
    out = (directed + transpose - prod).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def fuzzy_weights(graph: KNNGraph) -> sparse.csr_matrix:
    return fuse(membership_strengths(graph))


def find_ab_params(spread: float, min_dist: float) -> tuple[float, float]:
    """Least-squares fit of 1/(1 + a x^(2b)) to the offset exponential decay."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    params, _ = curve_fit(curve, xv, yv)
    return float(params[0]), float(params[1])


def spectral_init(graph: sparse.spmatrix, dim: int) -> np.ndarray:
    """Smallest nontrivial eigenvectors of the normalized Laplacian.

    Raises ``np.linalg.LinAlgError`` when the eigensolver fails or the graph
    is too small; callers fall back to random initialization.
    """
    n = graph.shape[0]
    if n <= dim + 1:
        raise np.linalg.LinAlgError("graph too small for spectral layout")
    deg = np.asarray(graph.sum(axis=1)).ravel()
    inv_sqrt = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    norm_adj = sparse.diags(inv_sqrt) @ graph @ sparse.diags(inv_sqrt)
    lap = np.eye(n) - norm_adj.toarray()
    _, vecs = scipy.linalg.eigh(lap, subset_by_index=[0, dim])
    out = vecs[:, 1:dim + 1]
    if not np.all(np.isfinite(out)):
        raise np.linalg.LinAlgError("non-finite eigenvectors")
    # Fix the sign ambiguity: largest-magnitude entry positive.
    pivot = np.argmax(np.abs(out), axis=0)
    signs = np.sign(out[pivot, np.arange(dim)])
    signs[signs == 0] = 1.0
    return out * signs


def initial_layout(graph: sparse.spmatrix, dim: int, init: str, rng: np.random.Generator) -> np.ndarray:
    n = graph.shape[0]
    if init == "spectral":
        try:
            coords = spectral_init(graph, dim)
        except (np.linalg.LinAlgError, ValueError) as exc:
            logger.info("spectral init unavailable (%s); using random init", exc)
        else:
            expansion = 10.0 / np.abs(coords).max()
            return coords * expansion + rng.normal(scale=1e-4, size=(n, dim))
    elif init != "random":
        raise ValueError(f"unknown init {init!r}")
    return rng.uniform(-10.0, 10.0, size=(n, dim))


def make_epochs_per_sample(weights: np.ndarray, n_epochs: int) -> np.ndarray:
    out = -np.ones(weights.shape[0])
    n_samples = n_epochs * (weights / weights.max())
    out[n_samples > 0] = float(n_epochs) / n_samples[n_samples > 0]
    return out


def optimize_layout(
    graph: sparse.spmatrix,
    dims: int = 2,
    n_epochs: int = 200,
    min_dist: float = 0.1,
    seed: int = 0,
    *,
    spread: float = 1.0,
    negative_sample_rate: int = 5,
    repulsion_strength: float = 1.0,
    learning_rate: float = 1.0,
    init: str | np.ndarray = "spectral",
    checkpoint_every: int | None = None,
    callback: Callable[[int, np.ndarray], None] | None = None,
    backend: str | None = None,
) -> np.ndarray:
    """Stochastic attraction/repulsion layout of a symmetric weighted graph.

    Deterministic for a fixed ``seed`` (the run is single-threaded).
    ``callback(epoch, coords)`` is invoked every ``checkpoint_every`` epochs
    with a copy of the current coordinates.
    """
    if n_epochs < 1:
        raise ValueError("n_epochs must be >= 1")
    if not 1 <= dims <= 3:
        raise ValueError("dims must be 1, 2 or 3")
    kern = kernels.get_backend(backend)
    rng = np.random.default_rng(seed)
    graph = sparse.coo_matrix(graph)
    n = graph.shape[0]

    if isinstance(init, np.ndarray):
        coords = np.array(init, dtype=np.float64, copy=True)
    else:
        coords = initial_layout(graph.tocsr(), dims, init, rng)
    coords = np.ascontiguousarray(coords, dtype=np.float64)

    weights = graph.data.astype(np.float64)
    if weights.size == 0:
        return coords
    keep = weights >= weights.max() / float(n_epochs)
    head = np.ascontiguousarray(graph.row[keep], dtype=np.int32)
    tail = np.ascontiguousarray(graph.col[keep], dtype=np.int32)
    eps = make_epochs_per_sample(weights[keep], n_epochs)

    if coords.shape[0] > 1:
        span = coords.max(axis=0) - coords.min(axis=0)
        span[span == 0] = 1.0
        coords = np.ascontiguousarray(10.0 * (coords - coords.min(axis=0)) / span)

    a, b = find_ab_params(spread, min_dist)
    eps_neg = eps / negative_sample_rate
    next_sample = eps.copy()
    next_neg = eps_neg.copy()
    state = kernels.rng_state(kernels.derive_seed(rng))

    step = checkpoint_every or n_epochs
    for start in range(0, n_epochs, step):
        stop = min(start + step, n_epochs)
        kern.layout_epochs(head, tail, eps, next_sample, eps_neg, next_neg, coords,
                           start, stop, n_epochs, a, b, repulsion_strength, learning_rate, state)
        if callback is not None:
            callback(stop, coords.copy())
    return coords


def project(
    similarity: SimilarityMatrix, params: LayoutParams | None = None, seed: int = 0,
    backend: str | None = None,
) -> Embedding2D:
    params = params or LayoutParams()
    n = len(similarity.user_ids)
    k = min(params.n_neighbors, n - 1)
    if n < 3:
        raise ValueError(f"cannot project {n} users")
    graph = fuzzy_weights(knn_graph(similarity, k))
    coords = optimize_layout(
        graph, 2, params.n_epochs, params.min_dist, seed,
        spread=params.spread, negative_sample_rate=params.negative_sample_rate,
        repulsion_strength=params.repulsion_strength, learning_rate=params.learning_rate,
        init=params.init, backend=backend,
    )
    return Embedding2D(list(similarity.user_ids), coords)


def write_embedding_tsv(emb: Embedding2D, fh: IO[str]) -> None:
    fh.write("user_id\tx\ty\n")
    for uid, (x, y) in zip(emb.user_ids, emb.coords):
        fh.write(f"{uid}\t{x:.17g}\t{y:.17g}\n")


def read_embedding_tsv(lines: Iterable[str]) -> Embedding2D:
    ids, rows = [], []
    for line in lines:
        if line.startswith("#") or line.startswith("user_id\t") or not line.strip():
            continue
        uid, x, y = line.rstrip("\n").split("\t")
        ids.append(uid)
        rows.append((float(x), float(y)))
    return Embedding2D(ids, np.array(rows, dtype=np.float64).reshape(-1, 2))


def silhouette(coords: np.ndarray, labels: Sequence) -> float:
    """Mean silhouette coefficient (Euclidean), used as a layout quality gate."""
    coords = np.asarray(coords, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two labels")
    dist = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    scores = np.zeros(len(coords))
    for i in range(len(coords)):
        own = labels == labels[i]
        n_own = own.sum() - 1
        if n_own == 0:
            continue
        a = dist[i, own].sum() / n_own
        b = min(dist[i, labels == other].mean() for other in uniq if other != labels[i])
        scores[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return float(scores.mean())
