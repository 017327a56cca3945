"""Flat-kernel Mean Shift over the 2D projection and stance-cluster selection."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import kernels

UNASSIGNED = -1


class NonPolarizedTopicError(ValueError):
    """Fewer than two clusters were found."""


@dataclass
class ClusterAssignment:
    """Per-topic stance labels.

    ``stance`` maps user -> 0 (C0, the largest retained cluster) or 1 (C1);
    users absent from it are unassigned. ``provenance`` records whether a
    label came from clustering or from classifier expansion.
    """

    topic: str
    labels: dict[str, int]
    c0: int
    c1: int
    sign: int = 1
    stance: dict[str, int] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if not self.stance:
            for uid, lab in self.labels.items():
                if lab == self.c0:
                    self.stance[uid] = 0
                    self.provenance[uid] = "clustered"
                elif lab == self.c1:
                    self.stance[uid] = 1
                    self.provenance[uid] = "clustered"

    def members(self, side: int) -> list[str]:
        return sorted(u for u, s in self.stance.items() if s == side)


def estimate_bandwidth(points: np.ndarray, quantile: float = 0.3) -> float:
    """Mean distance to the ceil(quantile*n)-th nearest neighbor (self counted first)."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must lie in (0, 1]")
    if n < 2:
        raise ValueError("need at least two points")
    kth = max(1, math.ceil(quantile * n))
    dist, _ = cKDTree(points).query(points, k=kth)
    dist = np.asarray(dist).reshape(n, -1)
    bw = float(dist[:, -1].mean())
    if bw <= 0.0:
        raise ValueError("degenerate points (all identical); pass an explicit bandwidth")
    return bw


def mean_shift(
    points: np.ndarray,
    bandwidth: float,
    max_iter: int = 300,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Flat-kernel Mean Shift seeded at every point.

    Returns ``(labels, centers)``. Modes are visited in order of decreasing
    support; a mode within ``bandwidth`` of an already kept one is merged
    into it. Every point is then labeled with its nearest kept mode.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, points.shape[1] if points.ndim == 2 else 2))
    kern = kernels.get_backend(backend)
    modes, support = kern.mean_shift_seeds(points, points, float(bandwidth), max_iter, 1e-4 * bandwidth)

    order = sorted(range(len(modes)), key=lambda i: (-support[i], i))
    kept: list[np.ndarray] = []
    for i in order:
        if support[i] == 0:
            continue
        if all(np.linalg.norm(modes[i] - c) >= bandwidth for c in kept):
            kept.append(modes[i])
    centers = np.array(kept)
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, centers


def top_two(labels: Mapping[str, int] | Sequence[int]) -> tuple[int, int]:
    """The two most populous cluster ids, largest first, ties to the smaller id."""
    values = labels.values() if isinstance(labels, Mapping) else labels
    sizes = Counter(int(v) for v in values if int(v) != UNASSIGNED)
    if len(sizes) < 2:
        raise NonPolarizedTopicError(f"found {len(sizes)} cluster(s); topic is not polarized")
    ranked = sorted(sizes.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[0][0], ranked[1][0]


def cluster_users(
    user_ids: Sequence[str],
    coords: np.ndarray,
    topic: str,
    bandwidth: float | None = None,
    quantile: float = 0.3,
    backend: str | None = None,
) -> ClusterAssignment:
    bw = bandwidth if bandwidth is not None else estimate_bandwidth(coords, quantile)
    labels, _ = mean_shift(coords, bw, backend=backend)
    mapping = {uid: int(lab) for uid, lab in zip(user_ids, labels)}
    c0, c1 = top_two(mapping)
    return ClusterAssignment(topic, mapping, c0, c1)


def purity(groups: Iterable[Iterable[str]], truth: Mapping[str, str]) -> float:
    """Fraction of members agreeing with their group's majority true label."""
    agree = total = 0
    for members in groups:
        tags = [truth[u] for u in members if u in truth]
        if tags:
            agree += Counter(tags).most_common(1)[0][1]
            total += len(tags)
    return agree / total if total else 0.0


def write_clusters_tsv(assign: ClusterAssignment, fh: IO[str]) -> None:
    fh.write("user_id\tcluster\tretained\n")
    for uid in sorted(assign.labels):
        lab = assign.labels[uid]
        fh.write(f"{uid}\t{lab}\t{int(lab in (assign.c0, assign.c1))}\n")


def read_clusters_tsv(lines: Iterable[str], topic: str) -> ClusterAssignment:
    labels = {}
    for line in lines:
        if line.startswith("#") or line.startswith("user_id\t") or not line.strip():
            continue
        uid, lab, _ = line.rstrip("\n").split("\t")
        labels[uid] = int(lab)
    c0, c1 = top_two(labels)
    return ClusterAssignment(topic, labels, c0, c1)
