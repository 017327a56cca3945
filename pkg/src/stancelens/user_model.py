"""Retweet count vectors per user and their cosine similarities."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .ingest import Post

DEFAULT_MATRIX_CAP = 2000


@dataclass
class UserVector:
    user_id: str
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.counts.values()))

    @property
    def n_accounts(self) -> int:
        return len(self.counts)

    def tokens(self) -> list[str]:
        """Account ids repeated once per retweet, in sorted account order."""
        return [acc for acc in sorted(self.counts) for _ in range(self.counts[acc])]


@dataclass
class SimilarityMatrix:
    user_ids: list[str]
    values: np.ndarray


def build_vectors(posts: Iterable[Post]) -> dict[str, UserVector]:
    counts: dict[str, Counter] = {}
    for post in posts:
        if post.retweeted_author_id is None:
            continue
        counts.setdefault(post.author_id, Counter())[post.retweeted_author_id] += 1
    return {uid: UserVector(uid, dict(sorted(c.items()))) for uid, c in sorted(counts.items())}


def top_active(posts: Iterable[Post], n: int, by: str = "posts") -> list[str]:
    """The ``n`` most active users; ties broken by user id.

    ``by="posts"`` counts topic posts, ``by="retweets"`` counts retweets only.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if by not in ("posts", "retweets"):
        raise ValueError(f"unknown activity measure {by!r}")
    activity: Counter = Counter()
    for post in posts:
        if by == "posts" or post.retweeted_author_id is not None:
            activity[post.author_id] += 1
    ranked = sorted(activity.items(), key=lambda kv: (-kv[1], kv[0]))
    return [uid for uid, _ in ranked[:n]]


def cosine(u: UserVector, v: UserVector) -> float:
    nu, nv = u.norm, v.norm
    if nu == 0.0 or nv == 0.0:
        return 0.0
    small, large = (u.counts, v.counts) if len(u.counts) <= len(v.counts) else (v.counts, u.counts)
    dot = sum(c * large.get(k, 0) for k, c in small.items())
    return min(1.0, dot / (nu * nv))


def count_matrix(
    vectors: Mapping[str, UserVector], user_ids: Sequence[str]
) -> tuple[sparse.csr_matrix, list[str]]:
    """Sparse user x account count matrix over the accounts these users retweeted."""
    accounts = sorted({a for uid in user_ids for a in vectors[uid].counts})
    col = {a: i for i, a in enumerate(accounts)}
    rows, cols, vals = [], [], []
    for r, uid in enumerate(user_ids):
        for acc, c in vectors[uid].counts.items():
            rows.append(r)
            cols.append(col[acc])
            vals.append(float(c))
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(user_ids), len(accounts)))
    return mat, accounts


def similarity_matrix(
    vectors: Mapping[str, UserVector],
    user_ids: Sequence[str],
    cap: int = DEFAULT_MATRIX_CAP,
) -> SimilarityMatrix:
    user_ids = list(user_ids)
    missing = [u for u in user_ids if u not in vectors]
    if missing:
        raise KeyError(f"no vector for users {missing[:5]}")
    if len(user_ids) > cap:
        raise ValueError(f"{len(user_ids)} users exceed the dense matrix cap of {cap}")
    mat, _ = count_matrix(vectors, user_ids)
    norms = np.sqrt(np.asarray(mat.multiply(mat).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    unit = sparse.diags(inv) @ mat
    sim = np.asarray((unit @ unit.T).todense())
    sim = np.clip(0.5 * (sim + sim.T), 0.0, 1.0)
    np.fill_diagonal(sim, np.where(norms > 0, 1.0, 0.0))
    return SimilarityMatrix(user_ids, sim)


def write_vectors_tsv(vectors: Mapping[str, UserVector], fh: IO[str]) -> None:
    fh.write("user_id\taccount_id\tcount\n")
    for uid in sorted(vectors):
        for acc, c in vectors[uid].counts.items():
            fh.write(f"{uid}\t{acc}\t{c}\n")


def read_vectors_tsv(lines: Iterable[str]) -> dict[str, UserVector]:
    out: dict[str, UserVector] = {}
    for line in lines:
        if line.startswith("#") or line.startswith("user_id\t") or not line.strip():
            continue
        uid, acc, c = line.rstrip("\n").split("\t")
        out.setdefault(uid, UserVector(uid)).counts[acc] = int(c)
    return out
