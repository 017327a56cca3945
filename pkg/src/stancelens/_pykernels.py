"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

Loops and arithmetic order follow the Cython source so that both backends
draw the same random stream; use this module when the extension is not
built or when ``STANCELENS_BACKEND=python`` is set.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_MASK = (1 << 64) - 1
_INV_2_53 = 1.0 / 9007199254740992.0


class _SplitMix:
    __slots__ = ("state",)

    def __init__(self, state: int) -> None:
        self.state = int(state)

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next() >> 11) * _INV_2_53


def _clip(v: float) -> float:
    if v > 4.0:
        return 4.0
    if v < -4.0:
        return -4.0
    return v


def layout_epochs(
    head,
    tail,
    epochs_per_sample,
    next_sample,
    epochs_per_negative,
    next_negative,
    embedding,
    start_epoch,
    stop_epoch,
    n_epochs,
    a,
    b,
    gamma,
    initial_alpha,
    rng_state,
):
    rng = _SplitMix(rng_state[0])
    n_vertices, dim = embedding.shape
    emb = embedding.tolist()
    head_l = head.tolist()
    tail_l = tail.tolist()
    eps = epochs_per_sample.tolist()
    eps_neg = epochs_per_negative.tolist()
    nxt = next_sample.tolist()
    nxt_neg = next_negative.tolist()

    for epoch in range(start_epoch, stop_epoch):
        alpha = initial_alpha * (1.0 - float(epoch) / float(n_epochs))
        for i in range(len(head_l)):
            if nxt[i] > epoch:
                continue
            cur = emb[head_l[i]]
            other = emb[tail_l[i]]
            dist_sq = 0.0
            for d in range(dim):
                diff = cur[d] - other[d]
                dist_sq = dist_sq + diff * diff
            if dist_sq > 0.0:
                coeff = (-2.0 * a * b * math.pow(dist_sq, b - 1.0)) / (a * math.pow(dist_sq, b) + 1.0)
            else:
                coeff = 0.0
            for d in range(dim):
                g = _clip(coeff * (cur[d] - other[d]))
                cur[d] = cur[d] + g * alpha
                other[d] = other[d] - g * alpha
            nxt[i] = nxt[i] + eps[i]

            n_neg = int((epoch - nxt_neg[i]) / eps_neg[i])
            j = head_l[i]
            for _ in range(n_neg):
                k = rng.next() % n_vertices
                other = emb[k]
                dist_sq = 0.0
                for d in range(dim):
                    diff = cur[d] - other[d]
                    dist_sq = dist_sq + diff * diff
                if dist_sq > 0.0:
                    coeff = (2.0 * gamma * b) / ((0.001 + dist_sq) * (a * math.pow(dist_sq, b) + 1.0))
                elif j == k:
                    continue
                else:
                    coeff = 0.0
                for d in range(dim):
                    if coeff > 0.0:
                        g = _clip(coeff * (cur[d] - other[d]))
                    else:
                        g = 4.0
                    cur[d] = cur[d] + g * alpha
            if n_neg > 0:
                nxt_neg[i] = nxt_neg[i] + n_neg * eps_neg[i]

    embedding[:] = np.asarray(emb, dtype=np.float64).reshape(n_vertices, dim)
    next_sample[:] = nxt
    next_negative[:] = nxt_neg
    rng_state[0] = rng.state


def mean_shift_seeds(points, seeds, bandwidth, max_iter, stop_thresh):
    modes = np.array(seeds, dtype=np.float64, copy=True)
    support = np.zeros(len(modes), dtype=np.int64)
    bw2 = bandwidth * bandwidth
    for s in range(len(modes)):
        mode = modes[s]
        count = 0
        for _ in range(max_iter):
            dist_sq = ((points - mode) ** 2).sum(axis=1)
            within = points[dist_sq <= bw2]
            count = len(within)
            if count == 0:
                break
            new = within.sum(axis=0) / count
            shift = math.sqrt(float(((new - mode) ** 2).sum()))
            mode[:] = new
            if shift < stop_thresh:
                break
        support[s] = count
    return modes, support


def _has_edge(indptr, indices, u, v) -> bool:
    lo, hi = indptr[u], indptr[u + 1]
    end = hi
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < end and indices[lo] == v


def node2vec_walks(indptr, indices, weights, starts, walk_length, inv_p, inv_q, rng_state):
    rng = _SplitMix(rng_state[0])
    indptr_l = indptr.tolist()
    indices_l = indices.tolist()
    weights_l = weights.tolist()
    walks = np.full((len(starts), walk_length), -1, dtype=np.int64)

    def step_weight(e, prev):
        x = indices_l[e]
        if prev < 0:
            return weights_l[e]
        if x == prev:
            return weights_l[e] * inv_p
        if _has_edge(indptr_l, indices_l, prev, x):
            return weights_l[e]
        return weights_l[e] * inv_q

    for w, start in enumerate(starts.tolist()):
        cur = start
        walks[w, 0] = cur
        prev = -1
        for step in range(1, walk_length):
            lo, hi = indptr_l[cur], indptr_l[cur + 1]
            if lo == hi:
                break
            total = 0.0
            for e in range(lo, hi):
                total = total + step_weight(e, prev)
            r = rng.uniform() * total
            acc = 0.0
            pick = hi - 1
            for e in range(lo, hi):
                acc = acc + step_weight(e, prev)
                if r < acc:
                    pick = e
                    break
            prev = cur
            cur = indices_l[pick]
            walks[w, step] = cur
    rng_state[0] = rng.state
    return walks


def _draw_negative(cdf, rng: _SplitMix) -> int:
    r = rng.uniform() * cdf[-1]
    lo, hi = 0, len(cdf) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] <= r:
            lo = mid + 1
        else:
            hi = mid
    return lo


def sgns_train(corpus, offsets, syn0, syn1, neg_cdf, window, negatives, epochs, lr0, min_lr, rng_state):
    rng = _SplitMix(rng_state[0])
    corpus_l = corpus.tolist()
    offsets_l = offsets.tolist()
    cdf = neg_cdf.tolist()
    total_words = float(len(corpus_l)) * epochs
    processed = 0.0

    for _ in range(epochs):
        for sent in range(len(offsets_l) - 1):
            start, end = offsets_l[sent], offsets_l[sent + 1]
            for pos in range(start, end):
                lr = lr0 - (lr0 - min_lr) * (processed / total_words)
                processed = processed + 1.0
                center = corpus_l[pos]
                reduced = window - rng.next() % window
                lo = max(pos - reduced, start)
                hi = min(pos + reduced + 1, end)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    ctx = corpus_l[ctx_pos]
                    l1 = syn0[ctx]
                    work = np.zeros(syn0.shape[1])
                    for t in range(negatives + 1):
                        if t == 0:
                            target, label = center, 1.0
                        else:
                            target = _draw_negative(cdf, rng)
                            if target == center:
                                continue
                            label = 0.0
                        f = float(l1 @ syn1[target])
                        if f > 6.0:
                            g = (label - 1.0) * lr
                        elif f < -6.0:
                            g = label * lr
                        else:
                            g = (label - 1.0 / (1.0 + math.exp(-f))) * lr
                        work += g * syn1[target]
                        syn1[target] += g * l1
                    l1 += work
    rng_state[0] = rng.state
