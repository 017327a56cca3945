# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a line-for-line twin in ``_pykernels``; both consume
the same splitmix64 stream so a fixed seed gives the same trajectory on
either backend.
"""
import numpy as np

from libc.math cimport exp, pow, sqrt
from libc.stdint cimport int32_t, int64_t, uint64_t

BACKEND = "cython"


cdef inline uint64_t _next(uint64_t* s) noexcept nogil:
    s[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = s[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t* s) noexcept nogil:
    return <double>(_next(s) >> 11) * (1.0 / 9007199254740992.0)


cdef inline double _clip(double v) noexcept nogil:
    if v > 4.0:
        return 4.0
    if v < -4.0:
        return -4.0
    return v


def layout_epochs(
    const int32_t[::1] head,
    const int32_t[::1] tail,
    const double[::1] epochs_per_sample,
    double[::1] next_sample,
    const double[::1] epochs_per_negative,
    double[::1] next_negative,
    double[:, ::1] embedding,
    int start_epoch,
    int stop_epoch,
    int n_epochs,
    double a,
    double b,
    double gamma,
    double initial_alpha,
    uint64_t[::1] rng_state,
):
    """Run layout SGD epochs ``[start_epoch, stop_epoch)`` in place."""
    cdef Py_ssize_t n_edges = head.shape[0]
    cdef Py_ssize_t n_vertices = embedding.shape[0]
    cdef Py_ssize_t dim = embedding.shape[1]
    cdef Py_ssize_t i, d, j, k, p
    cdef int epoch, n_neg
    cdef double alpha, dist_sq, diff, coeff, g
    cdef uint64_t s = rng_state[0]

    with nogil:
        for epoch in range(start_epoch, stop_epoch):
            alpha = initial_alpha * (1.0 - <double>epoch / <double>n_epochs)
            for i in range(n_edges):
                if next_sample[i] > epoch:
                    continue
                j = head[i]
                k = tail[i]
                dist_sq = 0.0
                for d in range(dim):
                    diff = embedding[j, d] - embedding[k, d]
                    dist_sq = dist_sq + diff * diff
                if dist_sq > 0.0:
                    coeff = (-2.0 * a * b * pow(dist_sq, b - 1.0)) / (a * pow(dist_sq, b) + 1.0)
                else:
                    coeff = 0.0
                for d in range(dim):
                    g = _clip(coeff * (embedding[j, d] - embedding[k, d]))
                    embedding[j, d] = embedding[j, d] + g * alpha
                    embedding[k, d] = embedding[k, d] - g * alpha
                next_sample[i] = next_sample[i] + epochs_per_sample[i]

                n_neg = <int>((epoch - next_negative[i]) / epochs_per_negative[i])
                for p in range(n_neg):
                    k = <Py_ssize_t>(_next(&s) % <uint64_t>n_vertices)
                    dist_sq = 0.0
                    for d in range(dim):
                        diff = embedding[j, d] - embedding[k, d]
                        dist_sq = dist_sq + diff * diff
                    if dist_sq > 0.0:
                        coeff = (2.0 * gamma * b) / ((0.001 + dist_sq) * (a * pow(dist_sq, b) + 1.0))
                    elif j == k:
                        continue
                    else:
                        coeff = 0.0
                    for d in range(dim):
                        if coeff > 0.0:
                            g = _clip(coeff * (embedding[j, d] - embedding[k, d]))
                        else:
                            g = 4.0
                        embedding[j, d] = embedding[j, d] + g * alpha
                if n_neg > 0:
                    next_negative[i] = next_negative[i] + n_neg * epochs_per_negative[i]
    rng_state[0] = s


def mean_shift_seeds(
    const double[:, ::1] points,
    const double[:, ::1] seeds,
    double bandwidth,
    int max_iter,
    double stop_thresh,
):
    """Flat-kernel mode seeking from each seed; returns (modes, support)."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t dim = points.shape[1]
    cdef Py_ssize_t m = seeds.shape[0]
    cdef Py_ssize_t s, i, d
    cdef int it
    cdef int64_t count
    cdef double bw2 = bandwidth * bandwidth
    cdef double dist_sq, diff, shift

    modes_arr = np.array(seeds, dtype=np.float64, copy=True)
    support_arr = np.zeros(m, dtype=np.int64)
    acc_arr = np.zeros(dim, dtype=np.float64)
    cdef double[:, ::1] modes = modes_arr
    cdef int64_t[::1] support = support_arr
    cdef double[::1] acc = acc_arr

    with nogil:
        for s in range(m):
            count = 0
            for it in range(max_iter):
                for d in range(dim):
                    acc[d] = 0.0
                count = 0
                for i in range(n):
                    dist_sq = 0.0
                    for d in range(dim):
                        diff = points[i, d] - modes[s, d]
                        dist_sq = dist_sq + diff * diff
                    if dist_sq <= bw2:
                        count = count + 1
                        for d in range(dim):
                            acc[d] = acc[d] + points[i, d]
                if count == 0:
                    break
                shift = 0.0
                for d in range(dim):
                    diff = acc[d] / count - modes[s, d]
                    shift = shift + diff * diff
                    modes[s, d] = acc[d] / count
                if sqrt(shift) < stop_thresh:
                    break
            support[s] = count
    return modes_arr, support_arr


cdef inline bint _has_edge(
    const int64_t[::1] indptr, const int32_t[::1] indices, int64_t u, int64_t v
) noexcept nogil:
    cdef int64_t lo = indptr[u]
    cdef int64_t hi = indptr[u + 1]
    cdef int64_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[u + 1] and indices[lo] == v


def node2vec_walks(
    const int64_t[::1] indptr,
    const int32_t[::1] indices,
    const double[::1] weights,
    const int64_t[::1] starts,
    int walk_length,
    double inv_p,
    double inv_q,
    uint64_t[::1] rng_state,
):
    """Second-order biased walks; rows padded with -1 after a dead end."""
    cdef Py_ssize_t n_walks = starts.shape[0]
    cdef Py_ssize_t w, step
    cdef int64_t cur, prev, e, lo, hi, pick, x
    cdef double total, r, acc, tw
    cdef uint64_t s = rng_state[0]

    walks_arr = np.full((n_walks, walk_length), -1, dtype=np.int64)
    cdef int64_t[:, ::1] walks = walks_arr

    with nogil:
        for w in range(n_walks):
            cur = starts[w]
            walks[w, 0] = cur
            prev = -1
            for step in range(1, walk_length):
                lo = indptr[cur]
                hi = indptr[cur + 1]
                if lo == hi:
                    break
                total = 0.0
                for e in range(lo, hi):
                    x = indices[e]
                    if prev < 0:
                        tw = weights[e]
                    elif x == prev:
                        tw = weights[e] * inv_p
                    elif _has_edge(indptr, indices, prev, x):
                        tw = weights[e]
                    else:
                        tw = weights[e] * inv_q
                    total = total + tw
                r = _uniform(&s) * total
                acc = 0.0
                pick = hi - 1
                for e in range(lo, hi):
                    x = indices[e]
                    if prev < 0:
                        tw = weights[e]
                    elif x == prev:
                        tw = weights[e] * inv_p
                    elif _has_edge(indptr, indices, prev, x):
                        tw = weights[e]
                    else:
                        tw = weights[e] * inv_q
                    acc = acc + tw
                    if r < acc:
                        pick = e
                        break
                prev = cur
                cur = indices[pick]
                walks[w, step] = cur
    rng_state[0] = s
    return walks_arr


cdef inline Py_ssize_t _draw_negative(const double[::1] cdf, uint64_t* s) noexcept nogil:
    cdef double r = _uniform(s) * cdf[cdf.shape[0] - 1]
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = cdf.shape[0] - 1
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] <= r:
            lo = mid + 1
        else:
            hi = mid
    return lo


def sgns_train(
    const int32_t[::1] corpus,
    const int64_t[::1] offsets,
    double[:, ::1] syn0,
    double[:, ::1] syn1,
    const double[::1] neg_cdf,
    int window,
    int negatives,
    int epochs,
    double lr0,
    double min_lr,
    uint64_t[::1] rng_state,
):
    """Skip-gram with negative sampling over walk sentences, in place."""
    cdef Py_ssize_t n_sent = offsets.shape[0] - 1
    cdef Py_ssize_t dim = syn0.shape[1]
    cdef Py_ssize_t sent, pos, ctx_pos, start, end, lo, hi, d, t
    cdef int ep, reduced
    cdef int32_t center, ctx, target
    cdef double total_words = <double>corpus.shape[0] * epochs
    cdef double processed = 0.0
    cdef double lr, f, g, label
    cdef uint64_t s = rng_state[0]

    work_arr = np.zeros(dim, dtype=np.float64)
    cdef double[::1] work = work_arr

    with nogil:
        for ep in range(epochs):
            for sent in range(n_sent):
                start = offsets[sent]
                end = offsets[sent + 1]
                for pos in range(start, end):
                    lr = lr0 - (lr0 - min_lr) * (processed / total_words)
                    processed = processed + 1.0
                    center = corpus[pos]
                    reduced = window - <int>(_next(&s) % <uint64_t>window)
                    lo = pos - reduced
                    if lo < start:
                        lo = start
                    hi = pos + reduced + 1
                    if hi > end:
                        hi = end
                    for ctx_pos in range(lo, hi):
                        if ctx_pos == pos:
                            continue
                        ctx = corpus[ctx_pos]
                        for d in range(dim):
                            work[d] = 0.0
                        for t in range(negatives + 1):
                            if t == 0:
                                target = center
                                label = 1.0
                            else:
                                target = <int32_t>_draw_negative(neg_cdf, &s)
                                if target == center:
                                    continue
                                label = 0.0
                            f = 0.0
                            for d in range(dim):
                                f = f + syn0[ctx, d] * syn1[target, d]
                            if f > 6.0:
                                g = (label - 1.0) * lr
                            elif f < -6.0:
                                g = label * lr
                            else:
                                g = (label - 1.0 / (1.0 + exp(-f))) * lr
                            for d in range(dim):
                                work[d] = work[d] + g * syn1[target, d]
                                syn1[target, d] = syn1[target, d] + g * syn0[ctx, d]
                        for d in range(dim):
                            syn0[ctx, d] = syn0[ctx, d] + work[d]
    rng_state[0] = s
