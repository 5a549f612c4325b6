# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: covariance-mode LASSO coordinate descent and
presorted regression-tree growing.

Every routine here has a line-for-line twin in ``_pykernels``; the two must
perform the same floating-point operations in the same order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()


cdef inline double _soft(double z, double lam) nogil:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


cdef double _cd_sweep(const double[:, ::1] G, double[::1] g, double[::1] beta,
                      double lam, bint active_only) noexcept nogil:
    cdef Py_ssize_t p = beta.shape[0]
    cdef Py_ssize_t j, k
    cdef double bj, z, new, d, maxd = 0.0
    cdef const double* Gj
    cdef double* gp = &g[0]
    for j in range(p):
        bj = beta[j]
        if active_only and bj == 0.0:
            continue
        z = g[j] + G[j, j] * bj
        new = _soft(z, lam) / G[j, j]
        if new != bj:
            d = new - bj
            beta[j] = new
            Gj = &G[j, 0]
            for k in range(p):
                gp[k] -= Gj[k] * d
            if fabs(d) > maxd:
                maxd = fabs(d)
    return maxd


cdef double _active_sweep(const double[:, ::1] GA, double[::1] gA, double[::1] bA,
                          Py_ssize_t na, double lam) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double bj, z, new, d, maxd = 0.0
    cdef const double* Gj
    cdef double* gp = &gA[0]
    for j in range(na):
        bj = bA[j]
        if bj == 0.0:
            continue
        z = gA[j] + GA[j, j] * bj
        new = _soft(z, lam) / GA[j, j]
        if new != bj:
            d = new - bj
            bA[j] = new
            Gj = &GA[j, 0]
            for k in range(na):
                gp[k] -= Gj[k] * d
            if fabs(d) > maxd:
                maxd = fabs(d)
    return maxd


def lasso_path_gram(const double[:, ::1] G, const double[::1] c,
                    const double[::1] lambdas, double tol=1e-7,
                    long max_sweeps=10000):
    """Solve min 0.5 b'Gb - c'b + lam*|b|_1 along a descending lambda path.

    Each lambda alternates a full sweep with sweeps over the active set
    until the largest coefficient change falls below ``tol``. Active sweeps
    work on a compacted copy of the active block of ``G``; the accumulated
    change is pushed to the inactive gradient entries afterwards.

    Returns ``(betas, sweeps)`` with ``betas`` of shape (len(lambdas), p).
    """
    cdef Py_ssize_t p = c.shape[0]
    cdef Py_ssize_t L = lambdas.shape[0]
    cdef Py_ssize_t l, i, j, k, na
    cdef long total
    cdef double lam, maxd, dj
    betas_arr = np.zeros((L, p), dtype=np.float64)
    sweeps_arr = np.zeros(L, dtype=np.int64)
    beta_arr = np.zeros(p, dtype=np.float64)
    g_arr = np.array(c, dtype=np.float64, copy=True)
    GA_arr = np.zeros((p, p), dtype=np.float64)
    cdef double[:, ::1] betas = betas_arr
    cdef int64_t[::1] sweeps = sweeps_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] g = g_arr
    cdef double[:, ::1] GA = GA_arr
    cdef int64_t[::1] act = np.zeros(p, dtype=np.int64)
    cdef unsigned char[::1] is_act = np.zeros(p, dtype=np.uint8)
    cdef double[::1] gA = np.zeros(p, dtype=np.float64)
    cdef double[::1] bA = np.zeros(p, dtype=np.float64)
    cdef double[::1] b0 = np.zeros(p, dtype=np.float64)
    with nogil:
        for l in range(L):
            lam = lambdas[l]
            total = 0
            while True:
                maxd = _cd_sweep(G, g, beta, lam, False)
                total += 1
                if maxd < tol or total >= max_sweeps:
                    break
                na = 0
                for j in range(p):
                    is_act[j] = beta[j] != 0.0
                    if is_act[j]:
                        act[na] = j
                        na += 1
                for i in range(na):
                    j = act[i]
                    gA[i] = g[j]
                    bA[i] = beta[j]
                    b0[i] = beta[j]
                    for k in range(na):
                        GA[i, k] = G[j, act[k]]
                while True:
                    maxd = _active_sweep(GA, gA, bA, na, lam)
                    total += 1
                    if maxd < tol or total >= max_sweeps:
                        break
                for i in range(na):
                    j = act[i]
                    beta[j] = bA[i]
                    g[j] = gA[i]
                    dj = bA[i] - b0[i]
                    if dj != 0.0:
                        for k in range(p):
                            if not is_act[k]:
                                g[k] -= G[j, k] * dj
                if total >= max_sweeps:
                    break
            betas[l, :] = beta
            sweeps[l] = total
    return betas_arr, sweeps_arr


cdef inline uint64_t _splitmix(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def grow_tree(const double[:, ::1] XT, const double[::1] ys,
              long max_depth, long min_leaf, double min_gain,
              double gain_floor, double l2, long mtry, uint64_t seed):
    """Grow one regression tree on presorted columns.

    ``XT`` is the (p, m) transposed design over the sample positions and
    ``ys`` the (m,) targets. Returns flat node arrays
    ``(feature, threshold, left, right, value)``; ``feature == -1`` marks a leaf.
    """
    cdef Py_ssize_t p = XT.shape[0]
    cdef Py_ssize_t m = XT.shape[1]
    cdef Py_ssize_t cap = 2 * m + 1
    order_arr = np.empty((p + 1, m), dtype=np.int64)
    order_arr[:p] = np.argsort(np.asarray(XT), axis=1, kind="stable")
    order_arr[p] = np.arange(m, dtype=np.int64)
    cdef int64_t[:, ::1] order = order_arr
    tmp_arr = np.empty(m, dtype=np.int64)
    cdef int64_t[::1] tmp = tmp_arr
    left_flag_arr = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] goes_left = left_flag_arr
    feat_arr = np.full(cap, -1, dtype=np.int64)
    thr_arr = np.zeros(cap, dtype=np.float64)
    lch_arr = np.full(cap, -1, dtype=np.int64)
    rch_arr = np.full(cap, -1, dtype=np.int64)
    val_arr = np.zeros(cap, dtype=np.float64)
    cdef int64_t[::1] feature = feat_arr
    cdef double[::1] threshold = thr_arr
    cdef int64_t[::1] lch = lch_arr
    cdef int64_t[::1] rch = rch_arr
    cdef double[::1] value = val_arr
    perm_arr = np.arange(p, dtype=np.int64)
    cdef int64_t[::1] perm = perm_arr
    chosen_arr = np.zeros(p, dtype=np.uint8)
    cdef unsigned char[::1] chosen = chosen_arr
    # stack of (node, start, end, depth)
    stack_arr = np.zeros((cap, 4), dtype=np.int64)
    cdef int64_t[:, ::1] stack = stack_arr
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t n_nodes = 1
    cdef uint64_t state = seed
    cdef Py_ssize_t node, start, end, depth, n, i, j, r, pos, a, b, q
    cdef Py_ssize_t best_j, best_i, nl, nr, n_left
    cdef double s, sj, sl, sr, gain, best_gain, thr, best_thr, xa, xb
    cdef bint use_all = mtry <= 0 or mtry >= p

    with nogil:
        stack[0, 0] = 0
        stack[0, 1] = 0
        stack[0, 2] = m
        stack[0, 3] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top, 0]
            start = stack[top, 1]
            end = stack[top, 2]
            depth = stack[top, 3]
            n = end - start
            s = 0.0
            for i in range(start, end):
                s += ys[order[p, i]]
            value[node] = s / (n + l2)
            if depth >= max_depth or n < 2 * min_leaf or n < 2:
                continue
            if not use_all:
                for j in range(p):
                    perm[j] = j
                    chosen[j] = 0
                for i in range(mtry):
                    q = i + <Py_ssize_t>(_splitmix(&state) % <uint64_t>(p - i))
                    a = perm[i]
                    perm[i] = perm[q]
                    perm[q] = a
                    chosen[perm[i]] = 1
            best_gain = -1.0
            best_j = -1
            best_i = -1
            best_thr = 0.0
            for j in range(p):
                if not use_all and not chosen[j]:
                    continue
                sj = 0.0
                for i in range(start, end):
                    sj += ys[order[j, i]]
                sl = 0.0
                for i in range(start, end - 1):
                    pos = order[j, i]
                    sl += ys[pos]
                    nl = i - start + 1
                    nr = n - nl
                    if nr < min_leaf:
                        break
                    if nl < min_leaf:
                        continue
                    xa = XT[j, pos]
                    xb = XT[j, order[j, i + 1]]
                    if xb <= xa:
                        continue
                    sr = sj - sl
                    gain = sl * sl / (nl + l2) + sr * sr / (nr + l2) - sj * sj / (n + l2)
                    if gain > best_gain:
                        best_gain = gain
                        best_j = j
                        best_i = i - start + 1
                        thr = 0.5 * (xa + xb)
                        if thr >= xb:
                            thr = xa
                        best_thr = thr
            if best_j < 0 or best_gain < min_gain or best_gain <= gain_floor:
                continue
            for i in range(start, end):
                pos = order[p, i]
                goes_left[pos] = XT[best_j, pos] <= best_thr
            n_left = 0
            for r in range(p + 1):
                a = start
                b = 0
                for i in range(start, end):
                    pos = order[r, i]
                    if goes_left[pos]:
                        order[r, a] = pos
                        a += 1
                    else:
                        tmp[b] = pos
                        b += 1
                for i in range(b):
                    order[r, a + i] = tmp[i]
                n_left = a - start
            feature[node] = best_j
            threshold[node] = best_thr
            lch[node] = n_nodes
            rch[node] = n_nodes + 1
            # right pushed first so the left child is expanded first
            stack[top, 0] = n_nodes + 1
            stack[top, 1] = start + n_left
            stack[top, 2] = end
            stack[top, 3] = depth + 1
            top += 1
            stack[top, 0] = n_nodes
            stack[top, 1] = start
            stack[top, 2] = start + n_left
            stack[top, 3] = depth + 1
            top += 1
            n_nodes += 2
    return (feat_arr[:n_nodes].copy(), thr_arr[:n_nodes].copy(),
            lch_arr[:n_nodes].copy(), rch_arr[:n_nodes].copy(),
            val_arr[:n_nodes].copy())


def predict_tree(const double[:, ::1] X, const int64_t[::1] feature,
                 const double[::1] threshold, const int64_t[::1] left,
                 const int64_t[::1] right, const double[::1] value):
    """Route each row of ``X`` to its leaf and return the leaf values."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, node
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = value[node]
    return out_arr
