"""Pure-Python twins of the compiled kernels in ``_ckernels.pyx``.

Same algorithms, same operation order. Used when the extension is not built
or when ``PANELDML_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def _soft(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def _cd_sweep(G, g, beta, lam, active_only):
    maxd = 0.0
    diag = _diag_cache(G)
    idx = np.flatnonzero(beta) if active_only else range(beta.shape[0])
    for j in idx:
        bj = float(beta[j])
        gjj = diag[j]
        z = float(g[j]) + gjj * bj
        new = _soft(z, lam) / gjj
        if new != bj:
            d = new - bj
            beta[j] = new
            g -= G[j] * d
            if abs(d) > maxd:
                maxd = abs(d)
    return maxd


def _diag_cache(G):
    return G.diagonal().tolist()


def _active_sweep(GA, gA, bA, lam):
    maxd = 0.0
    diag = GA.diagonal().tolist()
    for j in np.flatnonzero(bA):
        bj = float(bA[j])
        z = float(gA[j]) + diag[j] * bj
        new = _soft(z, lam) / diag[j]
        if new != bj:
            d = new - bj
            bA[j] = new
            gA -= GA[j] * d
            if abs(d) > maxd:
                maxd = abs(d)
    return maxd


def lasso_path_gram(G, c, lambdas, tol=1e-7, max_sweeps=10000):
    G = np.ascontiguousarray(G, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    p = c.shape[0]
    betas = np.zeros((lambdas.shape[0], p))
    sweeps = np.zeros(lambdas.shape[0], dtype=np.int64)
    beta = np.zeros(p)
    g = c.copy()
    for l, lam in enumerate(lambdas.tolist()):
        total = 0
        while True:
            maxd = _cd_sweep(G, g, beta, lam, False)
            total += 1
            if maxd < tol or total >= max_sweeps:
                break
            act = np.flatnonzero(beta)
            inactive = beta == 0.0
            GA = np.ascontiguousarray(G[np.ix_(act, act)])
            gA = g[act].copy()
            bA = beta[act].copy()
            b0 = bA.copy()
            while True:
                maxd = _active_sweep(GA, gA, bA, lam)
                total += 1
                if maxd < tol or total >= max_sweeps:
                    break
            for i, j in enumerate(act.tolist()):
                beta[j] = bA[i]
                g[j] = gA[i]
                dj = float(bA[i] - b0[i])
                if dj != 0.0:
                    g[inactive] -= G[j, inactive] * dj
            if total >= max_sweeps:
                break
        betas[l] = beta
        sweeps[l] = total
    return betas, sweeps


def _splitmix(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def grow_tree(XT, ys, max_depth, min_leaf, min_gain, gain_floor, l2, mtry, seed):
    XT = np.ascontiguousarray(XT, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    p, m = XT.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    use_all = mtry <= 0 or mtry >= p
    state = int(seed) & _MASK
    new_node()
    # positions kept in ascending order, matching the stable partitions
    stack = [(0, np.arange(m), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = idx.shape[0]
        yn = ys[idx]
        s = float(np.cumsum(yn)[-1])
        value[node] = s / (n + l2)
        if depth >= max_depth or n < 2 * min_leaf or n < 2:
            continue
        if use_all:
            feats = np.arange(p)
        else:
            perm = list(range(p))
            for i in range(mtry):
                state, z = _splitmix(state)
                q = i + z % (p - i)
                perm[i], perm[q] = perm[q], perm[i]
            feats = np.sort(np.asarray(perm[:mtry], dtype=np.int64))
        xs = XT[feats][:, idx]
        order = np.argsort(xs, axis=1, kind="stable")
        xsorted = np.take_along_axis(xs, order, axis=1)
        ysorted = yn[order]
        cs = np.cumsum(ysorted, axis=1)
        sj = cs[:, -1:]
        sl = cs[:, :-1]
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        sr = sj - sl
        gain = sl * sl / (nl + l2) + sr * sr / (nr + l2) - sj * sj / (n + l2)
        valid = (xsorted[:, 1:] > xsorted[:, :-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        fi, pos = divmod(flat, n - 1)
        best_gain = float(gain[fi, pos])
        if best_gain <= -1.0 or best_gain < min_gain or best_gain <= gain_floor:
            continue
        xa = float(xsorted[fi, pos])
        xb = float(xsorted[fi, pos + 1])
        thr = 0.5 * (xa + xb)
        if thr >= xb:
            thr = xa
        j = int(feats[fi])
        goes_left = XT[j, idx] <= thr
        lidx = idx[goes_left]
        ridx = idx[~goes_left]
        ln = new_node()
        rn = new_node()
        feature[node] = j
        threshold[node] = thr
        left[node] = ln
        right[node] = rn
        stack.append((rn, ridx, depth + 1))
        stack.append((ln, lidx, depth + 1))
    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


def predict_tree(X, feature, threshold, left, right, value):
    X = np.asarray(X, dtype=np.float64)
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    while True:
        f = feature[node]
        inner = f >= 0
        if not inner.any():
            break
        ri = rows[inner]
        ni = node[inner]
        go_left = X[ri, f[inner]] <= threshold[ni]
        node[ri] = np.where(go_left, left[ni], right[ni])
    return value[node]
