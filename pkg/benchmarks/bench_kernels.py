"""Compare the compiled and pure-Python kernels on representative inputs.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on
both backends and the outputs are checked for agreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from paneldml import _pykernels

try:
    from paneldml import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best_of(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def lasso_case(n: int, p: int, seed: int):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: max(1, p // 10)] = rng.uniform(1, 3, max(1, p // 10))
    y = X @ beta + rng.standard_normal(n)
    Z = (X - X.mean(0)) / X.std(0)
    yc = y - y.mean()
    G = Z.T @ Z / n
    c = Z.T @ yc / n
    lam_max = np.max(np.abs(c))
    lams = lam_max * np.logspace(0, -4, 100)
    return G, c, lams


def tree_case(n: int, p: int, seed: int):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = np.sin(X[:, 0]) + X[:, 1] * (X[:, 2] > 0) + 0.3 * rng.standard_normal(n)
    return np.ascontiguousarray(X.T), y


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled kernels not built; run pip install -e . first")

    lasso_sizes = [(2000, 60), (4000, 200)] if not args.quick else [(500, 40)]
    tree_sizes = [(2000, 10), (9000, 60)] if not args.quick else [(500, 5)]
    rows = []

    for n, p in lasso_sizes:
        G, c, lams = lasso_case(n, p, seed=n + p)
        out_c = _ckernels.lasso_path_gram(G, c, lams, 1e-7, 10000)
        out_py = _pykernels.lasso_path_gram(G, c, lams, 1e-7, 10000)
        diff = float(np.max(np.abs(out_c[0] - out_py[0])))
        tc = _best_of(lambda: _ckernels.lasso_path_gram(G, c, lams, 1e-7, 10000), args.repeat)
        tp = _best_of(lambda: _pykernels.lasso_path_gram(G, c, lams, 1e-7, 10000), 1)
        rows.append((f"lasso_path_gram p={p}", tc, tp, diff))

    for n, p in tree_sizes:
        XT, y = tree_case(n, p, seed=n + p)
        argv_ = (XT, y, 8, 5, 0.0, 1e-12 * float(y @ y), 0.0, 0, 7)
        out_c = _ckernels.grow_tree(*argv_)
        out_py = _pykernels.grow_tree(*argv_)
        diff = float(np.max(np.abs(np.asarray(out_c[4]) - np.asarray(out_py[4]))))
        tc = _best_of(lambda: _ckernels.grow_tree(*argv_), args.repeat)
        tp = _best_of(lambda: _pykernels.grow_tree(*argv_), 1)
        rows.append((f"grow_tree n={n} p={p}", tc, tp, diff))

    print(f"{'kernel':<28}{'cython s':>12}{'python s':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, tc, tp, diff in rows:
        print(f"{name:<28}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
