"""Least squares and cross-validated LASSO."""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.linalg import blas

from .. import kernels
from ..errors import AllZeroVarianceColumns, RankDeficient
from .base import NuisanceModel, set_train_rmse


class LinearModel(NuisanceModel):
    def __init__(self, intercept: float, coef: np.ndarray, kind: str = "ols", **info):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=np.float64)
        self.kind = kind
        self.info = info

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        return X @ self.coef + self.intercept

    def to_dict(self):
        out = super().to_dict()
        out.update(intercept=self.intercept, coef=self.coef.tolist())
        out.update({k: v for k, v in self.info.items() if np.isscalar(v)})
        return out


def fit_ols(X, y, column_names=None) -> LinearModel:
    """Least squares with an intercept.

    The rank check runs an unpivoted QR on the norm-scaled design
    ``[1, X]``; the first column whose diagonal falls below tolerance is
    reported as linearly dependent on its predecessors.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    A = np.empty((n, p + 1))
    A[:, 0] = 1.0
    A[:, 1:] = X
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    norms[norms == 0] = 1.0
    A /= norms
    Q, R = linalg.qr(A, mode="economic")
    diag = np.abs(np.diag(R))
    tol = max(n, p + 1) * np.finfo(float).eps * 100
    if n < p + 1 or np.any(diag <= tol):
        bad = int(np.flatnonzero(diag <= tol)[0]) if np.any(diag <= tol) else n
        col = "intercept" if bad == 0 else (column_names[bad - 1] if column_names else f"x{bad}")
        raise RankDeficient(col)
    beta = linalg.solve_triangular(R, Q.T @ y) / norms
    return set_train_rmse(LinearModel(beta[0], beta[1:], "ols"), X, y)


def cv_fold_ids(n: int, k: int, seed: int, groups=None) -> np.ndarray:
    """Fold index per row; rows sharing a group label share a fold."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if groups is None:
        perm = rng.permutation(n)
        ids = np.empty(n, dtype=np.int64)
        ids[perm] = np.arange(n) % k
        return ids
    labels, inv = np.unique(np.asarray(groups), return_inverse=True)
    perm = rng.permutation(len(labels))
    gid = np.empty(len(labels), dtype=np.int64)
    gid[perm] = np.arange(len(labels)) % k
    return gid[inv]


def _standardize(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 1e-10 * np.maximum(1.0, np.abs(mu))
    if not keep.any():
        raise AllZeroVarianceColumns()
    return mu, sd, keep


def lambda_grid(lam_max: float, n_lambda: int = 100, ratio: float = 1e-4) -> np.ndarray:
    if lam_max <= 0:
        return np.zeros(1)
    return lam_max * np.logspace(0.0, np.log10(ratio), n_lambda)


def lasso_path(G, c, lambdas, tol: float = 1e-7, max_sweeps: int = 10000):
    """Coordinate-descent path for 0.5 b'Gb - c'b + lam |b|_1 (warm starts)."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    lambdas = np.ascontiguousarray(lambdas, dtype=np.float64)
    return kernels.lasso_path_gram(G, c, lambdas, tol, max_sweeps)


def _gram(A: np.ndarray) -> np.ndarray:
    """Symmetric ``A'A`` via a rank-k update, mirrored to a full matrix."""
    S = blas.dsyrk(1.0, np.asfortranarray(A), trans=1)
    iu = np.triu_indices_from(S, 1)
    S[(iu[1], iu[0])] = S[iu]
    return S


class LassoDesign:
    """Standardized design and per-fold cross products, reusable across targets.

    Columns are standardized with the full-sample mean and population sd;
    zero-variance columns are dropped.
    """

    def __init__(self, X, cv_folds: int = 5, seed: int = 0, groups=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        self.n, self.p = X.shape
        self.cv_folds = cv_folds
        self.mu, self.sd, self.keep = _standardize(X)
        self.Z = (X[:, self.keep] - self.mu[self.keep]) / self.sd[self.keep]
        self.ids = cv_fold_ids(self.n, cv_folds, seed, groups)
        self.rows = [self.ids == f for f in range(cv_folds)]
        self.S_fold = [_gram(self.Z[r]) for r in self.rows]
        self.z_fold = [self.Z[r].sum(0) for r in self.rows]
        self.S = np.sum(self.S_fold, axis=0)
        self.zsum = self.Z.sum(0)


def fit_lasso_cv(X, y, lambda_grid_=None, cv_folds: int = 5, seed: int = 0, groups=None,
                 n_lambda: int = 100, lambda_ratio: float = 1e-4,
                 design: LassoDesign | None = None) -> LinearModel:
    """LASSO at the lambda with minimum mean cross-validated squared error.

    Columns are standardized with the full-sample mean and population sd
    (zero-variance columns dropped), the target is centered, the intercept
    is unpenalized. Each CV fold re-centers on its own training rows; the
    fold Gram is the total Gram minus the held-out block. Ties in CV error
    go to the larger lambda. Coefficients are returned on the original scale.
    A prebuilt ``design`` for the same ``X`` skips the standardization and Grams.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if design is None:
        design = LassoDesign(X, cv_folds, seed, groups)
    D = design
    n, p = X.shape
    Z, mu, sd, keep = D.Z, D.mu, D.sd, D.keep
    ybar = float(y.mean())
    yc = y - ybar
    S = D.S
    sv_fold = [Z[r].T @ yc[r] for r in D.rows]
    sv = np.sum(sv_fold, axis=0)
    G = S / n
    c = sv / n
    if lambda_grid_ is None:
        lams = lambda_grid(float(np.max(np.abs(c))), n_lambda, lambda_ratio)
    else:
        lams = np.asarray(lambda_grid_, dtype=np.float64)
        if np.any(np.diff(lams) > 0):
            raise ValueError("lambda grid must be sorted in descending order")

    cv_err = np.zeros((D.cv_folds, len(lams)))
    ysum = yc.sum()
    for f, rows in enumerate(D.rows):
        m = n - int(rows.sum())
        zm = (D.zsum - D.z_fold[f]) / m
        ym = (ysum - yc[rows].sum()) / m
        Gt = (S - D.S_fold[f]) / m - np.outer(zm, zm)
        ct = (sv - sv_fold[f]) / m - zm * ym
        betas, _ = lasso_path(Gt, ct, lams)
        pred = (Z[rows] - zm) @ betas.T + ym
        cv_err[f] = np.mean((yc[rows][:, None] - pred) ** 2, axis=0)
    mean_err = cv_err.mean(axis=0)
    best = int(np.argmin(mean_err))
    betas, sweeps = lasso_path(G, c, lams[: best + 1])
    b_std = betas[-1]
    coef = np.zeros(p)
    coef[keep] = b_std / sd[keep]
    intercept = ybar - float(mu @ coef)
    model = LinearModel(
        intercept, coef, "lasso", lam=float(lams[best]), lambda_index=best,
        n_active=int(np.count_nonzero(b_std)), sweeps=int(sweeps[-1]),
    )
    model.lambdas = lams
    model.cv_error = mean_err
    model.coef_std = b_std
    model.keep = keep
    return set_train_rmse(model, X, y)
