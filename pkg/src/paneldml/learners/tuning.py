"""Random-draw grid search scored by k-fold CV RMSE."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import EmptyGrid
from .base import LearnerSpec
from .linear import cv_fold_ids


def draw_configs(grid: dict, resolution: int, rng: np.random.Generator) -> list[dict]:
    """``resolution`` values per hyperparameter, zipped into configurations.

    Names are visited in sorted order so the draw sequence is fixed.
    """
    columns = {}
    for name in sorted(grid):
        spec = grid[name]
        if isinstance(spec, tuple) and len(spec) == 3 and spec[2] in ("real", "int"):
            lo, hi, kind = spec
            if kind == "int":
                columns[name] = [int(v) for v in rng.integers(int(lo), int(hi) + 1, resolution)]
            else:
                columns[name] = [float(v) for v in rng.uniform(float(lo), float(hi), resolution)]
        else:
            values = list(spec)
            if not values:
                raise EmptyGrid()
            picks = rng.integers(0, len(values), resolution)
            columns[name] = [values[i] for i in picks]
    return [{k: columns[k][i] for k in columns} for i in range(resolution)]


def cv_rmse(fit: Callable, spec: LearnerSpec, X, y, ids: np.ndarray, k: int) -> float:
    scores = []
    for f in range(k):
        test = ids == f
        model = fit(spec, X[~test], y[~test])
        err = model.predict(X[test]) - y[test]
        scores.append(float(np.sqrt(np.mean(err * err))))
    return float(np.mean(scores))


def grid_search_tune(spec: LearnerSpec, X, y, resolution: int = 5, n_evals: int = 5,
                     cv_folds: int = 5, seed: int = 0, groups=None, trace: list | None = None,
                     fit: Callable | None = None) -> LearnerSpec:
    """Return ``spec`` with the configuration of lowest mean CV RMSE.

    Every evaluation draws ``resolution`` configurations; the search stops
    after ``n_evals`` evaluations. Ties keep the earlier configuration.
    Scored configurations are appended to ``trace`` when given.
    """
    if not spec.grid:
        raise EmptyGrid()
    if resolution < 1 or n_evals < 1:
        raise ValueError("resolution and n_evals must be positive")
    if fit is None:
        from . import fit_learner as fit
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    ids = cv_fold_ids(len(y), cv_folds, seed, groups)
    best, best_score = None, np.inf
    for e in range(n_evals):
        for cfg in draw_configs(spec.grid, resolution, rng):
            score = cv_rmse(fit, spec.with_params(**cfg), X, y, ids, cv_folds)
            if trace is not None:
                trace.append({"evaluation": e, **cfg, "cv_rmse": score})
            if score < best_score:
                best, best_score = cfg, score
    if best is None:  # every score was nan
        best = draw_configs(spec.grid, 1, np.random.default_rng(seed))[0]
    return spec.with_params(**best)
