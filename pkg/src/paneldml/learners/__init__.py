"""Base learners with a common fit/predict contract."""

from __future__ import annotations

import numpy as np

from ..transforms import expand_blocks, expand_dictionary
from .base import (
    DEFAULT_GRIDS,
    DEFAULT_PARAMS,
    LearnerKind,
    LearnerSpec,
    NuisanceModel,
    rmse,
)
from .linear import LassoDesign, LinearModel, cv_fold_ids, fit_lasso_cv, fit_ols, lambda_grid, lasso_path
from .trees import (
    BoostModel,
    ForestModel,
    Tree,
    TreeModel,
    fit_boosting,
    fit_cart,
    fit_random_forest,
)
from .tuning import draw_configs, grid_search_tune


class FeatureMapped(NuisanceModel):
    """A model fitted on a dictionary expansion of the raw inputs."""

    def __init__(self, inner: NuisanceModel, blocks: list[int] | None):
        self.inner = inner
        self.blocks = blocks
        self.kind = inner.kind
        self.train_rmse = inner.train_rmse

    def features(self, X):
        return expand_features(X, self.blocks)

    def predict(self, X):
        return self.inner.predict(self.features(X))

    def to_dict(self):
        return {**self.inner.to_dict(), "dictionary_blocks": self.blocks}


def expand_features(X, blocks: list[int] | None) -> np.ndarray:
    """Full dictionary when ``blocks`` is None, else one per column block."""
    X = np.asarray(X, dtype=np.float64)
    if blocks is None:
        return expand_dictionary(X).matrix
    return expand_blocks(X, blocks)


def fit_learner(spec: LearnerSpec, X, y, groups=None, blocks: list[int] | None = None,
                cache: dict | None = None) -> NuisanceModel:
    """Fit ``spec`` on ``(X, y)``.

    LASSO expands ``X`` with the cubic/interaction dictionary unless its
    ``dictionary`` parameter is ``"none"``; ``"blockwise"`` uses ``blocks``
    (the caller resolves ``"auto"``). ``groups`` keeps CV folds unit-aligned.
    ``cache`` lets fits on the same ``X`` share the LASSO design.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = spec.params
    kind = spec.kind
    if kind is LearnerKind.OLS:
        return fit_ols(X, y)
    if kind is LearnerKind.LASSO:
        mode = p["dictionary"]
        use_blocks = blocks if mode == "blockwise" else None
        key = (mode, None if use_blocks is None else tuple(use_blocks), int(p["cv_folds"]), spec.seed)
        if cache is not None and key in cache:
            Xf, design = cache[key]
        else:
            Xf = X if mode == "none" else expand_features(X, use_blocks)
            design = LassoDesign(Xf, int(p["cv_folds"]), spec.seed, groups)
            if cache is not None:
                cache[key] = (Xf, design)
        inner = fit_lasso_cv(Xf, y, None, int(p["cv_folds"]), spec.seed, groups,
                             int(p["n_lambda"]), float(p["lambda_ratio"]), design=design)
        return inner if mode == "none" else FeatureMapped(inner, use_blocks)
    if kind is LearnerKind.CART:
        return fit_cart(X, y, float(p["cp"]), int(p["maxdepth"]), int(p["minbucket"]))
    if kind is LearnerKind.RF:
        return fit_random_forest(X, y, int(p["num_trees"]), int(p["max_depth"]),
                                 int(p["min_node_size"]), int(p["mtry"]), spec.seed,
                                 bool(p["bootstrap"]))
    if kind is LearnerKind.BOOST:
        return fit_boosting(X, y, int(p["nrounds"]), int(p["max_depth"]), float(p["l2_lambda"]),
                            float(p["learning_rate"]), int(p["min_leaf"]))
    raise ValueError(f"unknown learner kind {kind!r}")


__all__ = [
    "DEFAULT_GRIDS", "DEFAULT_PARAMS", "LearnerKind", "LearnerSpec", "NuisanceModel",
    "LassoDesign", "LinearModel", "TreeModel", "ForestModel", "BoostModel", "Tree", "FeatureMapped",
    "fit_ols", "fit_lasso_cv", "lasso_path", "lambda_grid", "cv_fold_ids",
    "fit_cart", "fit_random_forest", "fit_boosting", "grid_search_tune", "draw_configs",
    "fit_learner", "expand_features", "rmse",
]
