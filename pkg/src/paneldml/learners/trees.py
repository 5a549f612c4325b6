"""Regression trees: CART, random forest and L2-regularized boosting.

All three share one greedy grower (``kernels.grow_tree``): best split by
the regularized gain ``sl^2/(nl+l2) + sr^2/(nr+l2) - s^2/(n+l2)``, midpoint
thresholds, ties to the lower column then lower threshold, rows with
``x <= threshold`` going left. With ``l2 = 0`` the gain is the SSE reduction.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .base import NuisanceModel, set_train_rmse


class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))

        return rec(0)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return kernels.predict_tree(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_dict(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"value": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "left": self.to_dict(int(self.left[i])),
            "right": self.to_dict(int(self.right[i])),
        }


def grow(X, y, *, max_depth, min_leaf, min_gain=0.0, l2=0.0, mtry=0, seed=0) -> Tree:
    X = np.asarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    XT = np.ascontiguousarray(X.T)
    gain_floor = 1e-12 * float(y @ y)
    arrays = kernels.grow_tree(
        XT, y, int(max_depth), int(min_leaf), float(min_gain), gain_floor,
        float(l2), int(mtry), int(seed) & 0xFFFFFFFFFFFFFFFF,
    )
    return Tree(*arrays)


class TreeModel(NuisanceModel):
    kind = "cart"

    def __init__(self, tree: Tree, **info):
        self.tree = tree
        self.info = info

    def predict(self, X):
        return self.tree.predict(X)

    def to_dict(self):
        return {**super().to_dict(), **self.info, "tree": self.tree.to_dict()}


def fit_cart(X, y, cp: float = 0.01, maxdepth: int = 30, minbucket: int = 5) -> TreeModel:
    """Greedy regression tree.

    A split is kept only if it lowers the total SSE by at least
    ``cp * SSE(root)``; this pre-pruning makes the tree nested in ``cp``.
    """
    y = np.asarray(y, dtype=np.float64)
    sse_root = float(np.sum((y - y.mean()) ** 2))
    tree = grow(X, y, max_depth=maxdepth, min_leaf=minbucket, min_gain=cp * sse_root)
    return set_train_rmse(TreeModel(tree, cp=cp, maxdepth=maxdepth, minbucket=minbucket), X, y)


class ForestModel(NuisanceModel):
    kind = "rf"

    def __init__(self, trees: list[Tree], **info):
        self.trees = trees
        self.info = info

    def predict_per_tree(self, X) -> np.ndarray:
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X):
        return self.predict_per_tree(X).mean(axis=0)

    def to_dict(self):
        return {**super().to_dict(), **self.info, "trees": [t.to_dict() for t in self.trees]}


def fit_random_forest(X, y, num_trees: int = 100, max_depth: int = 30, min_node_size: int = 5,
                      mtry: int = 0, seed: int = 0, bootstrap: bool = True) -> ForestModel:
    """Bagged trees. ``mtry <= 0`` means all covariates at every split.

    Tree ``b`` draws its bootstrap sample and split-sampling seed from
    ``default_rng([seed, b])``, so trees are independent of fitting order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    trees = []
    for b in range(int(num_trees)):
        rng = np.random.default_rng([seed, b])
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        tree_seed = int(rng.integers(0, 2**63))
        trees.append(grow(X[rows], y[rows], max_depth=max_depth, min_leaf=min_node_size,
                          mtry=mtry, seed=tree_seed))
    model = ForestModel(trees, num_trees=num_trees, max_depth=max_depth,
                        min_node_size=min_node_size, mtry=mtry)
    return set_train_rmse(model, X, y)


class BoostModel(NuisanceModel):
    kind = "boost"

    def __init__(self, base: float, trees: list[Tree], **info):
        self.base = float(base)
        self.trees = trees
        self.info = info

    def staged_predict(self, X):
        out = np.full(np.asarray(X).shape[0], self.base)
        yield out.copy()
        for t in self.trees:
            out += t.predict(X)
            yield out.copy()

    def predict(self, X):
        out = np.full(np.asarray(X).shape[0], self.base)
        for t in self.trees:
            out += t.predict(X)
        return out

    def to_dict(self):
        return {**super().to_dict(), **self.info, "base": self.base,
                "trees": [t.to_dict() for t in self.trees]}


def fit_boosting(X, y, nrounds: int = 100, max_depth: int = 6, l2_lambda: float = 1.0,
                 learning_rate: float = 0.1, min_leaf: int = 1) -> BoostModel:
    """Stagewise least-squares boosting from the mean.

    Each round fits a tree to the current residuals with leaf value
    ``sum / (count + l2_lambda)``, scaled by ``learning_rate``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    base = float(y.mean())
    fit = np.full(len(y), base)
    trees = []
    for _ in range(int(nrounds)):
        t = grow(X, y - fit, max_depth=max_depth, min_leaf=min_leaf, l2=l2_lambda)
        t.value = t.value * learning_rate
        fit += t.predict(X)
        trees.append(t)
    model = BoostModel(base, trees, nrounds=nrounds, max_depth=max_depth,
                       l2_lambda=l2_lambda, learning_rate=learning_rate)
    return set_train_rmse(model, X, y)
