"""Learner specification and the fitted-model contract."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class LearnerKind(str, enum.Enum):
    OLS = "ols"
    LASSO = "lasso"
    CART = "cart"
    RF = "rf"
    BOOST = "boost"


DEFAULT_PARAMS: dict[LearnerKind, dict[str, Any]] = {
    LearnerKind.OLS: {},
    LearnerKind.LASSO: {"cv_folds": 5, "n_lambda": 100, "lambda_ratio": 1e-4, "dictionary": "auto"},
    LearnerKind.CART: {"cp": 0.01, "maxdepth": 30, "minbucket": 5},
    LearnerKind.RF: {"num_trees": 100, "max_depth": 30, "min_node_size": 5, "mtry": 0, "bootstrap": True},
    LearnerKind.BOOST: {"nrounds": 100, "max_depth": 6, "l2_lambda": 1.0, "learning_rate": 0.1, "min_leaf": 1},
}

# (lo, hi, "real" | "int") ranges of the Monte Carlo tuning table
DEFAULT_GRIDS: dict[LearnerKind, dict[str, Any]] = {
    LearnerKind.CART: {"cp": (0.001, 0.05, "real"), "maxdepth": (2, 10, "int")},
    LearnerKind.BOOST: {"l2_lambda": (0.0, 5.0, "real"), "max_depth": (2, 10, "int")},
    LearnerKind.RF: {"max_depth": (2, 10, "int")},
}


@dataclass(frozen=True)
class LearnerSpec:
    """Learner kind, hyperparameters, optional tuning grid and seed.

    Missing hyperparameters fall back to ``DEFAULT_PARAMS``. A grid maps a
    hyperparameter name to either a ``(lo, hi, type)`` range or an explicit
    list of values.
    """

    kind: LearnerKind
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    seed: int = 0
    tune: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", LearnerKind(self.kind))
        merged = dict(DEFAULT_PARAMS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown {self.kind.value} hyperparameters: {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        _check_ranges(self.kind, merged)

    @classmethod
    def default(cls, kind, seed: int = 0, tune: bool = False) -> "LearnerSpec":
        kind = LearnerKind(kind)
        return cls(kind, {}, dict(DEFAULT_GRIDS.get(kind, {})), seed, tune)

    @property
    def learner_id(self) -> str:
        return self.kind.value

    def with_params(self, **kw) -> "LearnerSpec":
        return LearnerSpec(self.kind, {**self.params, **kw}, self.grid, self.seed, self.tune)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(self.kind, self.params, self.grid, seed, self.tune)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "params": dict(self.params),
            "grid": {k: list(v) for k, v in self.grid.items()},
            "seed": self.seed,
            "tune": self.tune,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LearnerSpec":
        grid = {}
        for k, v in data.get("grid", {}).items():
            v = list(v)
            is_range = len(v) == 3 and v[2] in ("real", "int")
            grid[k] = tuple(v) if is_range else v
        return cls(data["kind"], dict(data.get("params", {})), grid, int(data.get("seed", 0)),
                   bool(data.get("tune", False)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _check_ranges(kind: LearnerKind, p: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ValueError(f"{kind.value}: {msg}")

    if kind is LearnerKind.LASSO:
        need(int(p["cv_folds"]) >= 2, "cv_folds must be >= 2")
        need(p["dictionary"] in ("auto", "full", "blockwise", "none"), "bad dictionary mode")
    elif kind is LearnerKind.CART:
        need(p["cp"] >= 0, "cp must be >= 0")
        need(int(p["maxdepth"]) >= 1, "maxdepth must be >= 1")
        need(int(p["minbucket"]) >= 1, "minbucket must be >= 1")
    elif kind is LearnerKind.RF:
        need(int(p["num_trees"]) >= 1, "num_trees must be >= 1")
        need(int(p["max_depth"]) >= 1, "max_depth must be >= 1")
        need(int(p["min_node_size"]) >= 1, "min_node_size must be >= 1")
    elif kind is LearnerKind.BOOST:
        need(int(p["nrounds"]) >= 1, "nrounds must be >= 1")
        need(0 < p["learning_rate"] <= 1, "learning_rate must lie in (0, 1]")
        need(p["l2_lambda"] >= 0, "l2_lambda must be >= 0")
        need(int(p["max_depth"]) >= 1, "max_depth must be >= 1")


class NuisanceModel:
    """Fitted prediction rule with a uniform ``predict`` and ``train_rmse``."""

    kind: str = "model"
    train_rmse: float = 0.0

    def predict(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "train_rmse": self.train_rmse}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def set_train_rmse(model: NuisanceModel, X: np.ndarray, y: np.ndarray) -> NuisanceModel:
    model.train_rmse = rmse(model.predict(X), y)
    return model
