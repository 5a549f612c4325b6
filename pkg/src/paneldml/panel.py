"""Panel dataset container, validation, fold planning and the report type."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import DuplicateWave, NonFiniteValue, TooFewUnits, UnbalancedPanel


class TransformKind(str, enum.Enum):
    WG = "wg"
    FD = "fd"
    CRE = "cre"
    HYBRID_WG = "hybrid-wg"
    HYBRID_FD = "hybrid-fd"
    APPROX_WG = "approx-wg"
    APPROX_FD = "approx-fd"

    @property
    def differenced(self) -> bool:
        return self in (TransformKind.FD, TransformKind.HYBRID_FD, TransformKind.APPROX_FD)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Balanced long-format panel, rows sorted by (unit, wave).

    ``oracle`` optionally carries per-row ground truth from the simulator
    (arrays of length ``N*T`` keyed by name, plus scalar ``theta``).
    """

    unit_ids: np.ndarray
    wave_ids: np.ndarray
    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]
    n_units: int
    n_waves: int
    oracle: Mapping[str, Any] | None = field(default=None, repr=False)

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    @property
    def units(self) -> np.ndarray:
        return self.unit_ids[:: self.n_waves]

    def y_panel(self) -> np.ndarray:
        return self.y.reshape(self.n_units, self.n_waves)

    def d_panel(self) -> np.ndarray:
        return self.d.reshape(self.n_units, self.n_waves)

    def x_panel(self) -> np.ndarray:
        return self.x.reshape(self.n_units, self.n_waves, self.n_covariates)

    def oracle_panel(self, name: str) -> np.ndarray:
        return np.asarray(self.oracle[name]).reshape(self.n_units, self.n_waves)

    def subset(self, positions: Sequence[int]) -> "PanelDataset":
        """Dataset restricted to the units at ``positions`` (0-based, in order)."""
        positions = np.asarray(positions, dtype=np.int64)
        rows = (positions[:, None] * self.n_waves + np.arange(self.n_waves)).ravel()
        oracle = None
        if self.oracle is not None:
            oracle = {
                k: (np.asarray(v)[rows] if np.ndim(v) == 1 and len(v) == len(self.y) else v)
                for k, v in self.oracle.items()
            }
        return PanelDataset(
            self.unit_ids[rows], self.wave_ids[rows], self.y[rows], self.d[rows],
            self.x[rows], self.covariate_names, len(positions), self.n_waves, oracle,
        )

    @classmethod
    def from_arrays(cls, y, d, x, *, unit_labels=None, covariate_names=None, oracle=None):
        """Build from ``y``/``d`` of shape (N, T) and ``x`` of shape (N, T, p)."""
        y = np.asarray(y, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        n, t = y.shape
        if x.ndim == 2:
            x = x[:, :, None]
        p = x.shape[2]
        if unit_labels is None:
            unit_labels = np.arange(1, n + 1)
        unit_ids = np.repeat(np.asarray(unit_labels, dtype=np.int64), t)
        wave_ids = np.tile(np.arange(1, t + 1, dtype=np.int64), n)
        names = tuple(covariate_names or (f"x{j + 1}" for j in range(p)))
        return validate(
            cls(unit_ids, wave_ids, y.ravel(), d.ravel(), x.reshape(n * t, p), names, n, t, oracle)
        )

    @classmethod
    def from_long(cls, unit, wave, y, d, x, covariate_names=None) -> "PanelDataset":
        """Build from raw parsed rows in any order; validates and sorts."""
        unit = np.asarray(unit, dtype=np.int64)
        wave = np.asarray(wave, dtype=np.int64)
        y = np.asarray(y, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64).reshape(len(y), -1)
        names = tuple(covariate_names or (f"x{j + 1}" for j in range(x.shape[1])))
        _check_finite(y, d, x, names)
        order = np.lexsort((wave, unit))
        unit, wave, y, d, x = unit[order], wave[order], y[order], d[order], x[order]
        dup = np.flatnonzero((unit[1:] == unit[:-1]) & (wave[1:] == wave[:-1]))
        if dup.size:
            raise DuplicateWave(int(unit[dup[0]]), int(wave[dup[0]]))
        waves = np.unique(wave)
        labels, counts = np.unique(unit, return_counts=True)
        t = len(waves)
        bad = np.flatnonzero(counts != t)
        if bad.size:
            raise UnbalancedPanel(int(labels[bad[0]]), int(counts[bad[0]]), t)
        rank = np.searchsorted(waves, wave) + 1
        ds = cls(unit, rank.astype(np.int64), y, d, x, names, len(labels), t)
        return validate(ds)


def _check_finite(y, d, x, names):
    cols = [("y", y), ("d", d)] + [(names[j], x[:, j]) for j in range(x.shape[1])]
    first = None
    for name, col in cols:
        bad = np.flatnonzero(~np.isfinite(col))
        if bad.size and (first is None or bad[0] < first[0]):
            first = (int(bad[0]), name)
    if first is not None:
        raise NonFiniteValue(first[0] + 1, first[1])


def validate(dataset: PanelDataset) -> PanelDataset:
    """Check the balanced-panel invariants; return the dataset unchanged.

    Rows are reported 1-based in the dataset's current row order.
    """
    ds = dataset
    n, t = ds.n_units, ds.n_waves
    if len(ds.y) != n * t or len(ds.d) != n * t or ds.x.shape[0] != n * t:
        counts = np.unique(ds.unit_ids, return_counts=True)
        bad = np.flatnonzero(counts[1] != t)
        unit = int(counts[0][bad[0]]) if bad.size else -1
        raise UnbalancedPanel(unit, int(counts[1][bad[0]]) if bad.size else len(ds.y), t)
    _check_finite(ds.y, ds.d, ds.x, ds.covariate_names)
    units = ds.unit_ids.reshape(n, t)
    waves = ds.wave_ids.reshape(n, t)
    if np.any(units != units[:, :1]) or np.any(np.diff(units[:, 0]) <= 0):
        # unit blocks not contiguous or not sorted
        labels, counts = np.unique(ds.unit_ids, return_counts=True)
        bad = np.flatnonzero(counts != t)
        if bad.size:
            raise UnbalancedPanel(int(labels[bad[0]]), int(counts[bad[0]]), t)
        raise ValueError("rows must be sorted by (unit, wave)")
    expected = np.arange(1, t + 1)
    for i in np.flatnonzero(np.any(waves != expected, axis=1)):
        row = np.sort(waves[i])
        dup = np.flatnonzero(row[1:] == row[:-1])
        if dup.size:
            raise DuplicateWave(int(units[i, 0]), int(row[dup[0]]))
        raise UnbalancedPanel(int(units[i, 0]), int(np.isin(expected, row).sum()), t)
    return ds


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignment: np.ndarray  # fold index per unit position
    seed: int

    def fold(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == j)

    def complement(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def make_fold_plan(units: Sequence[Any] | int, k: int, seed: int) -> FoldPlan:
    """Shuffle the units with a seeded PCG64 stream and deal them round-robin."""
    n = units if isinstance(units, (int, np.integer)) else len(units)
    if k < 2:
        raise ValueError("k must be at least 2")
    if n < 2 * k:
        raise TooFewUnits(n, k)
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    return FoldPlan(k, assignment, seed)


@dataclass
class EstimateReport:
    theta_hat: float
    se: float
    ci95: tuple[float, float]
    theta_by_fold: list[float]
    rmse_l: float
    rmse_m: float
    model_rmse: float
    n_units: int
    n_waves: int
    k_folds: int
    score_kind: str
    learner_id: str
    transform_kind: str
    seed: int
    moment_residual: float = 0.0
    biased_score: bool = False
    diagnostics_mode: bool = False
    rmse_l_by_fold: list[float] = field(default_factory=list)
    rmse_m_by_fold: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def z_stat(self) -> float:
        return self.theta_hat / self.se if self.se > 0 else math.inf

    @property
    def p_value(self) -> float:
        return math.erfc(abs(self.z_stat) / math.sqrt(2.0))

    def stars(self) -> str:
        p = self.p_value
        return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.10 else ""

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci95"] = list(self.ci95)
        out["p_value"] = self.p_value
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)

    def summary(self) -> str:
        lo, hi = self.ci95
        lines = [
            f"theta_hat = {self.theta_hat:.4f}{self.stars()}   se = {self.se:.4f}",
            f"95% CI    = [{lo:.4f}, {hi:.4f}]   p = {self.p_value:.4g}",
            f"approach  = {self.transform_kind}   score = {self.score_kind}   learner = {self.learner_id}",
            f"N = {self.n_units}   T = {self.n_waves}   folds = {self.k_folds}   seed = {self.seed}",
            f"RMSE_l = {self.rmse_l:.4f}   RMSE_m = {self.rmse_m:.4f}   model RMSE = {self.model_rmse:.4f}",
            "significance: * p<0.10, ** p<0.05, *** p<0.01",
        ]
        if self.biased_score:
            lines.append("warning: non-orthogonal score, estimate is biased (diagnostics only)")
        return "\n".join(lines)
