"""Fixed-effect removing transformations and feature constructions."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SingleWave
from .panel import PanelDataset, TransformKind


@dataclass(frozen=True, eq=False)
class TransformedPanel:
    unit_ids: np.ndarray
    wave_ids: np.ndarray
    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...]
    n_units: int
    n_waves: int
    kind: TransformKind


def demean(a: np.ndarray) -> np.ndarray:
    """Within-group transform along axis 1 of an (N, T, ...) array."""
    return a - a.mean(axis=1, keepdims=True)


def difference(a: np.ndarray) -> np.ndarray:
    """First difference along axis 1 of an (N, T, ...) array; T-1 waves remain."""
    if a.shape[1] < 2:
        raise SingleWave("first differencing")
    return a[:, 1:] - a[:, :-1]


def apply_q(a: np.ndarray, kind: TransformKind | str) -> np.ndarray:
    kind = TransformKind(kind)
    return difference(a) if kind.differenced else demean(a)


def _transformed(ds: PanelDataset, op, kind: TransformKind) -> TransformedPanel:
    y, d, x = op(ds.y_panel()), op(ds.d_panel()), op(ds.x_panel())
    n, t = y.shape
    waves = ds.wave_ids.reshape(ds.n_units, ds.n_waves)[:, ds.n_waves - t :]
    return TransformedPanel(
        np.repeat(ds.units, t), waves.ravel(), y.ravel(), d.ravel(),
        x.reshape(n * t, -1), ds.covariate_names, n, t, kind,
    )


def within_group(dataset: PanelDataset) -> TransformedPanel:
    return _transformed(dataset, demean, TransformKind.WG)


def first_difference(dataset: PanelDataset) -> TransformedPanel:
    if dataset.n_waves < 2:
        raise SingleWave("first differencing")
    return _transformed(dataset, difference, TransformKind.FD)


def unit_means(a: np.ndarray) -> np.ndarray:
    """Per-unit mean of an (N, T, ...) array, broadcast back over T."""
    return np.broadcast_to(a.mean(axis=1, keepdims=True), a.shape)


def mundlak_augment(dataset: PanelDataset, include_treatment_mean: bool = False) -> PanelDataset:
    """Append per-unit covariate means (and optionally the treatment mean)."""
    ds = dataset
    x = ds.x_panel()
    cols = [x, unit_means(x)]
    names = list(ds.covariate_names) + [f"mean_{c}" for c in ds.covariate_names]
    if include_treatment_mean:
        cols.append(unit_means(ds.d_panel())[:, :, None])
        names.append("mean_d")
    wide = np.concatenate(cols, axis=2).reshape(len(ds.y), -1)
    return PanelDataset(
        ds.unit_ids, ds.wave_ids, ds.y, ds.d, wide, tuple(names), ds.n_units, ds.n_waves, ds.oracle
    )


def lag_features(x: np.ndarray) -> np.ndarray:
    """(N, T, p) -> (N, T-1, 2p) holding (x_{t-1}, x_t) for t = 2..T."""
    if x.shape[1] < 2:
        raise SingleWave("lag augmentation")
    return np.concatenate([x[:, :-1], x[:, 1:]], axis=2)


def fd_lag_augment(dataset: PanelDataset) -> PanelDataset:
    """Differenced outcome/treatment with lagged and current covariates side by side."""
    ds = dataset
    if ds.n_waves < 2:
        raise SingleWave("lag augmentation")
    t1 = ds.n_waves - 1
    x = lag_features(ds.x_panel())
    names = tuple(f"lag_{c}" for c in ds.covariate_names) + ds.covariate_names
    waves = ds.wave_ids.reshape(ds.n_units, ds.n_waves)[:, 1:]
    return PanelDataset(
        np.repeat(ds.units, t1), waves.ravel(), difference(ds.y_panel()).ravel(),
        difference(ds.d_panel()).ravel(), x.reshape(ds.n_units * t1, -1), names,
        ds.n_units, t1,
    )


@dataclass(frozen=True, eq=False)
class Dictionary:
    matrix: np.ndarray
    columns: tuple[tuple, ...]

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    def names(self, base: list[str] | None = None) -> list[str]:
        def nm(j):
            return base[j] if base else f"x{j + 1}"

        out = []
        for col in self.columns:
            if col[0] == "raw":
                out.append(nm(col[1]))
            elif col[0] == "sq":
                out.append(f"{nm(col[1])}^2")
            elif col[0] == "cube":
                out.append(f"{nm(col[1])}^3")
            else:
                out.append(f"{nm(col[1])}*{nm(col[2])}")
        return out

    def to_json(self) -> str:
        return json.dumps([list(c) for c in self.columns])


def dictionary_width(p: int) -> int:
    return 3 * p + p * (p - 1) // 2


def dictionary_columns(p: int) -> tuple[tuple, ...]:
    cols = [("raw", j) for j in range(p)]
    cols += [("sq", j) for j in range(p)]
    cols += [("cube", j) for j in range(p)]
    cols += [("int", j, k) for j in range(p) for k in range(j + 1, p)]
    return tuple(cols)


def expand_dictionary(x: np.ndarray, p: int | None = None) -> Dictionary:
    """Cubic polynomial and pairwise-interaction expansion.

    Column order: raw 1..p, squares 1..p, cubes 1..p, then products (j, k)
    for j < k in lexicographic order.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    p = x.shape[1] if p is None else p
    if p < 1 or x.shape[1] != p:
        raise ValueError("covariate matrix must have p >= 1 columns")
    n = x.shape[0]
    out = np.empty((n, dictionary_width(p)))
    out[:, :p] = x
    np.multiply(x, x, out=out[:, p : 2 * p])
    np.multiply(out[:, p : 2 * p], x, out=out[:, 2 * p : 3 * p])
    col = 3 * p
    for j in range(p - 1):
        w = p - j - 1
        np.multiply(x[:, j : j + 1], x[:, j + 1 :], out=out[:, col : col + w])
        col += w
    return Dictionary(out, dictionary_columns(p))


def expand_blocks(x: np.ndarray, blocks: list[int]) -> np.ndarray:
    """Expand each consecutive column block separately and concatenate."""
    parts, start = [], 0
    for b in blocks:
        parts.append(expand_dictionary(x[:, start : start + b]).matrix)
        start += b
    if start != x.shape[1]:
        raise ValueError("blocks do not cover the covariate matrix")
    return np.concatenate(parts, axis=1)
