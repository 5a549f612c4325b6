"""CSV ingestion and report/config emission."""

from __future__ import annotations

import configparser
import csv
import json
from pathlib import Path

import numpy as np

from .errors import ParseError
from .panel import EstimateReport, PanelDataset

REQUIRED = ("unit", "wave", "y", "d")


def read_panel_csv(path) -> PanelDataset:
    """Parse a long-format panel CSV with header ``unit,wave,y,d,x1,...,xp``.

    Columns after the required four are covariates, kept in file order.
    Rows are reported 1-based counting data rows only.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        for name in REQUIRED:
            if name not in header:
                raise ParseError(f"{path}: missing required column {name!r}")
        idx = {h: i for i, h in enumerate(header)}
        cov = [h for h in header if h not in REQUIRED]
        if not cov:
            raise ParseError(f"{path}: no covariate columns")
        units, waves, ys, ds_, xs = [], [], [], [], []
        for r, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
            try:
                units.append(int(row[idx["unit"]]))
                waves.append(int(row[idx["wave"]]))
            except ValueError:
                raise ParseError(f"{path}: row {r}: unit and wave must be integers") from None
            try:
                ys.append(float(row[idx["y"]]))
                ds_.append(float(row[idx["d"]]))
                xs.append([float(row[idx[c]]) for c in cov])
            except ValueError as exc:
                raise ParseError(f"{path}: row {r}: {exc}") from None
    if not units:
        raise ParseError(f"{path}: no data rows")
    return PanelDataset.from_long(units, waves, ys, ds_, np.asarray(xs), cov)


def write_panel_csv(ds: PanelDataset, path) -> None:
    """Write ``ds`` in long format; floats use ``repr`` so re-reading is exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(REQUIRED) + list(ds.covariate_names))
        for i in range(len(ds.y)):
            w.writerow([int(ds.unit_ids[i]), int(ds.wave_ids[i]), repr(float(ds.y[i])),
                        repr(float(ds.d[i]))] + [repr(float(v)) for v in ds.x[i]])


def write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_report(report: EstimateReport, path) -> None:
    Path(path).write_text(report.to_json() + "\n", encoding="utf-8")


def write_scores_csv(bundles, ds: PanelDataset, path) -> None:
    """One row per unit and transformed wave: fold, z, w, u."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "step", "fold", "z", "w", "u"])
        rows = []
        for b in bundles:
            for j, pos in enumerate(b.positions):
                for t in range(b.z.shape[1]):
                    rows.append((int(pos), t, b.fold, b.z[j, t], b.w[j, t], b.u[j, t]))
        units = ds.units
        for pos, t, fold, z, wv, u in sorted(rows):
            w.writerow([int(units[pos]), t + 1, fold, repr(float(z)), repr(float(wv)), repr(float(u))])


def read_config(path) -> dict:
    """Flatten an INI file into one ``key -> string`` mapping.

    Section names only group keys; later sections win on repeats. Keys are
    normalized to flag spelling (``learner_l`` and ``learner-l`` agree).
    """
    parser = configparser.ConfigParser()
    try:
        with Path(path).open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from None
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            out[key.replace("-", "_")] = value
    return out
