"""Command-line interface: ``estimate``, ``simulate`` and ``tune``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .engine import NuisanceStrategy, StrategyKind, _flat, dml_estimate, learner_inputs
from .errors import DataError, EmptyGrid, NumericalError, PanelDMLError
from .io import read_config, read_panel_csv, write_json, write_report, write_scores_csv
from .learners import LearnerKind, LearnerSpec, grid_search_tune
from .simulation import DgpConfig, emit_table, generate_dgp, run_monte_carlo

APPROACHES = [k.value for k in StrategyKind]
SCORES = ["po", "iv", "no"]
LEARNERS = [k.value for k in LearnerKind]

# flag defaults; None in argparse marks "not given" so config values can fill in
DEFAULTS = {
    "approach": "cre", "score": "po", "learner": "ols", "learner_l": None, "learner_m": None,
    "folds": 5, "seed": 0, "threads": None, "out": None, "diagnostics": False,
    "tune": False, "tune_on_folds": False, "resolution": 5, "n_evals": 5,
    "n": 1000, "t": 10, "p": 30, "reps": 100, "oracle": False, "trace": False,
    "scores_out": None, "data": None, "dgp": None, "mode": "direct",
    "weighted_correction": False,
}
INT_KEYS = {"folds", "seed", "threads", "resolution", "n_evals", "n", "t", "p", "reps", "dgp"}
BOOL_KEYS = {"diagnostics", "tune", "tune_on_folds", "oracle", "trace", "weighted_correction"}


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file; flags override its keys")
    p.add_argument("--approach", choices=APPROACHES, default=None)
    p.add_argument("--score", choices=SCORES, default=None)
    p.add_argument("--learner", choices=LEARNERS, default=None)
    p.add_argument("--learner-l", dest="learner_l", choices=LEARNERS, default=None)
    p.add_argument("--learner-m", dest="learner_m", choices=LEARNERS, default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--diagnostics", action="store_true", default=None)
    p.add_argument("--tune", action="store_true", default=None, help="tune tree learners by grid search")
    p.add_argument("--tune-on-folds", dest="tune_on_folds", action="store_true", default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--n-evals", dest="n_evals", type=int, default=None)
    p.add_argument("--weighted-correction", dest="weighted_correction", action="store_true", default=None)


def _dgp_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dgp", type=int, choices=[1, 2, 3], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--mode", choices=["direct", "population"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paneldml", description="Double machine learning for panel data")
    sub = parser.add_subparsers(dest="command", required=True)
    est = sub.add_parser("estimate", help="estimate theta on a CSV panel")
    _common(est)
    est.add_argument("--data", default=None)
    est.add_argument("--scores-out", dest="scores_out", default=None)
    sim = sub.add_parser("simulate", help="Monte Carlo on a simulated design")
    _common(sim)
    _dgp_flags(sim)
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--oracle", action="store_true", default=None)
    sim.add_argument("--trace", action="store_true", default=None)
    tune = sub.add_parser("tune", help="grid-search tree hyperparameters")
    _common(tune)
    _dgp_flags(tune)
    tune.add_argument("--data", default=None)
    return parser


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    if key in INT_KEYS:
        return int(value)
    if key in BOOL_KEYS:
        return value.strip().lower() in ("1", "true", "yes", "on")
    return value


def resolve(args: argparse.Namespace) -> dict:
    """Defaults < config file < environment thread cap < flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        for k, v in read_config(args.config).items():
            if k not in DEFAULTS:
                raise UsageError(f"unknown config key {k!r}")
            cfg[k] = _coerce(k, v)
    if cfg["threads"] is None and os.environ.get("PANEL_DML_THREADS"):
        cfg["threads"] = int(os.environ["PANEL_DML_THREADS"])
    for k, v in vars(args).items():
        if k in DEFAULTS and v is not None:
            cfg[k] = v
    cfg["command"] = args.command
    if cfg["threads"] is None:
        cfg["threads"] = 1
    if cfg["folds"] < 2 and not cfg["diagnostics"]:
        raise UsageError("--folds below 2 requires --diagnostics")
    if cfg["folds"] < 1:
        raise UsageError("--folds must be positive")
    if cfg["approach"] not in APPROACHES or cfg["score"] not in SCORES:
        raise UsageError("invalid --approach or --score")
    for key in ("learner", "learner_l", "learner_m"):
        if cfg[key] is not None and cfg[key] not in LEARNERS:
            raise UsageError(f"invalid {key}: {cfg[key]!r}")
    if cfg["dgp"] is not None and cfg["dgp"] not in (1, 2, 3):
        raise UsageError("--dgp must be 1, 2 or 3")
    return cfg


def _strategy(cfg: dict) -> NuisanceStrategy:
    ll = cfg["learner_l"] or cfg["learner"]
    lm = cfg["learner_m"] or cfg["learner"]
    return NuisanceStrategy.build(cfg["approach"], ll, lm, seed=cfg["seed"], tune=cfg["tune"])


def _estimate_kw(cfg: dict) -> dict:
    return dict(diagnostics=cfg["diagnostics"], tune_on_folds=cfg["tune_on_folds"],
                tune_resolution=cfg["resolution"], tune_evals=cfg["n_evals"],
                weighted_correction=cfg["weighted_correction"])


def _provenance(cfg: dict) -> dict:
    return {k: cfg[k] for k in sorted(cfg)}


def cmd_estimate(cfg: dict, stdout=None) -> int:
    stdout = stdout or sys.stdout
    if not cfg["data"]:
        raise UsageError("estimate needs --data")
    ds = read_panel_csv(cfg["data"])
    report, bundles = dml_estimate(
        ds, _strategy(cfg), cfg["score"], cfg["folds"], cfg["seed"], threads=cfg["threads"],
        return_bundles=True, config=_provenance(cfg), **_estimate_kw(cfg),
    )
    print(report.summary(), file=stdout)
    if cfg["out"]:
        write_report(report, cfg["out"])
    if cfg["scores_out"]:
        write_scores_csv(bundles, ds, cfg["scores_out"])
    return 0


def _dgp_config(cfg: dict) -> DgpConfig:
    if cfg["dgp"] is None:
        raise UsageError("--dgp is required")
    return DgpConfig(design=cfg["dgp"], n_units=cfg["n"], n_waves=cfg["t"], p=cfg["p"],
                     mode=cfg["mode"], seed=cfg["seed"])


def cmd_simulate(cfg: dict, stdout=None) -> int:
    stdout = stdout or sys.stdout
    config = _dgp_config(cfg)
    trace = [] if cfg["trace"] else None
    summary = run_monte_carlo(
        config, _strategy(cfg), cfg["score"], cfg["reps"], cfg["folds"], cfg["seed"],
        oracle=cfg["oracle"], threads=cfg["threads"], trace=trace, **_estimate_kw(cfg),
    )
    csv_text, table = emit_table([summary])
    print(table, end="", file=stdout)
    if summary.failures:
        print(f"{summary.failures} replication(s) failed and were excluded", file=stdout)
    if cfg["out"]:
        out = Path(cfg["out"])
        write_json({"summary": summary.to_dict(), "config": _provenance(cfg)}, out)
        stem = out.with_suffix("")
        Path(f"{stem}.csv").write_text(csv_text, encoding="utf-8")
        Path(f"{stem}.txt").write_text(table, encoding="utf-8")
        if trace is not None:
            with open(f"{stem}_trace.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["replication", "theta_hat", "se", "error"])
                for row in trace:
                    w.writerow([row["replication"], repr(row["theta_hat"]), repr(row["se"]), row["error"]])
    return 0


def cmd_tune(cfg: dict, stdout=None) -> int:
    stdout = stdout or sys.stdout
    if cfg["data"]:
        ds = read_panel_csv(cfg["data"])
    else:
        ds = generate_dgp(_dgp_config(cfg))
    strat = _strategy(cfg)
    F, ty, td = learner_inputs(ds, strat.kind)
    X = _flat(F)
    groups = np.repeat(ds.units, F.shape[1])
    out = {}
    for name, spec, target in (("l", strat.spec_l, ty), ("m", strat.spec_m, td)):
        if not spec.grid:
            raise EmptyGrid()
        trace = []
        best = grid_search_tune(spec, X, target.ravel(), cfg["resolution"], cfg["n_evals"],
                                seed=cfg["seed"], groups=groups, trace=trace)
        out[name] = {**best.to_dict(), "tune": True, "n_configurations": len(trace)}
    text = json.dumps({"config": _provenance(cfg), "specs": out}, indent=2, sort_keys=True)
    if cfg["out"]:
        Path(cfg["out"]).write_text(text + "\n", encoding="utf-8")
    print(text, file=stdout)
    return 0


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "tune": cmd_tune}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (UsageError, EmptyGrid) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except PanelDMLError as exc:  # pragma: no cover - all subclasses handled above
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
