"""Monte Carlo designs, replication loop and summary tables."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import PanelDMLError
from .panel import PanelDataset


@dataclass(frozen=True)
class DgpConfig:
    """Simulation design.

    ``x_sd``, ``a_sd``, ``c_sd``, ``u_sd`` and ``v_sd`` are standard
    deviations. ``relevant`` lists the 1-based covariates entering the
    nuisances and the fixed effect. ``mode`` is ``"direct"`` (fresh iid
    units) or ``"population"`` (subsample a seeded finite population).
    """

    design: int = 1
    n_units: int = 1000
    n_waves: int = 10
    p: int = 30
    theta: float = 0.5
    a: float = 0.25
    b: float = 0.5
    relevant: tuple[int, int] = (1, 3)
    x_sd: float = 5.0
    a_sd: float = 0.95
    c_sd: float = 1.0
    u_sd: float = 1.0
    v_sd: float = 1.0
    population_size: int = 1_000_000
    mode: str = "direct"
    seed: int = 0

    def __post_init__(self):
        if self.design not in (1, 2, 3):
            raise ValueError(f"design must be 1, 2 or 3, got {self.design}")
        if self.n_units < 1 or self.n_waves < 1 or self.p < max(self.relevant):
            raise ValueError("invalid panel dimensions")
        if self.mode not in ("direct", "population"):
            raise ValueError("mode must be 'direct' or 'population'")
        if self.mode == "population" and self.population_size < self.n_units:
            raise ValueError("population smaller than the sample")


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def nuisance_functions(design: int, x1, x3, a: float = 0.25, b: float = 0.5):
    """``(l0, m0)`` evaluated at the two relevant covariates."""
    if design == 1:
        return a * x1 + x3, a * x1 + x3
    if design == 2:
        return _sigmoid(x1) + a * np.cos(x3), np.cos(x1) + a * _sigmoid(x3)
    if design == 3:
        l0 = b * x1 * x3 + a * x3 * (x3 > 0)
        m0 = a * x1 * (x1 > 0) + b * x1 * x3
        return l0, m0
    raise ValueError(f"unknown design {design}")


def _draw_units(cfg: DgpConfig, rng: np.random.Generator, n: int):
    x = rng.normal(0.0, cfg.x_sd, (n, cfg.n_waves, cfg.p))
    c = rng.normal(0.0, cfg.c_sd, n)
    a = rng.normal(0.0, cfg.a_sd, n)
    v = rng.normal(0.0, cfg.v_sd, (n, cfg.n_waves))
    u = rng.normal(0.0, cfg.u_sd, (n, cfg.n_waves))
    j, k = cfg.relevant[0] - 1, cfg.relevant[1] - 1
    l0, m0 = nuisance_functions(cfg.design, x[..., j], x[..., k], cfg.a, cfg.b)
    d = m0 + c[:, None] + v
    return {"x": x, "c": c, "a": a, "v": v, "u": u, "l0": l0, "m0": m0, "d": d}


def _assemble(cfg: DgpConfig, parts: dict, d_grand: float, labels) -> PanelDataset:
    T = cfg.n_waves
    x, d = parts["x"], parts["d"]
    j, k = cfg.relevant[0] - 1, cfg.relevant[1] - 1
    alpha = (0.25 * (d.mean(axis=1) - d_grand)
             + 0.25 * (x[..., j] + x[..., k]).sum(axis=1) / T + parts["a"])
    alpha_p = np.repeat(alpha[:, None], T, axis=1)
    y = d * cfg.theta + parts["l0"] + alpha_p + parts["u"]
    rep = lambda z: np.repeat(z[:, None], T, axis=1).ravel()
    oracle = {
        "theta": cfg.theta,
        "l0": parts["l0"].ravel(),
        "m0": parts["m0"].ravel(),
        "alpha": alpha_p.ravel(),
        "c": rep(parts["c"]),
        "a": rep(parts["a"]),
        "U": parts["u"].ravel(),
        "V": parts["v"].ravel(),
    }
    return PanelDataset.from_arrays(y, d, x, unit_labels=labels, oracle=oracle)


def generate_dgp(config: DgpConfig, seed: int | np.random.SeedSequence | None = None) -> PanelDataset:
    """Draw one panel from the design; oracle truths ride along per row.

    Direct mode draws, in order, x (N, T, p), c, a, V, U from one PCG64
    stream. Population mode generates the population in seeded chunks of
    10,000 units, keeps the sampled units, and centers the fixed effect on
    the population grand mean of d.
    """
    cfg = config
    seed = cfg.seed if seed is None else seed
    if cfg.mode == "direct":
        parts = _draw_units(cfg, np.random.default_rng(seed), cfg.n_units)
        return _assemble(cfg, parts, float(parts["d"].mean()), None)
    return _generate_population_sample(cfg, seed)


def _generate_population_sample(cfg: DgpConfig, seed) -> PanelDataset:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    pick_ss, chunk_ss = ss.spawn(2)
    pop = cfg.population_size
    chosen = np.sort(np.random.default_rng(pick_ss).choice(pop, cfg.n_units, replace=False))
    chunk = 10_000
    n_chunks = math.ceil(pop / chunk)
    d_total = 0.0
    kept = []
    for ci, cs in enumerate(chunk_ss.spawn(n_chunks)):
        lo = ci * chunk
        n = min(chunk, pop - lo)
        parts = _draw_units(cfg, np.random.default_rng(cs), n)
        d_total += float(parts["d"].sum())
        sel = chosen[(chosen >= lo) & (chosen < lo + n)] - lo
        if sel.size:
            kept.append({k: v[sel] for k, v in parts.items()})
    parts = {k: np.concatenate([p[k] for p in kept]) for k in kept[0]}
    return _assemble(cfg, parts, d_total / (pop * cfg.n_waves), chosen + 1)


def dataset_hash(ds: PanelDataset) -> str:
    import hashlib

    h = hashlib.sha256()
    for arr in (ds.unit_ids, ds.wave_ids, ds.y, ds.d, ds.x):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


@dataclass
class McSummary:
    bias: float
    rmse: float
    se_sd_ratio: float
    model_rmse: float
    rmse_l: float
    rmse_m: float
    replications: int
    failures: int = 0
    theta: float = 0.5
    label: dict = field(default_factory=dict)
    thetas: list = field(default_factory=list)
    ses: list = field(default_factory=list)
    moment_residual_max: float = 0.0

    @property
    def sd(self) -> float:
        return float(np.std(self.thetas, ddof=1)) if len(self.thetas) > 1 else float("nan")

    @property
    def mc_se(self) -> float:
        """Monte Carlo standard error of the bias."""
        return self.sd / math.sqrt(len(self.thetas))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sd"] = self.sd
        return out


def summarize(thetas, ses, theta: float, model_rmse=(), rmse_l=(), rmse_m=(), **extra) -> McSummary:
    """Bias, RMSE about the truth and mean(se)/sd(theta_hat)."""
    t = np.asarray(thetas, dtype=np.float64)
    if t.size == 0:
        raise ValueError("no successful replications")
    err = t - theta
    sd = float(np.std(t, ddof=1)) if t.size > 1 else float("nan")
    mean_se = float(np.mean(ses)) if len(ses) else float("nan")
    ratio = mean_se / sd if sd > 0 else float("nan")

    def avg(a):
        return float(np.mean(a)) if len(a) else float("nan")

    return McSummary(
        bias=float(np.mean(err)),
        rmse=float(np.sqrt(np.mean(err * err))),
        se_sd_ratio=ratio,
        model_rmse=avg(model_rmse),
        rmse_l=avg(rmse_l),
        rmse_m=avg(rmse_m),
        replications=int(t.size),
        theta=theta,
        thetas=[float(v) for v in t],
        ses=[float(v) for v in ses],
        **extra,
    )


def replication_seeds(seed: int, r: int) -> tuple[np.random.SeedSequence, int]:
    data = np.random.SeedSequence([seed, r, 0])
    folds = int(np.random.SeedSequence([seed, r, 1]).generate_state(1, np.uint64)[0] >> 1)
    return data, folds


def run_monte_carlo(config: DgpConfig, strategy="cre", score_kind="po", R: int = 100, k_folds: int = 5,
                    seed: int = 0, *, learner="ols", learner_m=None, oracle: bool = False,
                    threads: int | None = None, trace: list | None = None, estimator=None,
                    **estimate_kw) -> McSummary:
    """Replicate ``dml_estimate`` on fresh draws and summarize.

    Replication ``r`` draws data from ``SeedSequence([seed, r, 0])`` and
    folds from ``SeedSequence([seed, r, 1])``, so results do not depend on
    scheduling. Failed replications are counted and excluded. ``estimator``
    may replace ``dml_estimate`` with any callable ``(dataset, fold_seed)``
    returning an object with ``theta_hat`` and ``se``.
    """
    from .engine import NuisanceStrategy, _threads, dml_estimate

    if R < 2:
        raise ValueError("R must be at least 2")
    if isinstance(strategy, NuisanceStrategy):
        strat = strategy
    else:
        strat = NuisanceStrategy.build(strategy, learner, learner_m)

    def one(r):
        data_seed, fold_seed = replication_seeds(seed, r)
        ds = generate_dgp(config, data_seed)
        try:
            if estimator is not None:
                return r, estimator(ds, fold_seed), None
            rep = dml_estimate(ds, strat, score_kind, k_folds, fold_seed, oracle=oracle,
                               threads=1, **estimate_kw)
            return r, rep, None
        except PanelDMLError as exc:
            return r, None, exc

    n_threads = _threads(threads)
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(one, range(R)))
    else:
        results = [one(r) for r in range(R)]
    ok = [(r, rep) for r, rep, err in results if err is None]
    failures = len(results) - len(ok)
    if trace is not None:
        for r, rep, err in results:
            trace.append({
                "replication": r,
                "theta_hat": rep.theta_hat if rep is not None else float("nan"),
                "se": rep.se if rep is not None else float("nan"),
                "error": "" if err is None else type(err).__name__,
            })

    def col(name):
        return [getattr(rep, name) for _, rep in ok if hasattr(rep, name)]

    label = {
        "design": config.design,
        "n_units": config.n_units,
        "strategy": strat.kind.value,
        "learner": "oracle" if oracle else strat.learner_id,
        "score": str(getattr(score_kind, "value", score_kind)),
    }
    return summarize(
        col("theta_hat"), col("se"), config.theta, col("model_rmse"), col("rmse_l"), col("rmse_m"),
        failures=failures, label=label,
        moment_residual_max=max(col("moment_residual"), default=0.0),
    )


TABLE_COLUMNS = ("Bias", "RMSE", "SE/SD", "RMSE_l", "RMSE_m", "Model RMSE")
_LABEL_COLUMNS = ("design", "n_units", "strategy", "learner", "score")


def _row(s: McSummary) -> list:
    return [s.bias, s.rmse, s.se_sd_ratio, s.rmse_l, s.rmse_m, s.model_rmse]


def emit_table(summaries: list[McSummary], decimals: int = 4) -> tuple[str, str]:
    """``(csv_text, aligned_text)``; one row per summary, fixed column order."""
    if not summaries:
        raise ValueError("no summaries to tabulate")
    header = list(_LABEL_COLUMNS) + list(TABLE_COLUMNS)
    rows = []
    for s in summaries:
        labels = [str(s.label.get(k, "")) for k in _LABEL_COLUMNS]
        rows.append(labels + [f"{v:.{decimals}f}" for v in _row(s)])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    return buf.getvalue(), "\n".join(lines) + "\n"


def with_overrides(config: DgpConfig, **kw) -> DgpConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
