"""Cross-fitted DML for panels: nuisance strategies, scores, pooled solve, inference.

Every score is expressed through three per-row arrays on the transformed
time axis: an instrument ``z``, a regressor ``w`` and a partialled outcome
``u``. The residual is ``u - w*theta`` and the unit-level score is
``psi_i = sum_t z (u - w*theta)``.

=====  ===========  ===========  =================
score  z            w            u
=====  ===========  ===========  =================
po     v_hat        v_hat        y_tilde - l_hat
iv     d_tilde      v_hat        y_tilde - l_hat
no     d_tilde      d_tilde      y_tilde - l_hat
=====  ===========  ===========  =================
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDenominator, MomentConditionViolated, SingleWave
from .learners import LearnerKind, LearnerSpec, NuisanceModel, fit_learner, grid_search_tune, fit_ols
from .panel import EstimateReport, FoldPlan, PanelDataset, TransformKind, make_fold_plan
from .transforms import apply_q, demean, difference, lag_features, unit_means

MOMENT_TOL = 1e-8
# |sum z w| at or below this fraction of ||z|| ||d_tilde|| means no residual treatment variation
DEGENERATE_TOL = 1e-10


class ScoreKind(str, enum.Enum):
    PO = "po"
    IV = "iv"
    NO = "no"


class StrategyKind(str, enum.Enum):
    CRE = "cre"
    FD_EXACT = "fd-exact"
    HYBRID_WG = "hybrid-wg"
    HYBRID_FD = "hybrid-fd"
    APPROX_WG = "approx-wg"
    APPROX_FD = "approx-fd"

    @property
    def transform(self) -> TransformKind:
        return {
            "cre": TransformKind.CRE,
            "fd-exact": TransformKind.FD,
            "hybrid-wg": TransformKind.HYBRID_WG,
            "hybrid-fd": TransformKind.HYBRID_FD,
            "approx-wg": TransformKind.APPROX_WG,
            "approx-fd": TransformKind.APPROX_FD,
        }[self.value]

    @property
    def q(self) -> TransformKind:
        """The fixed-effect removing operator applied at score time."""
        if self is StrategyKind.CRE:
            return TransformKind.CRE
        return TransformKind.FD if self.transform.differenced else TransformKind.WG

    @property
    def differenced(self) -> bool:
        return self.transform.differenced


@dataclass(frozen=True)
class NuisanceStrategy:
    kind: StrategyKind
    spec_l: LearnerSpec = field(default_factory=lambda: LearnerSpec.default("ols"))
    spec_m: LearnerSpec = field(default_factory=lambda: LearnerSpec.default("ols"))

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))

    @classmethod
    def build(cls, kind, learner="ols", learner_m=None, seed: int = 0, tune: bool = False):
        spec_l = learner if isinstance(learner, LearnerSpec) else LearnerSpec.default(learner, seed, tune)
        lm = learner if learner_m is None else learner_m
        spec_m = lm if isinstance(lm, LearnerSpec) else LearnerSpec.default(lm, seed, tune)
        return cls(StrategyKind(kind), spec_l, spec_m)

    @property
    def learner_id(self) -> str:
        a, b = self.spec_l.learner_id, self.spec_m.learner_id
        return a if a == b else f"{a}/{b}"


# ---------------------------------------------------------------- features


def learner_inputs(ds: PanelDataset, kind: StrategyKind):
    """Learner features and targets as unit-major arrays.

    Returns ``(F, ty, td)`` with ``F`` of shape (N, T', q) and targets of
    shape (N, T'). Each unit's rows depend only on that unit, so the arrays
    of a subset equal the subset of the arrays.
    """
    kind = StrategyKind(kind)
    y, d, x = ds.y_panel(), ds.d_panel(), ds.x_panel()
    if kind.differenced and ds.n_waves < 2:
        raise SingleWave(kind.value)
    if kind is StrategyKind.FD_EXACT:
        return lag_features(x), difference(y), difference(d)
    if kind in (StrategyKind.APPROX_WG, StrategyKind.APPROX_FD):
        q = kind.q
        return apply_q(x, q), apply_q(y, q), apply_q(d, q)
    # CRE and hybrid learn in levels on (x, unit mean of x)
    return np.concatenate([x, unit_means(x)], axis=2), y, d


def _dictionary_mode(spec: LearnerSpec, kind: StrategyKind, p: int):
    """Resolve LASSO ``dictionary='auto'`` and the block layout."""
    if spec.kind is not LearnerKind.LASSO:
        return spec, None
    mode = spec.params["dictionary"]
    if mode == "auto":
        mode = "blockwise" if kind is StrategyKind.FD_EXACT else "full"
        spec = spec.with_params(dictionary=mode)
    blocks = None
    if mode == "blockwise":
        blocks = [p, p] if kind is not StrategyKind.APPROX_WG and kind is not StrategyKind.APPROX_FD else [p]
    return spec, blocks


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape[0] * a.shape[1], *a.shape[2:])


# ---------------------------------------------------------------- nuisances


class FittedNuisances:
    """Nuisance predictions turned into residual arrays for any panel."""

    def __init__(self, kind: StrategyKind, l_model: NuisanceModel, m_model: NuisanceModel):
        self.kind = StrategyKind(kind)
        self.l_model = l_model
        self.m_model = m_model

    def predictions(self, ds: PanelDataset):
        F, _, _ = learner_inputs(ds, self.kind)
        shape = F.shape[:2]
        return (self.l_model.predict(_flat(F)).reshape(shape),
                self.m_model.predict(_flat(F)).reshape(shape))

    def m_star(self, ds: PanelDataset, m_tilde: np.ndarray | None = None) -> np.ndarray:
        """CRE treatment rule: shift m_tilde so its unit mean equals the unit mean of d."""
        if m_tilde is None:
            m_tilde = self.predictions(ds)[1]
        dbar = ds.d_panel().mean(axis=1, keepdims=True)
        return m_tilde + dbar - m_tilde.mean(axis=1, keepdims=True)

    def residuals(self, ds: PanelDataset):
        """``(u, v, d_tilde)`` on the transformed time axis.

        Under CRE ``d_tilde`` is the unit-demeaned treatment: level ``d``
        carries the unit effect ``c_i`` that also sits in the CRE residual.
        """
        l_hat, m_hat = self.predictions(ds)
        return residuals_from_predictions(ds, self.kind, l_hat, m_hat)


def residuals_from_predictions(ds: PanelDataset, kind, l_hat, m_hat):
    """Residual arrays from learner-scale predictions of shape (N, T')."""
    kind = StrategyKind(kind)
    y, d = ds.y_panel(), ds.d_panel()
    if kind is StrategyKind.CRE:
        dbar = d.mean(axis=1, keepdims=True)
        m_star = m_hat + dbar - m_hat.mean(axis=1, keepdims=True)
        return y - l_hat, d - m_star, d - dbar
    if kind is StrategyKind.FD_EXACT:
        dy, dd = difference(y), difference(d)
        return dy - l_hat, dd - m_hat, dd
    q = kind.q
    qy, qd = apply_q(y, q), apply_q(d, q)
    if kind in (StrategyKind.HYBRID_WG, StrategyKind.HYBRID_FD):
        return qy - apply_q(l_hat, q), qd - apply_q(m_hat, q), qd
    return qy - l_hat, qd - m_hat, qd


class OracleNuisances:
    """True nuisances taken from a simulated dataset's oracle attachments."""

    def __init__(self, kind: StrategyKind):
        self.kind = StrategyKind(kind)

    def residuals(self, ds: PanelDataset):
        if ds.oracle is None:
            raise ValueError("dataset carries no oracle values")
        theta = float(ds.oracle["theta"])
        l0, m0 = ds.oracle_panel("l0"), ds.oracle_panel("m0")
        y, d = ds.y_panel(), ds.d_panel()
        if self.kind is StrategyKind.CRE:
            c, alpha, a = ds.oracle_panel("c"), ds.oracle_panel("alpha"), ds.oracle_panel("a")
            m_star = m0 + c
            l_tilde = l0 + theta * m_star + (alpha - a)
            return y - l_tilde, d - m_star, d - d.mean(axis=1, keepdims=True)
        q = self.kind.q
        qd = apply_q(d, q)
        return apply_q(y - l0 - theta * m0, q), qd - apply_q(m0, q), qd


def _fit_pair(strategy: NuisanceStrategy, train: PanelDataset, seed: int,
              tuned: tuple[LearnerSpec, LearnerSpec] | None = None, tune_kw: dict | None = None):
    F, ty, td = learner_inputs(train, strategy.kind)
    X = _flat(F)
    groups = np.repeat(train.units, F.shape[1])
    p = train.n_covariates
    specs = tuned or (strategy.spec_l, strategy.spec_m)
    models = []
    cache: dict = {}
    for spec, target in zip(specs, (ty, td)):
        spec, blocks = _dictionary_mode(spec, strategy.kind, p)
        spec = spec.with_seed(seed)
        if tune_kw is not None and spec.tune and spec.grid:
            spec = grid_search_tune(spec, X, target.ravel(), groups=groups, seed=seed, **tune_kw)
        models.append(fit_learner(spec, X, target.ravel(), groups=groups, blocks=blocks, cache=cache))
    return FittedNuisances(strategy.kind, models[0], models[1])


def learn_cre_nuisances(train: PanelDataset, strategy: NuisanceStrategy, seed: int = 0):
    """Fit l on (y; x, x_bar) and m_tilde on (d; x, x_bar).

    Returns ``(l_model, m_star_rule)`` where ``m_star_rule(ds)`` evaluates
    the unit-mean-constrained treatment nuisance on any panel.
    """
    fit = _fit_pair(NuisanceStrategy(StrategyKind.CRE, strategy.spec_l, strategy.spec_m), train, seed)
    return fit.l_model, fit.m_star


def learn_fd_exact_nuisances(train: PanelDataset, strategy: NuisanceStrategy, seed: int = 0):
    """Fit Delta l and Delta m on differenced targets with (x_{t-1}, x_t) features."""
    fit = _fit_pair(NuisanceStrategy(StrategyKind.FD_EXACT, strategy.spec_l, strategy.spec_m), train, seed)
    return fit.l_model, fit.m_model


def learn_hybrid_nuisances(train: PanelDataset, strategy: NuisanceStrategy, q, seed: int = 0):
    """Fit in levels on (x, x_bar); ``q`` is applied to predictions at score time."""
    q = TransformKind(q)
    kind = StrategyKind.HYBRID_FD if q.differenced else StrategyKind.HYBRID_WG
    if q.differenced and train.n_waves < 2:
        raise SingleWave(kind.value)
    fit = _fit_pair(NuisanceStrategy(kind, strategy.spec_l, strategy.spec_m), train, seed)
    return fit.l_model, fit.m_model, q


def learn_approx_nuisances(train: PanelDataset, strategy: NuisanceStrategy, q, seed: int = 0):
    """Fit directly on transformed data (Q y; Q x) and (Q d; Q x)."""
    q = TransformKind(q)
    kind = StrategyKind.APPROX_FD if q.differenced else StrategyKind.APPROX_WG
    fit = _fit_pair(NuisanceStrategy(kind, strategy.spec_l, strategy.spec_m), train, seed)
    return fit.l_model, fit.m_model


# ---------------------------------------------------------------- scores


@dataclass(frozen=True, eq=False)
class ScoreBundle:
    """Score ingredients for the units of one fold, arrays of shape (N_k, T')."""

    fold: int
    positions: np.ndarray
    z: np.ndarray
    w: np.ndarray
    u: np.ndarray
    score_kind: ScoreKind
    d_norm: float = 0.0

    def degenerate(self) -> bool:
        den = abs(self.denominator())
        return den == 0.0 or den <= DEGENERATE_TOL * float(np.linalg.norm(self.z)) * self.d_norm

    @property
    def n_units(self) -> int:
        return self.z.shape[0]

    @property
    def v_perp(self) -> np.ndarray:
        return self.w

    def residual(self, theta: float) -> np.ndarray:
        return self.u - self.w * theta

    def psi(self, theta: float) -> np.ndarray:
        return np.sum(self.z * self.residual(theta), axis=1)

    def numerator(self) -> float:
        return float(np.sum(self.z * self.u))

    def denominator(self) -> float:
        return float(np.sum(self.z * self.w))


def make_bundle(u, v, d_tilde, score_kind, fold: int = 0, positions=None) -> ScoreBundle:
    score_kind = ScoreKind(score_kind)
    u, v, dt = (np.asarray(a, dtype=np.float64) for a in (u, v, d_tilde))
    if not (u.shape == v.shape == dt.shape):
        raise ValueError("score arrays must share one shape")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite score entries")
    if score_kind is ScoreKind.PO:
        z, w = v, v
    elif score_kind is ScoreKind.IV:
        z, w = dt, v
    else:
        z, w = dt, dt
    if positions is None:
        positions = np.arange(u.shape[0])
    return ScoreBundle(fold, np.asarray(positions), z, w, u, score_kind, float(np.linalg.norm(dt)))


def build_scores(eval_ds: PanelDataset, nuisances, strategy, theta: float | None = None,
                 score_kind="po", fold: int = 0, positions=None) -> ScoreBundle:
    """Score bundle for ``eval_ds`` from nuisances fitted elsewhere.

    ``theta`` is accepted for interface symmetry; the bundle stores the
    components and evaluates ``residual(theta)`` on demand.
    """
    u, v, dt = nuisances.residuals(eval_ds)
    return make_bundle(u, v, dt, score_kind, fold, positions)


@dataclass
class ThetaSolution:
    theta: float
    theta_by_fold: list[float]
    J: float
    numerators: list[float]
    denominators: list[float]


def solve_theta(bundles: list[ScoreBundle], score_kind=None) -> ThetaSolution:
    """Pooled root of (1/K) sum_k N_k^-1 sum_i psi_i = 0, plus fold-local roots.

    Fold sums are combined with ``math.fsum`` so the result does not depend
    on the order or labels of the folds.
    """
    if not bundles:
        raise ValueError("no score bundles")
    nums, dens = [], []
    for b in sorted(bundles, key=lambda b: int(b.positions.min()) if b.positions.size else 0):
        num, den = b.numerator(), b.denominator()
        if b.degenerate():
            raise DegenerateDenominator(f"fold {b.fold}")
        nums.append(num / b.n_units)
        dens.append(den / b.n_units)
    total_den = math.fsum(dens)
    if total_den == 0.0:
        raise DegenerateDenominator("pooled")
    theta = math.fsum(nums) / total_den
    by_fold = {}
    for b in bundles:
        by_fold[b.fold] = b.numerator() / b.denominator()
    K = len(bundles)
    return ThetaSolution(theta, [by_fold[k] for k in sorted(by_fold)], total_den / K, nums, dens)


def moment_residual(bundles: list[ScoreBundle], theta: float) -> tuple[float, float]:
    """``(|mean score|, scale)`` with scale the same average of |z u| + |z w theta|."""
    K = len(bundles)
    res = math.fsum(float(np.sum(b.psi(theta))) / b.n_units for b in bundles) / K
    scale = math.fsum(
        float(np.sum(np.abs(b.z * b.u)) + np.sum(np.abs(b.z * b.w * theta))) / b.n_units for b in bundles
    ) / K
    return abs(res), scale


def check_moment(bundles: list[ScoreBundle], theta: float, tol: float = MOMENT_TOL) -> float:
    res, scale = moment_residual(bundles, theta)
    if res > tol * max(scale, np.finfo(float).tiny):
        raise MomentConditionViolated(f"moment residual {res:.3e} exceeds {tol:g} x scale {scale:.3e}")
    return res / scale if scale > 0 else 0.0


def cluster_robust_variance(bundles: list[ScoreBundle], theta_hat: float,
                            theta_by_fold: list[float] | None = None,
                            weighted_correction: bool = False) -> tuple[float, float]:
    """Unit-clustered sandwich standard error with the fold-dispersion term.

    sigma^2 = Omega / J^2 + mean_k (theta_k - theta_bar)^2 and se = sqrt(sigma^2 / N),
    where Omega = K^-1 sum_k N_k^-1 sum_i psi_i^2 and J = K^-1 sum_k N_k^-1 sum z'w.
    With ``weighted_correction`` the dispersion term is mean_k N_k (theta_k - theta_bar)^2.
    Returns ``(se, J)``.
    """
    K = len(bundles)
    N = sum(b.n_units for b in bundles)
    J = math.fsum(b.denominator() / b.n_units for b in bundles) / K
    if J == 0.0:
        raise DegenerateDenominator("variance")
    omega = math.fsum(float(np.sum(b.psi(theta_hat) ** 2)) / b.n_units for b in bundles) / K
    sigma2 = omega / (J * J)
    if theta_by_fold is None:
        theta_by_fold = [b.numerator() / b.denominator() for b in bundles]
    if K > 1:
        tbar = math.fsum(theta_by_fold) / K
        sizes = {b.fold: b.n_units for b in bundles}
        folds = sorted(sizes)
        if weighted_correction:
            sigma2 += math.fsum(sizes[k] * (t - tbar) ** 2 for k, t in zip(folds, theta_by_fold)) / K
        else:
            sigma2 += math.fsum((t - tbar) ** 2 for t in theta_by_fold) / K
    return math.sqrt(sigma2 / N), J


# ---------------------------------------------------------------- pipeline


def fold_seed(seed: int, positions: np.ndarray) -> int:
    """Learner seed keyed on fold content (smallest unit position), not its label."""
    key = int(positions.min()) if positions.size else 0
    return int(np.random.SeedSequence([seed, key]).generate_state(1, np.uint64)[0] >> 1)


def _threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("PANEL_DML_THREADS", "1") or 1)
    return max(1, int(threads))


def _rmse(a) -> float:
    return float(np.sqrt(np.mean(np.asarray(a) ** 2)))


def dml_estimate(dataset: PanelDataset, strategy: NuisanceStrategy | str = "cre", score_kind="po",
                 k_folds: int = 5, seed: int = 0, *, learner="ols", learner_m=None,
                 fold_plan: FoldPlan | None = None, threads: int | None = None,
                 diagnostics: bool = False, oracle: bool = False, tune_on_folds: bool = False,
                 tune_resolution: int = 5, tune_evals: int = 5, tune_cv_folds: int = 5,
                 weighted_correction: bool = False, return_bundles: bool = False,
                 config: dict | None = None):
    """Cross-fitted DML estimate of the treatment coefficient.

    Units are split into ``k_folds`` blocks; nuisances for each block are
    learned on the other blocks and the pooled moment condition is solved
    in closed form. ``k_folds=1`` (no splitting) needs ``diagnostics=True``.
    ``oracle=True`` replaces learners by the simulator's true nuisances.
    With ``return_bundles`` the score bundles are returned alongside the report.
    """
    ds = dataset
    if isinstance(strategy, NuisanceStrategy):
        strat = strategy
    else:
        strat = NuisanceStrategy.build(strategy, learner, learner_m)
    score_kind = ScoreKind(score_kind)
    if strat.kind.differenced and ds.n_waves < 2:
        raise SingleWave(strat.kind.value)
    if fold_plan is None:
        if k_folds == 1:
            if not diagnostics:
                raise ValueError("k_folds=1 is only available in diagnostics mode")
            fold_plan = FoldPlan(1, np.zeros(ds.n_units, dtype=np.int64), seed)
        else:
            fold_plan = make_fold_plan(ds.n_units, k_folds, seed)
    K = fold_plan.k

    tuned = None
    tune_kw = None
    if not oracle and (strat.spec_l.tune or strat.spec_m.tune):
        tune_kw = dict(resolution=tune_resolution, n_evals=tune_evals, cv_folds=tune_cv_folds)
        if not tune_on_folds:
            tuned = _global_tune(strat, ds, seed, tune_kw)
            tune_kw = None

    def run_fold(k: int):
        ev = fold_plan.fold(k)
        tr = fold_plan.complement(k) if K > 1 else ev
        eval_ds = ds.subset(ev)
        train_ds = ds.subset(tr)
        if oracle:
            nuis = OracleNuisances(strat.kind)
            u_tr, v_tr, _ = nuis.residuals(train_ds)
            rl, rm = _rmse(u_tr), _rmse(v_tr)
        else:
            nuis = _fit_pair(strat, train_ds, fold_seed(seed, ev), tuned, tune_kw)
            rl = nuis.l_model.train_rmse
            if strat.kind is StrategyKind.CRE:
                rm = _rmse(nuis.residuals(train_ds)[1])
            else:
                rm = nuis.m_model.train_rmse
        bundle = build_scores(eval_ds, nuis, strat, None, score_kind, k, ev)
        return bundle, rl, rm

    n_threads = min(_threads(threads), K)
    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(run_fold, range(K)))
    else:
        results = [run_fold(k) for k in range(K)]
    bundles = [r[0] for r in results]
    rmse_l = [r[1] for r in results]
    rmse_m = [r[2] for r in results]

    partial = {"rmse_l_by_fold": rmse_l, "rmse_m_by_fold": rmse_m}
    try:
        sol = solve_theta(bundles, score_kind)
        rel = check_moment(bundles, sol.theta)
    except (DegenerateDenominator, MomentConditionViolated) as exc:
        exc.partial = partial
        raise
    se, _ = cluster_robust_variance(bundles, sol.theta, sol.theta_by_fold, weighted_correction)
    model_rmse = float(np.mean([_rmse(b.u - b.w * t) for b, t in zip(bundles, sol.theta_by_fold)]))
    report = EstimateReport(
        theta_hat=sol.theta,
        se=se,
        ci95=(sol.theta - 1.96 * se, sol.theta + 1.96 * se),
        theta_by_fold=sol.theta_by_fold,
        rmse_l=float(np.mean(rmse_l)),
        rmse_m=float(np.mean(rmse_m)),
        model_rmse=model_rmse,
        n_units=ds.n_units,
        n_waves=ds.n_waves,
        k_folds=K,
        score_kind=score_kind.value,
        learner_id="oracle" if oracle else strat.learner_id,
        transform_kind=strat.kind.value,
        seed=seed,
        moment_residual=rel,
        biased_score=score_kind is ScoreKind.NO,
        diagnostics_mode=diagnostics,
        rmse_l_by_fold=rmse_l,
        rmse_m_by_fold=rmse_m,
        config=dict(config or {}),
    )
    if return_bundles:
        return report, bundles
    return report


def _global_tune(strat: NuisanceStrategy, ds: PanelDataset, seed: int, tune_kw: dict):
    F, ty, td = learner_inputs(ds, strat.kind)
    X = _flat(F)
    groups = np.repeat(ds.units, F.shape[1])
    out = []
    for spec, target in zip((strat.spec_l, strat.spec_m), (ty, td)):
        if spec.tune and spec.grid:
            spec = grid_search_tune(spec, X, target.ravel(), groups=groups, seed=seed, **tune_kw)
        out.append(spec)
    return tuple(out)


def wg_ols(dataset: PanelDataset) -> float:
    """Classical within-group OLS coefficient on the treatment."""
    ds = dataset
    y = demean(ds.y_panel()).ravel()
    d = demean(ds.d_panel()).ravel()
    x = demean(ds.x_panel()).reshape(len(y), -1)
    X = np.column_stack([d, x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(coef[0])


def pooled_ols(dataset: PanelDataset) -> float:
    """OLS of y on (1, d, x) ignoring the panel structure."""
    model = fit_ols(np.column_stack([dataset.d, dataset.x]), dataset.y)
    return float(model.coef[0])
