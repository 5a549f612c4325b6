"""Double machine learning for static panel data with fixed effects."""

from .engine import (
    NuisanceStrategy,
    ScoreBundle,
    ScoreKind,
    StrategyKind,
    build_scores,
    cluster_robust_variance,
    dml_estimate,
    learn_approx_nuisances,
    learn_cre_nuisances,
    learn_fd_exact_nuisances,
    learn_hybrid_nuisances,
    solve_theta,
    wg_ols,
)
from .errors import *  # noqa: F401,F403
from .kernels import BACKEND
from .learners import (
    LearnerKind,
    LearnerSpec,
    fit_boosting,
    fit_cart,
    fit_lasso_cv,
    fit_learner,
    fit_ols,
    fit_random_forest,
    grid_search_tune,
)
from .panel import EstimateReport, FoldPlan, PanelDataset, TransformKind, make_fold_plan, validate
from .simulation import DgpConfig, McSummary, emit_table, generate_dgp, run_monte_carlo
from .transforms import (
    Dictionary,
    TransformedPanel,
    expand_dictionary,
    fd_lag_augment,
    first_difference,
    mundlak_augment,
    within_group,
)

__version__ = "0.1.0"
