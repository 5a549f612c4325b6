import numpy as np
import pytest
from scipy.optimize import minimize

from paneldml.errors import AllZeroVarianceColumns, EmptyGrid, RankDeficient
from paneldml.learners import (
    LassoDesign,
    LearnerKind,
    LearnerSpec,
    cv_fold_ids,
    fit_boosting,
    fit_cart,
    fit_lasso_cv,
    fit_learner,
    fit_ols,
    fit_random_forest,
    grid_search_tune,
)
from paneldml.learners.trees import grow


# ---------------------------------------------------------------- OLS


class TestOls:
    def test_noiseless_line(self):
        x = np.linspace(-2, 3, 10)
        m = fit_ols(x[:, None], 2 * x + 1)
        assert m.intercept == pytest.approx(1.0, abs=1e-10)
        assert m.coef[0] == pytest.approx(2.0, abs=1e-10)

    def test_duplicated_constant_column(self):
        X = np.column_stack([np.ones(10), np.ones(10)])
        with pytest.raises(RankDeficient):
            fit_ols(X, np.arange(10.0))

    def test_duplicated_column_named(self):
        x = np.random.default_rng(0).normal(size=12)
        with pytest.raises(RankDeficient) as exc:
            fit_ols(np.column_stack([x, x]), x, column_names=["a", "b"])
        assert exc.value.column == "b"

    def test_orthogonal_target(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(40, 3))
        X -= X.mean(0)
        y = rng.normal(size=40)
        # project y off the span of [1, X]
        A = np.column_stack([np.ones(40), X])
        y -= A @ np.linalg.lstsq(A, y, rcond=None)[0]
        np.testing.assert_allclose(fit_ols(X, y).coef, 0.0, atol=1e-10)


# ---------------------------------------------------------------- LASSO


def _sparse_instance(n=20, p=8, seed=4, noise=0.5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = np.zeros(p)
    beta[2], beta[5] = 3.0, 1.5
    return X, X @ beta + noise * rng.normal(size=n), beta


def _qp_lasso(Zc, yc, lam):
    """Reference solve of 0.5/m ||yc - Zc b||^2 + lam |b|_1 via a bounded QP in (b+, b-)."""
    m, p = Zc.shape
    G = Zc.T @ Zc / m
    c = Zc.T @ yc / m

    def f(w):
        b = w[:p] - w[p:]
        g = G @ b - c
        val = 0.5 * b @ G @ b - c @ b + lam * w.sum()
        return val, np.concatenate([g + lam, -g + lam])

    res = minimize(f, np.zeros(2 * p), jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * p),
                   options={"ftol": 1e-16, "gtol": 1e-12, "maxiter": 20000})
    return res.x[:p] - res.x[p:]


class TestLasso:
    def test_zero_lambda_is_ols(self):
        X, y, _ = _sparse_instance(n=60)
        m = fit_lasso_cv(X, y, lambda_grid_=[0.0], cv_folds=3)
        ols = fit_ols(X, y)
        np.testing.assert_allclose(m.coef, ols.coef, atol=1e-6)
        assert m.intercept == pytest.approx(ols.intercept, abs=1e-6)

    def test_above_lambda_max_all_zero(self):
        X, y, _ = _sparse_instance()
        Z = (X - X.mean(0)) / X.std(0)
        lam_max = np.max(np.abs(Z.T @ (y - y.mean()))) / len(y)
        m = fit_lasso_cv(X, y, lambda_grid_=[2 * lam_max, lam_max], cv_folds=4)
        assert np.all(m.coef == 0.0)
        assert m.intercept == pytest.approx(y.mean())

    def test_cv_scan_matches_reference_qp(self):
        X, y, beta = _sparse_instance()
        k, seed = 4, 7
        n = len(y)
        Z = (X - X.mean(0)) / X.std(0)
        yc = y - y.mean()
        lam_max = np.max(np.abs(Z.T @ yc)) / n
        lams = lam_max * np.logspace(0, -3, 25)
        m = fit_lasso_cv(X, y, lambda_grid_=lams, cv_folds=k, seed=seed)

        ids = cv_fold_ids(n, k, seed)
        err = np.zeros((k, len(lams)))
        for f in range(k):
            tr, te = ids != f, ids == f
            zm, ym = Z[tr].mean(0), yc[tr].mean()
            for j, lam in enumerate(lams):
                b = _qp_lasso(Z[tr] - zm, yc[tr] - ym, lam)
                pred = (Z[te] - zm) @ b + ym
                err[f, j] = np.mean((yc[te] - pred) ** 2)
        oracle = err.mean(0)
        np.testing.assert_allclose(m.cv_error, oracle, rtol=1e-5, atol=1e-8)
        assert m.info["lambda_index"] == int(np.argmin(oracle))
        b_ref = _qp_lasso(Z, yc, lams[m.info["lambda_index"]])
        np.testing.assert_allclose(m.coef_std, b_ref, atol=1e-6)
        assert set(np.flatnonzero(beta)) <= set(np.flatnonzero(m.coef))

    def test_kkt_at_selected_lambda(self):
        X, y, _ = _sparse_instance(n=80, p=12, seed=2)
        m = fit_lasso_cv(X, y, cv_folds=5, seed=1)
        Z = (X - X.mean(0)) / X.std(0)
        g = Z.T @ (y - y.mean() - Z @ m.coef_std) / len(y)
        lam = m.info["lam"]
        active = m.coef_std != 0
        assert np.all(np.abs(g[~active]) <= lam + 1e-6)
        np.testing.assert_allclose(g[active], lam * np.sign(m.coef_std[active]), atol=1e-6)

    def test_shared_design_identical(self):
        X, y, _ = _sparse_instance(n=50)
        design = LassoDesign(X, 5, 3)
        a = fit_lasso_cv(X, y, cv_folds=5, seed=3)
        b = fit_lasso_cv(X, y, cv_folds=5, seed=3, design=design)
        np.testing.assert_array_equal(a.coef, b.coef)

    def test_grouped_folds_keep_units_together(self):
        groups = np.repeat(np.arange(10), 4)
        ids = cv_fold_ids(40, 5, 0, groups)
        assert all(len(set(ids[groups == g])) == 1 for g in range(10))

    def test_zero_variance(self):
        with pytest.raises(AllZeroVarianceColumns):
            fit_lasso_cv(np.ones((10, 2)), np.arange(10.0))

    def test_unsorted_grid(self):
        X, y, _ = _sparse_instance()
        with pytest.raises(ValueError):
            fit_lasso_cv(X, y, lambda_grid_=[0.1, 0.2])


# ---------------------------------------------------------------- trees


def _sse(y):
    return float(np.sum((y - y.mean()) ** 2)) if len(y) else 0.0


def _best_split(X, y):
    """Exhaustive search over every feature and midpoint; ties to lower column, lower threshold."""
    best = (0.0, None, None)
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for thr in (vals[:-1] + vals[1:]) / 2:
            left = X[:, j] <= thr
            gain = _sse(y) - _sse(y[left]) - _sse(y[~left])
            if gain > best[0] + 1e-12:
                best = (gain, j, thr)
    return best


def _greedy_sse(X, y, depth):
    if depth == 0 or len(y) < 2:
        return _sse(y)
    gain, j, thr = _best_split(X, y)
    if j is None:
        return _sse(y)
    left = X[:, j] <= thr
    return _greedy_sse(X[left], y[left], depth - 1) + _greedy_sse(X[~left], y[~left], depth - 1)


class TestCart:
    def test_step_function(self):
        x = np.linspace(-1, 1, 40)
        y = (x > 0).astype(float)
        m = fit_cart(x[:, None], y, cp=0.0, maxdepth=2, minbucket=1)
        t = m.tree
        assert t.n_leaves == 2
        assert abs(t.threshold[0]) < 0.06
        assert sorted(t.value[t.feature < 0]) == [0.0, 1.0]

    def test_constant_target(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        m = fit_cart(X, np.full(20, 3.5))
        assert m.tree.n_leaves == 1
        np.testing.assert_array_equal(m.predict(X), 3.5)

    @pytest.mark.parametrize("seed", range(10))
    def test_eight_points_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(8, 2))
        y = rng.normal(size=8)
        m = fit_cart(X, y, cp=0.0, maxdepth=2, minbucket=1)
        sse = float(np.sum((m.predict(X) - y) ** 2))
        assert sse == pytest.approx(_greedy_sse(X, y, 2), abs=1e-10)

    def test_depth_respected(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 3))
        m = fit_cart(X, rng.normal(size=200), cp=0.0, maxdepth=3, minbucket=1)
        assert m.tree.depth <= 3


class TestForest:
    def test_single_tree_equals_cart(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(100, 4))
        y = np.sin(X[:, 0]) + rng.normal(size=100) * 0.1
        rf = fit_random_forest(X, y, num_trees=1, max_depth=5, min_node_size=3, mtry=4, bootstrap=False)
        cart = fit_cart(X, y, cp=0.0, maxdepth=5, minbucket=3)
        Xt = rng.normal(size=(50, 4))
        np.testing.assert_array_equal(rf.predict(Xt), cart.predict(Xt))

    def test_range(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(80, 3))
        y = rng.exponential(size=80)
        pred = fit_random_forest(X, y, num_trees=20, seed=3).predict(rng.normal(size=(200, 3)) * 5)
        assert pred.min() >= y.min() and pred.max() <= y.max()

    def test_seeded(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        a = fit_random_forest(X, y, num_trees=10, mtry=1, seed=5).predict(X)
        b = fit_random_forest(X, y, num_trees=10, mtry=1, seed=5).predict(X)
        assert a.tobytes() == b.tobytes()


class TestBoosting:
    def _data(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(120, 3))
        return X, X[:, 0] ** 2 + np.sign(X[:, 1]) + 0.2 * rng.normal(size=120)

    def test_one_stage(self):
        X, y = self._data()
        m = fit_boosting(X, y, nrounds=1, max_depth=3, l2_lambda=0.0, learning_rate=1.0)
        t = grow(X, y - y.mean(), max_depth=3, min_leaf=1)
        np.testing.assert_allclose(m.predict(X), y.mean() + t.predict(X), atol=1e-12)

    def test_sse_non_increasing(self):
        X, y = self._data()
        m = fit_boosting(X, y, nrounds=30, max_depth=2, l2_lambda=1.0, learning_rate=0.3)
        sse = [float(np.sum((p - y) ** 2)) for p in m.staged_predict(X)]
        assert all(b <= a + 1e-9 for a, b in zip(sse, sse[1:]))

    def test_full_shrinkage(self):
        X, y = self._data()
        m = fit_boosting(X, y, nrounds=5, max_depth=3, l2_lambda=1e12, learning_rate=1.0)
        np.testing.assert_allclose(m.predict(X), y.mean(), atol=1e-6)


# ---------------------------------------------------------------- specs and tuning


class TestSpec:
    def test_defaults_and_roundtrip(self):
        spec = LearnerSpec.default("cart", seed=3, tune=True)
        assert spec.params["minbucket"] == 5
        back = LearnerSpec.from_dict(spec.to_dict())
        assert back == spec

    @pytest.mark.parametrize("kind, bad", [
        ("cart", {"cp": -1}), ("boost", {"learning_rate": 0.0}), ("rf", {"num_trees": 0}),
        ("lasso", {"cv_folds": 1}), ("cart", {"nonsense": 1}),
    ])
    def test_ranges(self, kind, bad):
        with pytest.raises(ValueError):
            LearnerSpec(kind, bad)

    @pytest.mark.parametrize("kind", [k.value for k in LearnerKind])
    def test_train_rmse(self, kind):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(60, 3))
        y = X[:, 0] - X[:, 1] ** 2 + rng.normal(size=60)
        spec = LearnerSpec(kind, {"num_trees": 5} if kind == "rf" else {"nrounds": 5} if kind == "boost" else {})
        m = fit_learner(spec, X, y)
        assert m.train_rmse == pytest.approx(float(np.sqrt(np.mean((m.predict(X) - y) ** 2))), abs=1e-12)


class TestTuning:
    def _data(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(150, 2))
        return X, (X[:, 0] > 0) + 0.1 * rng.normal(size=150)

    def test_twenty_five_configurations(self):
        X, y = self._data()
        trace = []
        best = grid_search_tune(LearnerSpec.default("cart"), X, y, resolution=5, n_evals=5, trace=trace)
        assert len(trace) == 25
        assert 0.001 <= best.params["cp"] <= 0.05 and 2 <= best.params["maxdepth"] <= 10
        scores = [row["cv_rmse"] for row in trace]
        winner = trace[int(np.argmin(scores))]
        assert best.params["cp"] == winner["cp"] and best.params["maxdepth"] == winner["maxdepth"]

    def test_single_point(self):
        X, y = self._data()
        spec = LearnerSpec("cart", grid={"cp": [0.02], "maxdepth": (4, 4, "int")})
        best = grid_search_tune(spec, X, y, resolution=3, n_evals=2)
        assert best.params["cp"] == 0.02 and best.params["maxdepth"] == 4

    def test_dominant_config(self):
        X, y = self._data()
        spec = LearnerSpec("cart", grid={"cp": [0.999, 0.001]})
        trace = []
        best = grid_search_tune(spec, X, y, resolution=5, n_evals=5, trace=trace)
        assert {row["cp"] for row in trace} == {0.999, 0.001}
        assert best.params["cp"] == 0.001

    def test_empty_grid(self):
        X, y = self._data()
        with pytest.raises(EmptyGrid):
            grid_search_tune(LearnerSpec("ols"), X, y)
        with pytest.raises(EmptyGrid):
            grid_search_tune(LearnerSpec("cart", grid={"cp": []}), X, y)
