import numpy as np
import pytest

from paneldml.errors import DuplicateWave, NonFiniteValue, TooFewUnits, UnbalancedPanel
from paneldml.panel import EstimateReport, FoldPlan, PanelDataset, make_fold_plan, validate


def _long(n, t, p=3, seed=0):
    rng = np.random.default_rng(seed)
    unit = np.repeat(np.arange(1, n + 1), t)
    wave = np.tile(np.arange(1, t + 1), n)
    return unit, wave, rng.normal(size=n * t), rng.normal(size=n * t), rng.normal(size=(n * t, p))


class TestValidate:
    def test_complete_two_by_three(self):
        ds = PanelDataset.from_long(*_long(2, 3))
        assert validate(ds) is ds
        assert (ds.n_units, ds.n_waves, ds.n_covariates) == (2, 3, 3)

    def test_missing_wave(self):
        unit, wave, y, d, x = _long(2, 3)
        keep = ~((unit == 1) & (wave == 2))
        with pytest.raises(UnbalancedPanel) as exc:
            PanelDataset.from_long(unit[keep], wave[keep], y[keep], d[keep], x[keep])
        assert exc.value.unit == 1

    def test_nan_reports_row_and_column(self):
        unit, wave, y, d, x = _long(3, 3)
        x[6, 2] = np.nan
        with pytest.raises(NonFiniteValue) as exc:
            PanelDataset.from_long(unit, wave, y, d, x)
        assert (exc.value.row, exc.value.column) == (7, "x3")

    def test_duplicate_wave(self):
        unit, wave, y, d, x = _long(2, 3)
        wave[1] = 1
        with pytest.raises(DuplicateWave):
            PanelDataset.from_long(unit, wave, y, d, x)

    def test_unsorted_rows_are_sorted(self):
        unit, wave, y, d, x = _long(3, 4)
        perm = np.random.default_rng(1).permutation(len(y))
        ds = PanelDataset.from_long(unit[perm], wave[perm], y[perm], d[perm], x[perm])
        np.testing.assert_array_equal(ds.y, y)
        np.testing.assert_array_equal(ds.x, x)

    def test_waves_relabelled(self):
        unit, wave, y, d, x = _long(2, 3)
        ds = PanelDataset.from_long(unit, wave * 10 + 2000, y, d, x)
        np.testing.assert_array_equal(ds.wave_ids, np.tile([1, 2, 3], 2))

    def test_subset_keeps_unit_blocks(self):
        ds = PanelDataset.from_long(*_long(5, 3))
        sub = ds.subset([1, 3])
        np.testing.assert_array_equal(sub.units, [2, 4])
        np.testing.assert_array_equal(sub.y_panel(), ds.y_panel()[[1, 3]])


class TestFoldPlan:
    def test_even_split(self):
        plan = make_fold_plan(10, 5, seed=3)
        np.testing.assert_array_equal(plan.sizes(), [2] * 5)

    def test_uneven_split(self):
        plan = make_fold_plan(list(range(11)), 5, seed=3)
        assert sorted(plan.sizes()) == [2, 2, 2, 2, 3]

    def test_deterministic(self):
        a = make_fold_plan(50, 4, seed=9)
        b = make_fold_plan(50, 4, seed=9)
        np.testing.assert_array_equal(a.assignment, b.assignment)

    def test_seed_changes_plan(self):
        a = make_fold_plan(50, 4, seed=9)
        b = make_fold_plan(50, 4, seed=10)
        assert not np.array_equal(a.assignment, b.assignment)

    def test_too_few_units(self):
        with pytest.raises(TooFewUnits):
            make_fold_plan(9, 5, seed=0)

    def test_k_below_two(self):
        with pytest.raises(ValueError):
            make_fold_plan(9, 1, seed=0)

    def test_fold_and_complement(self):
        plan = make_fold_plan(12, 3, seed=0)
        for j in range(3):
            both = np.sort(np.concatenate([plan.fold(j), plan.complement(j)]))
            np.testing.assert_array_equal(both, np.arange(12))


def test_report_invariants():
    rep = EstimateReport(0.5, 0.1, (0.5 - 0.196, 0.5 + 0.196), [0.4, 0.6], 1.0, 1.0, 1.0,
                         10, 3, 2, "po", "ols", "cre", 0)
    assert rep.p_value == pytest.approx(5.733e-7, rel=1e-3)
    assert rep.stars() == "***"
    d = rep.to_dict()
    assert d["ci95"] == [pytest.approx(0.304), pytest.approx(0.696)]
    assert "theta_hat = 0.5000***" in rep.summary()
