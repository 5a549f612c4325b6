import json

import numpy as np
import pytest

from paneldml.errors import SingleWave
from paneldml.panel import PanelDataset, TransformKind
from paneldml.transforms import (
    apply_q,
    dictionary_width,
    expand_blocks,
    expand_dictionary,
    fd_lag_augment,
    first_difference,
    mundlak_augment,
    within_group,
)


def _one_unit(y, d=None, x=None):
    y = np.atleast_2d(np.asarray(y, float))
    d = np.zeros_like(y) if d is None else np.atleast_2d(np.asarray(d, float))
    x = y[:, :, None] if x is None else np.asarray(x, float).reshape(y.shape[0], y.shape[1], -1)
    return PanelDataset.from_arrays(y, d, x)


class TestWithinGroup:
    def test_arithmetic(self):
        tp = within_group(_one_unit([1, 2, 3]))
        np.testing.assert_allclose(tp.y, [-1, 0, 1])
        assert tp.n_waves == 3 and tp.kind is TransformKind.WG

    def test_constant_annihilated(self):
        np.testing.assert_allclose(within_group(_one_unit([5, 5, 5])).y, 0.0, atol=1e-15)

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 5, 2))
        np.testing.assert_allclose(apply_q(apply_q(a, "wg"), "wg"), apply_q(a, "wg"), atol=1e-14)

    def test_unit_sums_zero(self, linear_draw):
        tp = within_group(linear_draw)
        x = tp.x.reshape(tp.n_units, tp.n_waves, -1)
        assert np.max(np.abs(x.sum(axis=1))) <= 1e-10


class TestFirstDifference:
    def test_arithmetic(self):
        tp = first_difference(_one_unit([1, 2, 4]))
        np.testing.assert_allclose(tp.y, [1, 2])
        np.testing.assert_array_equal(tp.wave_ids, [2, 3])

    def test_constant(self):
        np.testing.assert_allclose(first_difference(_one_unit([7.5, 7.5, 7.5])).y, [0, 0])

    def test_linear_trend(self):
        b = 1.7
        np.testing.assert_allclose(first_difference(_one_unit(b * np.arange(1, 6))).y, b, rtol=1e-14)

    def test_row_count(self, linear_draw):
        tp = first_difference(linear_draw)
        assert len(tp.y) == linear_draw.n_units * (linear_draw.n_waves - 1)

    def test_single_wave(self):
        with pytest.raises(SingleWave):
            first_difference(_one_unit([[1.0], [2.0]]))


class TestMundlak:
    def test_width(self):
        rng = np.random.default_rng(0)
        ds = PanelDataset.from_arrays(rng.normal(size=(3, 4)), rng.normal(size=(3, 4)),
                                      rng.normal(size=(3, 4, 30)))
        assert mundlak_augment(ds).n_covariates == 60

    def test_mean_column(self):
        ds = _one_unit([0, 0, 0], x=[2, 4, 6])
        np.testing.assert_allclose(mundlak_augment(ds).x[:, 1], [4, 4, 4])

    def test_treatment_mean(self):
        ds = _one_unit([0, 0, 0], d=[0, 1, 1])
        aug = mundlak_augment(ds, include_treatment_mean=True)
        assert aug.covariate_names[-1] == "mean_d"
        np.testing.assert_allclose(aug.x[:, -1], 2 / 3)


class TestFdLag:
    def test_arithmetic(self):
        ds = _one_unit([1, 4], x=[3, 5])
        aug = fd_lag_augment(ds)
        np.testing.assert_allclose(aug.y, [3.0])
        np.testing.assert_allclose(aug.x, [[3.0, 5.0]])

    def test_dimensions(self):
        rng = np.random.default_rng(0)
        ds = PanelDataset.from_arrays(rng.normal(size=(2, 10)), rng.normal(size=(2, 10)),
                                      rng.normal(size=(2, 10, 30)))
        aug = fd_lag_augment(ds)
        assert aug.n_waves == 9 and aug.n_covariates == 60

    def test_constant_outcome(self):
        aug = fd_lag_augment(_one_unit([2, 2, 2, 2], x=[1, 2, 3, 4]))
        np.testing.assert_array_equal(aug.y, 0.0)


class TestDictionary:
    @pytest.mark.parametrize("p, width", [(30, 525), (1, 3), (2, 7)])
    def test_width(self, p, width):
        x = np.random.default_rng(p).normal(size=(4, p))
        assert expand_dictionary(x).width == width == dictionary_width(p)

    def test_column_order(self):
        x = np.array([[2.0, 3.0, 5.0]])
        dic = expand_dictionary(x)
        np.testing.assert_allclose(dic.matrix[0], [2, 3, 5, 4, 9, 25, 8, 27, 125, 6, 10, 15])
        assert dic.names()[-3:] == ["x1*x2", "x1*x3", "x2*x3"]
        assert json.loads(dic.to_json())[9] == ["int", 0, 1]

    def test_blocks(self):
        x = np.random.default_rng(0).normal(size=(5, 6))
        out = expand_blocks(x, [3, 3])
        assert out.shape[1] == 2 * dictionary_width(3)
        np.testing.assert_array_equal(out[:, 12:], expand_dictionary(x[:, 3:]).matrix)
