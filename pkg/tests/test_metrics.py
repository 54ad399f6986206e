import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfuse.errors import InvalidArgument
from gridfuse.gp.predict import PosteriorPrediction
from gridfuse.metrics import ci_coverage, mean_absolute_error, rmse_percent


def pred(mean, var):
    mean = np.asarray(mean, float)
    return PosteriorPrediction(np.zeros(mean.size), mean, np.asarray(var, float) * np.ones(mean.size))


class TestRmse:
    def test_identical(self):
        assert rmse_percent([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_uniform_offset(self):
        assert rmse_percent(np.ones(5), np.full(5, 1.1)) == pytest.approx(10.0)

    def test_hand_arithmetic(self):
        # 100 * sqrt(0.5) / sqrt(12.5)
        assert rmse_percent([3.0, 4.0], [3.0, 5.0]) == pytest.approx(20.0, rel=1e-14)

    def test_errors(self):
        with pytest.raises(InvalidArgument):
            rmse_percent([1.0], [1.0, 2.0])
        with pytest.raises(InvalidArgument):
            rmse_percent([0.0, 0.0], [1.0, 1.0])
        with pytest.raises(InvalidArgument):
            rmse_percent([], [])

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(-1e3, 1e3))
    @settings(max_examples=60, deadline=None)
    def test_scale_invariant(self, vals, c):
        t = np.array(vals) + 101.0
        e = t * 1.01 + 0.3
        if abs(c) < 1e-3:
            return
        assert abs(rmse_percent(c * t, c * e) - rmse_percent(t, e)) < 1e-12 * max(1.0, rmse_percent(t, e))


class TestMae:
    def test_identical(self):
        assert mean_absolute_error([1, 2], [1, 2]) == 0.0

    def test_pm_one(self):
        assert mean_absolute_error([0, 0], [1, -1]) == 1.0

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=20))
    def test_symmetric(self, pairs):
        a, b = map(np.array, zip(*pairs))
        assert mean_absolute_error(a, b) == mean_absolute_error(b, a)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            mean_absolute_error([1], [1, 2])


class TestCoverage:
    def test_at_mean(self):
        assert ci_coverage([1.0, 2.0], pred([1.0, 2.0], 0.5)) == 1.0

    def test_degenerate(self):
        assert ci_coverage([1.0, 2.0], pred([0.0, 0.0], 0.0)) == 0.0

    def test_monte_carlo(self):
        z = np.random.default_rng(0).standard_normal(10000)
        assert 0.94 <= ci_coverage(z, pred(np.zeros(10000), 1.0), 0.95) <= 0.96

    def test_subset(self):
        p = pred([0.0, 0.0, 0.0], 0.0)
        assert ci_coverage([0.0, 1.0, 1.0], p, where=[True, False, False]) == 1.0
        with pytest.raises(InvalidArgument):
            ci_coverage([0.0, 1.0, 1.0], p, where=[False, False, False])

    def test_mismatch(self):
        with pytest.raises(InvalidArgument):
            ci_coverage([1.0], pred([1.0, 2.0], 1.0))
