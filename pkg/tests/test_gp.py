import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridfuse.errors import InvalidArgument, NumericalFailure
from gridfuse.gp import (
    GpPrior,
    InputEncoding,
    KernelParams,
    MeanNet,
    TrainConfig,
    confidence_interval,
    factorize,
    kernel_matrix,
    lml_gradients,
    lml_value_and_gradients,
    load_prior,
    log_marginal_likelihood,
    mean_forward,
    posterior_predict,
    rbf_kernel,
    save_prior,
    total_log_marginal_likelihood,
    train_prior,
    train_prior_with_history,
    z_value,
)
from gridfuse.gp.predict import PosteriorPrediction, impute
from gridfuse.timeseries import Phase, Quantity, TimeSeriesTask

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def task(times, values, tid="t", q=Quantity.ActivePower_kW, bus="701"):
    return TimeSeriesTask(tid, bus, Phase.A, q, np.asarray(times, float), np.asarray(values, float))


def zero_mean_prior(lengthscale=1.0, signal_var=1.0, noise_var=0.0):
    """Prior on raw (un-normalized) time with an identically zero mean."""
    return GpPrior(MeanNet.constant([1, 32, 32, 1], 0.0),
                   KernelParams.from_natural(lengthscale, signal_var, noise_var),
                   InputEncoding.TIME_ONLY, horizon=1.0)


def random_prior(seed, encoding=InputEncoding.TIME_ONLY, hidden=(32, 32)):
    rng = np.random.default_rng(seed)
    kp = KernelParams(math.log(rng.uniform(0.05, 0.5)), rng.uniform(-0.5, 0.5), math.log(rng.uniform(0.01, 0.2)))
    p = GpPrior.initial(seed, encoding, kp, hidden=hidden, horizon=1.0, bus_depth={"701": 0.3})
    # nonzero biases so every ReLU regime gets exercised
    flat = p.flat()
    flat[: p.mean.n_params] += rng.normal(scale=0.1, size=p.mean.n_params)
    return p.with_flat(flat)


class TestKernel:
    def test_zero_distance(self):
        assert rbf_kernel(0.3, 0.3, KernelParams.from_natural(1.0, 4.0, 0.1)) == 4.0

    def test_unit_distance(self):
        assert rbf_kernel(0.0, 1.0, KernelParams.from_natural(1.0, 1.0, 0.1)) == pytest.approx(0.6065307, abs=1e-7)

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_symmetric(self, a, b):
        kp = KernelParams.from_natural(0.7, 1.3, 0.1)
        assert rbf_kernel(a, b, kp) == rbf_kernel(b, a, kp)

    def test_matrix_single(self):
        kp = KernelParams.from_natural(1.0, 2.5, 0.1)
        np.testing.assert_array_equal(kernel_matrix([0.4], kp, jitter=1e-3), [[2.5 + 1e-3]])

    def test_matrix_pair(self):
        k = kernel_matrix([0.0, 1.0], KernelParams.from_natural(1.0, 1.0, 0.1), jitter=0.0)
        np.testing.assert_allclose(k, [[1, 0.6065307], [0.6065307, 1]], atol=1e-7)

    def test_matrix_symmetric_and_entries(self):
        rng = np.random.default_rng(0)
        xs = rng.uniform(0, 1, 30)
        kp = KernelParams.from_natural(0.2, 1.7, 0.1)
        k = kernel_matrix(xs, kp)
        assert np.array_equal(k, k.T)
        assert k[3, 7] == pytest.approx(rbf_kernel(xs[3], xs[7], kp), rel=1e-14)

    def test_factorize_duplicates_gets_jitter(self):
        # identical inputs and no noise: K is singular, so jitter must kick in
        f = factorize(np.zeros(5), KernelParams.from_natural(1.0, 1.0, 0.0))
        assert f.jitter > 0
        a = f.chol @ f.chol.T
        assert np.linalg.eigvalsh(a).min() >= -1e-10

    def test_factorize_noiseless_distinct_uses_no_jitter(self):
        f = factorize(np.array([0.0, 1.0]), KernelParams.from_natural(1.0, 1.0, 0.0))
        assert f.jitter == 0.0

    def test_factorize_failure(self):
        with pytest.raises(NumericalFailure):
            factorize(np.array([0.0, np.nan]), KernelParams())

    def test_bad_params(self):
        with pytest.raises(InvalidArgument):
            KernelParams.from_natural(-1.0, 1.0, 0.1)

    def test_log_clamp(self):
        assert KernelParams.from_array([50, -50, 0]).as_array().tolist() == [20, -20, 0]


class TestMeanNet:
    def test_constant_output(self):
        net = MeanNet.constant([1, 32, 32, 1], 2.5)
        np.testing.assert_array_equal(mean_forward(net, np.array([[-3.0], [0.0], [7.0]])), [2.5] * 3)

    def _ones(self):
        ones = tuple(np.ones((1, 1)) for _ in range(3))
        zeros = tuple(np.zeros(1) for _ in range(3))
        return MeanNet(ones, zeros)

    def test_hand_traced_positive(self):
        assert mean_forward(self._ones(), np.array([[2.0]]))[0] == 2.0

    def test_hand_traced_negative(self):
        assert mean_forward(self._ones(), np.array([[-5.0]]))[0] == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(InvalidArgument):
            mean_forward(MeanNet.init([1, 4, 4, 1], 0), np.zeros((3, 2)))

    def test_flat_round_trip(self):
        net = MeanNet.init([5, 32, 32, 1], 3)
        back = net.with_flat(net.flat())
        for a, b in zip(net.weights + net.biases, back.weights + back.biases):
            np.testing.assert_array_equal(a, b)

    def test_glorot_bounds(self):
        net = MeanNet.init([1, 32, 32, 1], 0)
        assert np.abs(net.weights[1]).max() <= math.sqrt(6 / 64)
        assert net.n_params == 2 * 32 + 32 * 32 + 32 + 32 + 1

    def test_rejects_non_finite(self):
        w = (np.array([[np.inf]]),)
        with pytest.raises(InvalidArgument):
            MeanNet(w, (np.zeros(1),))


class TestLikelihood:
    def test_single_zero(self):
        v = log_marginal_likelihood(zero_mean_prior(), task([0.0], [0.0]))
        assert v == pytest.approx(-0.9189385, abs=1e-7)

    def test_single_one(self):
        v = log_marginal_likelihood(zero_mean_prior(), task([0.0], [1.0]))
        assert v == pytest.approx(-1.4189385, abs=1e-7)

    def test_matches_dense_formula(self):
        rng = np.random.default_rng(4)
        t = np.sort(rng.uniform(0, 3, 12))
        y = rng.normal(size=12)
        prior = zero_mean_prior(0.7, 1.3, 0.05)
        a = kernel_matrix(t, prior.kernel) + 0.05 * np.eye(12)
        ref = -0.5 * y @ np.linalg.solve(a, y) - 0.5 * np.linalg.slogdet(a)[1] - 12 * HALF_LOG_2PI
        assert log_marginal_likelihood(prior, task(t, y)) == pytest.approx(ref, rel=1e-12)

    def test_sum_over_tasks(self):
        prior = random_prior(1)
        tasks = [task(np.sort(np.random.default_rng(s).uniform(0, 1, 6)), np.arange(6.0) * s, f"t{s}")
                 for s in range(3)]
        total = total_log_marginal_likelihood(prior, tasks)
        assert total == pytest.approx(sum(log_marginal_likelihood(prior, t) for t in tasks), rel=1e-14)

    def test_gradient_of_sum_is_sum(self):
        prior = random_prior(2)
        rng = np.random.default_rng(0)
        tasks = [task(np.sort(rng.uniform(0, 1, 7)), rng.normal(size=7), f"t{s}") for s in range(3)]
        g = lml_gradients(prior, tasks)
        np.testing.assert_allclose(g, sum(lml_gradients(prior, [t]) for t in tasks), rtol=1e-12, atol=1e-12)


def fd_relative_error(prior, tasks, h=1e-5):
    """Max relative error between analytic and central-difference gradients."""
    value, g = lml_value_and_gradients(prior, tasks)
    base = prior.flat()
    worst = 0.0
    for i in range(base.size):
        up, dn = base.copy(), base.copy()
        up[i] += h
        dn[i] -= h
        fd = (total_log_marginal_likelihood(prior.with_flat(up), tasks)
              - total_log_marginal_likelihood(prior.with_flat(dn), tasks)) / (2 * h)
        # floor keeps parameters whose gradient is exactly zero (dead ReLUs) from dividing by ~0
        err = abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-8)
        worst = max(worst, err)
    return worst


def random_tasks(seed, n, encoding):
    rng = np.random.default_rng(seed)
    qs = list(Quantity)
    out = []
    for k in range(2):
        t = np.sort(rng.choice(np.linspace(0, 1, 200), n, replace=False))
        out.append(task(t, rng.normal(size=n), f"t{k}", qs[k % 3]))
    return out


@pytest.mark.parametrize("n", [3, 8, 15])
@pytest.mark.parametrize("encoding", list(InputEncoding))
def test_gradient_matches_finite_differences(n, encoding):
    prior = random_prior(n, encoding, hidden=(8, 8))
    assert fd_relative_error(prior, random_tasks(n, n, encoding)) < 1e-4


def test_gradient_full_width_n8():
    prior = random_prior(11)
    assert fd_relative_error(prior, random_tasks(11, 8, InputEncoding.TIME_ONLY)) < 1e-4


class TestPosterior:
    def test_empty_observation_is_prior(self):
        prior = zero_mean_prior(1.0, 2.0, 0.3)
        pred = posterior_predict(prior, task([], []), [0.0, 5.0])
        np.testing.assert_array_equal(pred.mean, [0, 0])
        np.testing.assert_array_equal(pred.variance, [2, 2])
        pred = posterior_predict(prior, task([], []), [0.0], include_noise=True)
        assert pred.variance[0] == pytest.approx(2.3)

    def test_noiseless_at_observation(self):
        pred = posterior_predict(zero_mean_prior(), task([0.0], [1.0]), [0.0])
        assert pred.mean[0] == 1.0 and pred.variance[0] == 0.0

    def test_noiseless_one_lengthscale_away(self):
        pred = posterior_predict(zero_mean_prior(), task([0.0], [1.0]), [1.0])
        assert abs(pred.mean[0] - math.exp(-0.5)) < 1e-10
        assert abs(pred.variance[0] - (1 - math.exp(-1))) < 1e-10

    def test_variance_never_exceeds_prior(self):
        rng = np.random.default_rng(0)
        t = np.sort(rng.uniform(0, 10, 20))
        prior = zero_mean_prior(0.8, 1.5, 0.1)
        q = np.linspace(-2, 12, 300)
        for noise in (False, True):
            pred = posterior_predict(prior, task(t, rng.normal(size=20)), q, include_noise=noise)
            assert np.all(pred.variance <= 1.5 + (0.1 if noise else 0) + 1e-10)
            assert np.all(pred.variance >= 0)

    def test_interpolates_noiseless(self):
        rng = np.random.default_rng(1)
        t = np.sort(rng.choice(np.linspace(0, 5, 60), 10, replace=False))
        y = rng.normal(size=10)
        pred = posterior_predict(zero_mean_prior(0.5, 1.0, 0.0), task(t, y), t)
        assert np.max(np.abs(pred.mean - y)) < 1e-8

    def test_far_from_data_reverts_to_prior(self):
        prior = random_prior(3)
        obs = task([0.0, 0.05, 0.1], [1.0, -2.0, 0.5])
        q = np.array([0.1 + 12 * prior.kernel.lengthscale])
        pred = posterior_predict(prior, obs, q)
        assert abs(pred.mean[0] - prior.mean_at(q, obs)[0]) < 1e-6
        assert abs(pred.variance[0] - prior.kernel.signal_var) < 1e-6

    def test_ci_halfwidth(self):
        pred = PosteriorPrediction(np.zeros(2), np.zeros(2), np.array([1.0, 4.0]))
        np.testing.assert_allclose(pred.ci_halfwidth, [1.959964, 2 * 1.959964], atol=1e-6)

    def test_deterministic(self):
        prior = random_prior(5)
        obs = task([0.1, 0.2, 0.6], [1.0, 2.0, 0.0])
        a = posterior_predict(prior, obs, np.linspace(0, 1, 9))
        b = posterior_predict(prior, obs, np.linspace(0, 1, 9))
        assert np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance)


class TestConfidenceInterval:
    def test_zero_variance(self):
        pred = PosteriorPrediction(np.zeros(3), np.array([1.0, 2.0, 3.0]), np.zeros(3))
        lo, hi = confidence_interval(pred, 0.95)
        np.testing.assert_array_equal(lo, pred.mean)
        np.testing.assert_array_equal(hi, pred.mean)

    def test_standard_normal(self):
        lo, hi = confidence_interval(PosteriorPrediction(np.zeros(1), np.zeros(1), np.ones(1)), 0.95)
        assert lo[0] == pytest.approx(-1.959964, abs=1e-6) and hi[0] == pytest.approx(1.959964, abs=1e-6)
        assert z_value(0.95) == pytest.approx(1.959964, abs=1e-6)

    def test_widening(self):
        pred = PosteriorPrediction(np.zeros(1), np.array([0.3]), np.array([0.2]))
        lo95, hi95 = confidence_interval(pred, 0.95)
        lo99, hi99 = confidence_interval(pred, 0.99)
        assert lo99[0] < lo95[0] and hi99[0] > hi95[0]

    @pytest.mark.parametrize("level", [0.0, 1.0, -0.5, 1.5])
    def test_bad_level(self, level):
        with pytest.raises(InvalidArgument):
            confidence_interval(PosteriorPrediction(np.zeros(1), np.zeros(1), np.ones(1)), level)


class TestTraining:
    def test_constant_tasks(self):
        tasks = [task(np.arange(24) * 3600.0, np.full(24, c), f"c{k}") for k, c in enumerate([3.0, 3.0, 3.0])]
        prior = train_prior(tasks, TrainConfig(epochs=30, seed=0))
        q = np.linspace(0, 86400, 50)
        for c_task in tasks:
            mean = impute(prior, c_task, q, pass_through=False).mean
            assert np.max(np.abs(mean - 3.0)) <= 3.0 * 1e-2 + 1e-3

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        tasks = [task(np.arange(30) * 2880.0, np.sin(np.arange(30) / 4) + rng.normal(0, 0.1, 30), f"s{k}")
                 for k in range(2)]
        a = train_prior(tasks, TrainConfig(epochs=5, seed=3))
        b = train_prior(tasks, TrainConfig(epochs=5, seed=3))
        assert np.array_equal(a.flat(), b.flat())

    def test_lml_not_worse(self):
        rng = np.random.default_rng(2)
        tasks = [task(np.arange(40) * 2160.0, np.cos(np.arange(40) / 5) * 3 + rng.normal(0, 0.2, 40), f"s{k}")
                 for k in range(3)]
        res = train_prior_with_history(tasks, TrainConfig(epochs=20, seed=1))
        assert res.best_lml >= res.initial_lml

    def test_stationary_point(self):
        # tiny full-batch problem run long: the returned iterate should have a near-zero gradient
        t = np.linspace(0, 1, 6)
        y = np.array([0.3, -0.2, 0.5, 0.1, -0.4, 0.2])
        obs = [task(t, y)]
        prior = GpPrior.initial(0, hidden=(2, 2), horizon=1.0)
        cfg = TrainConfig(epochs=6000, learning_rate=0.01, seed=0, hidden=(2, 2), horizon=1.0,
                          standardize=False, batch_size=None)
        from gridfuse.gp import fit

        res = fit(prior, obs, cfg)
        g = lml_gradients(res.prior, obs)
        assert np.linalg.norm(g) < 1e-3

    def test_rejects_empty(self):
        with pytest.raises(InvalidArgument):
            train_prior([], TrainConfig(epochs=1))
        with pytest.raises(InvalidArgument):
            train_prior([task([], [])], TrainConfig(epochs=1))


def test_prior_json_round_trip(tmp_path):
    prior = random_prior(7, InputEncoding.TIME_PLUS_TASK_FEATURES)
    path = tmp_path / "prior.json"
    save_prior(prior, path)
    doc = json.loads(path.read_text())
    assert doc["format_version"] == 1
    back = load_prior(path)
    assert back.input_encoding is InputEncoding.TIME_PLUS_TASK_FEATURES
    np.testing.assert_array_equal(back.flat(), prior.flat())
    assert back.bus_depth == prior.bus_depth


def test_impute_passes_observed_through():
    prior = random_prior(8)
    obs = task([0.0, 0.25, 0.5], [10.0, 12.0, 11.0])
    pred = impute(prior, obs, [0.0, 0.1, 0.5])
    assert pred.mean[0] == 10.0 and pred.mean[2] == 11.0
    assert pred.variance[0] == 0.0 and pred.variance[1] > 0.0
