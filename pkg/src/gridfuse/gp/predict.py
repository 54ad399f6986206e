"""GP posterior at query times and confidence intervals."""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from gridfuse.errors import InvalidArgument
from gridfuse.gp.kernel import cross_kernel, factorize
from gridfuse.gp.prior import GpPrior
from gridfuse.timeseries import TimeSeriesTask, standardize_task


def z_value(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise InvalidArgument(f"confidence level must be in (0, 1), got {level}")
    return NormalDist().inv_cdf(0.5 + level / 2.0)


@dataclass(frozen=True)
class PosteriorPrediction:
    query_times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    level: float = 0.95

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def ci_halfwidth(self) -> np.ndarray:
        return z_value(self.level) * self.std


def posterior_predict(
    prior: GpPrior,
    observed: TimeSeriesTask,
    query_times,
    include_noise: bool = False,
    level: float = 0.95,
) -> PosteriorPrediction:
    """Posterior mean and marginal variance of ``observed``'s process at ``query_times``.

    Values are used as given; see :func:`impute` for the standardized pipeline.
    """
    q = np.asarray(query_times, dtype=float).reshape(-1)
    if q.size == 0:
        raise InvalidArgument("query_times must be nonempty")
    kp = prior.kernel
    mean_q = prior.mean_at(q, observed)
    var = np.full(q.size, kp.signal_var)
    if len(observed):
        xq = prior.kernel_inputs(q)
        xo = prior.kernel_inputs(observed.times)
        f = factorize(xo, kp)
        resid = observed.values - prior.mean_at(observed.times, observed)
        alpha = cho_solve((f.chol, True), resid, check_finite=False)
        ks = cross_kernel(xq, xo, kp)
        mean_q = mean_q + ks @ alpha
        v = solve_triangular(f.chol, ks.T, lower=True, check_finite=False)
        var = var - np.einsum("ij,ij->j", v, v)
    if include_noise:
        var = var + kp.noise_var
    return PosteriorPrediction(q, mean_q, np.maximum(var, 0.0), level)


def confidence_interval(pred: PosteriorPrediction, level: float = 0.95):
    """Two-sided ``(lower, upper)`` arrays at the given level."""
    half = z_value(level) * pred.std
    return pred.mean - half, pred.mean + half


def impute(
    prior: GpPrior,
    observed: TimeSeriesTask,
    query_times,
    include_noise: bool = False,
    level: float = 0.95,
    pass_through: bool = True,
) -> PosteriorPrediction:
    """Standardize ``observed``, predict, and map the result back to native units.

    Query instants that coincide with an observed sample return that sample's value
    (and zero variance) when ``pass_through`` is set.
    """
    q = np.asarray(query_times, dtype=float).reshape(-1)
    if len(observed) == 0:
        pred = posterior_predict(prior, observed, q, include_noise, level)
        return pred
    z_task, st = standardize_task(observed)
    pred = posterior_predict(prior, z_task, q, include_noise, level)
    mean = st.invert(pred.mean)
    var = pred.variance * st.std ** 2
    if pass_through:
        idx = np.searchsorted(observed.times, q)
        idx_c = np.minimum(idx, len(observed) - 1)
        hit = observed.times[idx_c] == q
        mean = np.where(hit, observed.values[idx_c], mean)
        var = np.where(hit, 0.0, var)
    return PosteriorPrediction(q, mean, var, level)
