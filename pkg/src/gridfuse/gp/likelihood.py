"""Per-task log marginal likelihood and its analytic gradient."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve

from gridfuse._core import rbf_lengthscale_contraction
from gridfuse.errors import InvalidArgument
from gridfuse.gp.kernel import factorize
from gridfuse.gp.prior import GpPrior
from gridfuse.timeseries import TimeSeriesTask

LOG_2PI = math.log(2.0 * math.pi)


def _residual(prior: GpPrior, task: TimeSeriesTask):
    if len(task) == 0:
        raise InvalidArgument(f"task {task.task_id} is empty")
    inputs = prior.mean_inputs(task.times, task)
    resid = task.values - prior.mean.forward(inputs)
    return inputs, resid


def log_marginal_likelihood(prior: GpPrior, task: TimeSeriesTask) -> float:
    _, r = _residual(prior, task)
    f = factorize(prior.kernel_inputs(task.times), prior.kernel)
    alpha = cho_solve((f.chol, True), r, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(f.chol)))
    return float(-0.5 * r @ alpha - 0.5 * logdet - 0.5 * r.size * LOG_2PI)


def total_log_marginal_likelihood(prior: GpPrior, tasks: Sequence[TimeSeriesTask]) -> float:
    return sum(log_marginal_likelihood(prior, t) for t in tasks)


def task_value_and_grad(prior: GpPrior, task: TimeSeriesTask) -> tuple[float, np.ndarray]:
    """LML of one task and its gradient in the layout of ``prior.flat()``."""
    inputs, r = _residual(prior, task)
    x = prior.kernel_inputs(task.times)
    kp = prior.kernel
    f = factorize(x, kp)
    n = r.size
    alpha = cho_solve((f.chol, True), r, check_finite=False)
    a_inv = cho_solve((f.chol, True), np.eye(n), check_finite=False)
    w = np.outer(alpha, alpha) - a_inv
    value = float(-0.5 * r @ alpha - np.sum(np.log(np.diag(f.chol))) - 0.5 * n * LOG_2PI)

    # d(K+s2 I)/dlog l = K .* D^2/l^2 ; /dlog sf2 = K ; /dlog s2 = s2 I
    g_log_l = 0.5 * rbf_lengthscale_contraction(x, w, kp.signal_var, kp.lengthscale)
    g_log_sf2 = 0.5 * float(np.sum(w * f.kernel))
    g_log_sn2 = 0.5 * kp.noise_var * float(np.trace(w))
    # dLML/dm = alpha
    g_mean = prior.mean.backward(inputs, alpha)
    return value, np.concatenate([g_mean, [g_log_l, g_log_sf2, g_log_sn2]])


def lml_gradients(prior: GpPrior, tasks: Sequence[TimeSeriesTask]) -> np.ndarray:
    """Gradient of the summed LML over ``tasks`` (layout of ``prior.flat()``)."""
    return lml_value_and_gradients(prior, tasks)[1]


def lml_value_and_gradients(prior: GpPrior, tasks: Sequence[TimeSeriesTask]):
    total = 0.0
    grad = np.zeros(prior.n_params)
    for task in tasks:
        v, g = task_value_and_grad(prior, task)
        total += v
        grad += g
    return total, grad
