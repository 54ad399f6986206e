"""Adam on the summed log marginal likelihood, stepping per task batch."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gridfuse.errors import InvalidArgument, TrainingDiverged
from gridfuse.gp.kernel import LOG_BOUND, KernelParams
from gridfuse.gp.likelihood import lml_value_and_gradients, total_log_marginal_likelihood
from gridfuse.gp.prior import HIDDEN_WIDTHS, GpPrior, InputEncoding
from gridfuse.timeseries import DAY_SECONDS, TimeSeriesTask, standardize_task

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    seed: int = 0
    encoding: InputEncoding = InputEncoding.TIME_ONLY
    hidden: tuple[int, int] = HIDDEN_WIDTHS
    standardize: bool = True
    horizon: float = DAY_SECONDS
    batch_size: int | None = 1  # tasks per Adam step; None = full batch
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainResult:
    prior: GpPrior
    history: list[float] = field(default_factory=list)

    @property
    def initial_lml(self) -> float:
        return self.history[0]

    @property
    def best_lml(self) -> float:
        return max(self.history)


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """One descent step on ``grad`` (pass the negated gradient to ascend)."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def fit(prior: GpPrior, tasks: Sequence[TimeSeriesTask], config: TrainConfig) -> TrainResult:
    """Maximize the summed LML of ``tasks`` starting from ``prior``.

    One epoch visits every task once in a seeded shuffled order, taking one
    Adam step per batch of ``config.batch_size`` tasks. Tasks are used as given
    (no standardization). The summed LML is recorded before training and after
    each epoch; the best of those iterates is returned, so training never
    lowers the objective.
    """
    tasks = [t for t in tasks if len(t)]
    if not tasks:
        raise InvalidArgument("training needs at least one nonempty task")
    batch = len(tasks) if config.batch_size is None else max(1, int(config.batch_size))
    rng = np.random.default_rng(config.seed)
    opt = Adam(prior.n_params, config.learning_rate, config.beta1, config.beta2, config.eps)
    params = prior.flat()
    k0 = prior.mean.n_params

    def summed(p):
        value = total_log_marginal_likelihood(prior.with_flat(p), tasks)
        if not math.isfinite(value):
            raise TrainingDiverged("non-finite summed LML")
        return value

    best_val = summed(params)
    best_params = params
    history = [best_val]
    for epoch in range(config.epochs):
        order = rng.permutation(len(tasks)) if batch < len(tasks) else np.arange(len(tasks))
        for start in range(0, len(tasks), batch):
            chunk = [tasks[i] for i in order[start:start + batch]]
            value, grad = lml_value_and_gradients(prior.with_flat(params), chunk)
            if not math.isfinite(value) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"non-finite LML or gradient in epoch {epoch}")
            params = opt.step(params, -grad)
            params[k0:] = np.clip(params[k0:], -LOG_BOUND, LOG_BOUND)
        value = summed(params)
        history.append(value)
        if value > best_val:
            best_val, best_params = value, params.copy()
        if epoch % 25 == 0:
            log.debug("epoch %d: summed LML %.4f", epoch, value)
    return TrainResult(prior.with_flat(best_params), history)


def train_prior(
    tasks: Sequence[TimeSeriesTask],
    config: TrainConfig | dict | None = None,
    bus_depth: dict | None = None,
    kernel: KernelParams | None = None,
) -> GpPrior:
    """Train a shared prior on ``tasks``; each task is standardized first by default."""
    return train_prior_with_history(tasks, config, bus_depth, kernel).prior


def train_prior_with_history(tasks, config=None, bus_depth=None, kernel=None) -> TrainResult:
    if config is None:
        config = TrainConfig()
    elif isinstance(config, dict):
        config = TrainConfig(**config)
    if config.epochs < 0 or not config.learning_rate > 0:
        raise InvalidArgument("epochs must be >= 0 and learning_rate > 0")
    tasks = [t for t in tasks if len(t)]
    if not tasks:
        raise InvalidArgument("training needs at least one nonempty task")
    if config.standardize:
        tasks = [standardize_task(t)[0] for t in tasks]
    prior = GpPrior.initial(config.seed, config.encoding, kernel, config.hidden,
                            config.horizon, bus_depth)
    return fit(prior, tasks, config)
