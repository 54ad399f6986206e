"""RBF kernel, kernel matrices and jittered Cholesky factorization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from gridfuse._core import rbf_matrix
from gridfuse.errors import InvalidArgument, NumericalFailure

LOG_BOUND = 20.0
JITTER_START = 1e-6
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class KernelParams:
    """Log-parameterized RBF hyperparameters shared by every task.

    ``lengthscale`` is in the model's input units (normalized time).
    """

    log_lengthscale: float = math.log(0.1)
    log_signal_var: float = 0.0
    log_noise_var: float = math.log(0.01)

    def __post_init__(self):
        for name in ("log_lengthscale", "log_signal_var"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidArgument(f"{name} must be finite, got {v}")
        # -inf is allowed here: it encodes an exactly noiseless model.
        if math.isnan(self.log_noise_var) or self.log_noise_var == math.inf:
            raise InvalidArgument(f"log_noise_var must be finite or -inf, got {self.log_noise_var}")

    @classmethod
    def from_natural(cls, lengthscale: float, signal_var: float, noise_var: float) -> "KernelParams":
        """Build from positive values; a zero noise variance maps to exactly zero noise."""
        if lengthscale <= 0 or signal_var <= 0 or noise_var < 0:
            raise InvalidArgument("lengthscale and signal_var must be > 0, noise_var >= 0")
        log_noise = math.log(noise_var) if noise_var > 0 else -math.inf
        return cls(math.log(lengthscale), math.log(signal_var), log_noise)

    @property
    def lengthscale(self) -> float:
        return math.exp(self.log_lengthscale)

    @property
    def signal_var(self) -> float:
        return math.exp(self.log_signal_var)

    @property
    def noise_var(self) -> float:
        return math.exp(self.log_noise_var)

    def as_array(self) -> np.ndarray:
        return np.array([self.log_lengthscale, self.log_signal_var, self.log_noise_var])

    @classmethod
    def from_array(cls, a) -> "KernelParams":
        a = np.clip(np.asarray(a, dtype=float), -LOG_BOUND, LOG_BOUND)
        return cls(float(a[0]), float(a[1]), float(a[2]))


def rbf_kernel(x: float, x2: float, params: KernelParams) -> float:
    d = (x - x2) / params.lengthscale
    return params.signal_var * math.exp(-0.5 * d * d)


def kernel_matrix(xs, params: KernelParams, jitter: float = 0.0) -> np.ndarray:
    """Symmetric ``K(xs, xs) + jitter*I`` (observation noise not included)."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    if xs.size == 0:
        raise InvalidArgument("kernel_matrix needs at least one input")
    if jitter < 0:
        raise InvalidArgument(f"jitter must be >= 0, got {jitter}")
    k = rbf_matrix(xs, xs, params.signal_var, params.lengthscale)
    if jitter:
        k[np.diag_indices_from(k)] += jitter
    return k


def cross_kernel(xq, xs, params: KernelParams) -> np.ndarray:
    return rbf_matrix(np.asarray(xq, dtype=float), np.asarray(xs, dtype=float),
                      params.signal_var, params.lengthscale)


@dataclass(frozen=True)
class Factor:
    """Lower Cholesky factor of ``K + noise*I + jitter*I`` plus the pieces that built it."""

    chol: np.ndarray
    kernel: np.ndarray
    jitter: float


def factorize(xs, params: KernelParams) -> Factor:
    """Cholesky of the noisy kernel matrix, escalating diagonal jitter on failure.

    The first attempt uses no jitter so exact cases stay exact; then
    1e-6, 1e-5, 1e-4 (relative to the signal variance).
    """
    k = kernel_matrix(xs, params)
    a = k.copy()
    a[np.diag_indices_from(a)] += params.noise_var
    scale = params.signal_var
    jitter = 0.0
    while True:
        try:
            if jitter:
                aj = a.copy()
                aj[np.diag_indices_from(aj)] += jitter
            else:
                aj = a
            chol = cholesky(aj, lower=True, check_finite=False)
            if np.all(np.isfinite(chol)) and np.all(np.diag(chol) > 0):
                return Factor(chol, k, jitter)
        except LinAlgError:
            pass
        jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * scale * (1 + 1e-9):
            raise NumericalFailure(
                f"Cholesky failed for {len(k)} points even with jitter {JITTER_MAX:g}*signal_var"
            )
