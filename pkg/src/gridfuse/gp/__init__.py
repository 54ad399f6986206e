"""Multi-task Gaussian process engine: shared MLP mean, shared RBF kernel."""

from gridfuse.gp.kernel import KernelParams, cross_kernel, factorize, kernel_matrix, rbf_kernel
from gridfuse.gp.likelihood import (
    log_marginal_likelihood,
    lml_gradients,
    lml_value_and_gradients,
    total_log_marginal_likelihood,
)
from gridfuse.gp.meannet import MeanNet, mean_forward
from gridfuse.gp.predict import (
    PosteriorPrediction,
    confidence_interval,
    impute,
    posterior_predict,
    z_value,
)
from gridfuse.gp.prior import GpPrior, InputEncoding, load_prior, save_prior
from gridfuse.gp.training import TrainConfig, TrainResult, fit, train_prior, train_prior_with_history

__all__ = [
    "GpPrior",
    "InputEncoding",
    "KernelParams",
    "MeanNet",
    "PosteriorPrediction",
    "TrainConfig",
    "TrainResult",
    "confidence_interval",
    "cross_kernel",
    "factorize",
    "fit",
    "impute",
    "kernel_matrix",
    "lml_gradients",
    "lml_value_and_gradients",
    "load_prior",
    "log_marginal_likelihood",
    "mean_forward",
    "posterior_predict",
    "rbf_kernel",
    "save_prior",
    "total_log_marginal_likelihood",
    "train_prior",
    "train_prior_with_history",
    "z_value",
]
