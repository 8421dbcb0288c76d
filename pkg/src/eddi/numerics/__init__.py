"""Self-contained numeric kernel: autodiff, MLP layers, Adam, distributions."""

from .autodiff import Tensor, as_tensor, backward, concat, grad
from .distributions import (
    Bernoulli,
    DiagonalGaussian,
    bernoulli_logpmf,
    bernoulli_logpmf_t,
    diag_gaussian_kl,
    gaussian_entropy,
    gaussian_kl,
    gaussian_logpdf,
    gaussian_logpdf_t,
    gaussian_sample,
    log_density,
    reparameterize,
    standard_normal_logpdf_t,
)
from .nn import (
    Layer,
    MlpParams,
    Params,
    activation,
    freeze,
    glorot_uniform,
    init_mlp,
    lift,
    mlp_apply,
    mlp_forward,
    param_count,
    stack_layers,
)
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "Bernoulli",
    "DiagonalGaussian",
    "Layer",
    "MlpParams",
    "Params",
    "Tensor",
    "activation",
    "adam_step",
    "as_tensor",
    "backward",
    "bernoulli_logpmf",
    "bernoulli_logpmf_t",
    "concat",
    "diag_gaussian_kl",
    "freeze",
    "gaussian_entropy",
    "gaussian_kl",
    "gaussian_logpdf",
    "gaussian_logpdf_t",
    "gaussian_sample",
    "glorot_uniform",
    "grad",
    "init_mlp",
    "lift",
    "log_density",
    "mlp_apply",
    "mlp_forward",
    "param_count",
    "reparameterize",
    "stack_layers",
    "standard_normal_logpdf_t",
]
