"""Log densities, KL divergences, and reparameterised sampling.

Two flavours live here.  The ``*_t`` functions build autodiff graphs for
the training objective; they are elementwise so the caller can mask out
unobserved variables before summing.  The plain-array functions operate on
finished encoder outputs (numpy, no graph) and are what the acquisition
machinery uses.

Gaussians are diagonal and parameterised by (mean, logvar).  The KL
between two of them is the closed form

    KL(p1 || p2) = 1/2 sum_j [ lv2 - lv1 + (e^{lv1} + (m1 - m2)^2) e^{-lv2} - 1 ].

Bernoulli probabilities are clamped to [1e-7, 1 - 1e-7] before taking
logs so a saturated decoder cannot produce infinities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ShapeError
from .autodiff import Tensor

LOG_TWO_PI = float(np.log(2.0 * np.pi))
P_MIN = 1e-7
P_MAX = 1.0 - 1e-7


@dataclass
class DiagonalGaussian:
    """Independent Gaussian over H coordinates, stored as mean and variance."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape or self.mean.ndim != 1:
            raise ShapeError(
                f"mean and variance must be equal-length vectors, got "
                f"{self.mean.shape} / {self.variance.shape}"
            )
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.variance))):
            raise NumericError("non-finite Gaussian statistics")
        if np.any(self.variance <= 0.0):
            raise NumericError("Gaussian variance must be strictly positive")

    @property
    def logvar(self) -> np.ndarray:
        return np.log(self.variance)


@dataclass
class Bernoulli:
    """Independent Bernoulli over coordinates, stored as success probability."""

    prob: np.ndarray

    def __post_init__(self):
        self.prob = np.atleast_1d(np.asarray(self.prob, dtype=np.float64))
        if np.any(self.prob < 0.0) or np.any(self.prob > 1.0):
            raise NumericError("Bernoulli probability outside [0, 1]")


def gaussian_sample(dist: DiagonalGaussian, noise: np.ndarray) -> np.ndarray:
    """mean + sqrt(variance) * noise for caller-supplied standard-normal noise."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[-1] != dist.mean.shape[0]:
        raise ShapeError(
            f"noise length {noise.shape[-1]} does not match dimension {dist.mean.shape[0]}"
        )
    return dist.mean + np.sqrt(dist.variance) * noise


def gaussian_kl(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    """KL(q || p) between diagonal Gaussians, in nats."""
    if q.mean.shape != p.mean.shape:
        raise ShapeError(f"dimension mismatch: {q.mean.shape} vs {p.mean.shape}")
    d = q.mean - p.mean
    terms = q.variance / p.variance + d * d / p.variance - 1.0 + np.log(p.variance / q.variance)
    return float(0.5 * terms.sum())


def log_density(value: np.ndarray, likelihood: DiagonalGaussian | Bernoulli) -> float:
    """Exact log pdf/pmf of ``value`` under a Gaussian or Bernoulli likelihood."""
    value = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if isinstance(likelihood, DiagonalGaussian):
        if value.shape != likelihood.mean.shape:
            raise ShapeError(f"value shape {value.shape} vs {likelihood.mean.shape}")
        return float(gaussian_logpdf(value, likelihood.mean, likelihood.logvar).sum())
    if isinstance(likelihood, Bernoulli):
        if value.shape != likelihood.prob.shape:
            raise ShapeError(f"value shape {value.shape} vs {likelihood.prob.shape}")
        return float(bernoulli_logpmf(value, likelihood.prob).sum())
    raise ShapeError(f"unsupported likelihood type {type(likelihood).__name__}")


# -- graph-building (training) ------------------------------------------------

def gaussian_logpdf_t(x: Tensor, mean: Tensor, logvar: Tensor) -> Tensor:
    """Elementwise log N(x; mean, exp(logvar))."""
    diff = x - mean
    return (logvar + LOG_TWO_PI + diff * diff / logvar.exp()) * -0.5


def bernoulli_logpmf_t(x: Tensor, p: Tensor) -> Tensor:
    """Elementwise log Bernoulli(x; p) with p clamped away from {0, 1}."""
    pc = p.clamp(P_MIN, P_MAX)
    return x * pc.log() + (1.0 - x) * (1.0 - pc).log()


def standard_normal_logpdf_t(z: Tensor) -> Tensor:
    """Elementwise log N(z; 0, 1)."""
    return (z * z + LOG_TWO_PI) * -0.5


def reparameterize(mean: Tensor, logvar: Tensor, noise: np.ndarray) -> Tensor:
    """z = mean + exp(logvar / 2) * noise, differentiable in mean and logvar."""
    return mean + (logvar * 0.5).exp() * Tensor(noise)


# -- plain arrays (inference / acquisition) -----------------------------------

def gaussian_logpdf(x: np.ndarray, mean: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    diff = x - mean
    return -0.5 * (logvar + LOG_TWO_PI + diff * diff / np.exp(logvar))

def bernoulli_logpmf(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    pc = np.clip(p, P_MIN, P_MAX)
    return x * np.log(pc) + (1.0 - x) * np.log1p(-pc)


def diag_gaussian_kl(
    mean1: np.ndarray, logvar1: np.ndarray, mean2: np.ndarray, logvar2: np.ndarray
) -> np.ndarray:
    """KL between diagonal Gaussians, summed over the last axis."""
    d = mean1 - mean2
    # exp(logvar1 - logvar2) rather than a product of two exps so that
    # identical arguments give exactly zero.
    terms = logvar2 - logvar1 + np.exp(logvar1 - logvar2) + d * d * np.exp(-logvar2) - 1.0
    return 0.5 * terms.sum(axis=-1)


def gaussian_entropy(logvar: np.ndarray) -> np.ndarray:
    """Entropy of a diagonal Gaussian, summed over the last axis."""
    return 0.5 * (logvar + 1.0 + LOG_TWO_PI).sum(axis=-1)
