"""Generative model p(z) p(x|z), its partial variational bound, and training.

The latent prior is a standard normal of dimension H.  The decoder is an
MLP from z to per-variable likelihood parameters under a factorised
observation model

    p(x | z) = prod_i p_i(x_i | z),

Gaussian for continuous variables and Bernoulli for binary ones, so the
log-likelihood of any variable subset is the sum of that subset's terms.

Decoder output layout is block-wise: columns [0, C) are the means of the C
continuous variables in index order, [C, 2C) their log-variances, and
[2C, 2C + B) the logits of the B binary variables in index order.
Variances are floored (default 1e-4) because data lives in [0, 1] and an
unfloored Gaussian can collapse onto easy pixels.

Training maximises the single-sample estimate of

    E_{z ~ q(z|x_O)} [ log p(x_O|z) + log p(z) - log q(z|x_O) ]

over batches with simulated missingness: per iteration a rate r ~ U(0, 0.7)
is drawn and every natively observed cell is dropped independently with
probability r.  Dropped cells never reach the loss; the masked input is
assembled with a select-by-mask, not by multiplying values through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .encoder import EncoderConfig, ObservationSet, encode_arrays, encode_batch, init_encoder_params
from .errors import ConfigError, DataError, NumericError, ShapeError
from .numerics import (
    AdamState,
    Params,
    Tensor,
    adam_step,
    bernoulli_logpmf,
    bernoulli_logpmf_t,
    gaussian_logpdf,
    gaussian_logpdf_t,
    grad,
    init_mlp,
    lift,
    mlp_apply,
    reparameterize,
    standard_normal_logpdf_t,
)
from .numerics.nn import TensorParams, freeze
from .rng import TAG_INIT, TAG_TRAIN, SeedKey

KINDS = ("continuous", "binary")
DEFAULT_VAR_FLOOR = 1e-4
LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "continuous"
    lo: float = 0.0
    hi: float = 1.0
    group: int | None = None
    target: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "continuous" and not self.lo < self.hi:
            raise ConfigError(f"variable {self.name!r}: needs lo < hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class VariableSchema:
    """Names, kinds, scaling ranges, group ids, and target flags for all variables.

    Group ids drive cost-grouped selection: revealing any variable of a
    group reveals the whole group.  A variable without an explicit group is
    its own singleton group.
    """

    variables: tuple[Variable, ...]

    def __post_init__(self):
        if not self.variables:
            raise ConfigError("schema needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ConfigError("variable names must be unique")
        if not any(v.target for v in self.variables):
            raise ConfigError("schema needs at least one target variable")

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def target_indices(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if v.target)

    @property
    def continuous_indices(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if v.kind == "continuous")

    @property
    def binary_indices(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.variables) if v.kind == "binary")

    def groups(self) -> dict[int, tuple[int, ...]]:
        """Group id -> member variable indices; ungrouped variables get id -(i+1)."""
        out: dict[int, list[int]] = {}
        for i, v in enumerate(self.variables):
            gid = v.group if v.group is not None else -(i + 1)
            out.setdefault(gid, []).append(i)
        return {g: tuple(m) for g, m in out.items()}

    def decoder_output_dim(self) -> int:
        return 2 * len(self.continuous_indices) + len(self.binary_indices)

    def scale_value(self, index: int, raw: float) -> float:
        """Raw units -> model units ([0,1] for continuous, {0,1} for binary)."""
        v = self.variables[index]
        if not math.isfinite(raw):
            raise DataError(f"non-finite value for variable {v.name!r}")
        if v.kind == "binary":
            if raw not in (0.0, 1.0):
                raise DataError(f"variable {v.name!r} is binary; got {raw}")
            return float(raw)
        return (float(raw) - v.lo) / (v.hi - v.lo)

    def unscale_value(self, index: int, scaled: float) -> float:
        v = self.variables[index]
        if v.kind == "binary":
            return float(scaled)
        return v.lo + float(scaled) * (v.hi - v.lo)

    def to_json_dict(self) -> list[dict]:
        return [
            {
                "name": v.name,
                "kind": v.kind,
                "lo": v.lo,
                "hi": v.hi,
                "group": v.group,
                "target": v.target,
            }
            for v in self.variables
        ]

    @staticmethod
    def from_json_dict(items: Sequence[dict]) -> "VariableSchema":
        return VariableSchema(
            tuple(
                Variable(
                    name=d["name"],
                    kind=d.get("kind", "continuous"),
                    lo=float(d.get("lo", 0.0)),
                    hi=float(d.get("hi", 1.0)),
                    group=d.get("group"),
                    target=bool(d.get("target", False)),
                )
                for d in items
            )
        )


@dataclass(frozen=True)
class TrainConfig:
    iterations: int
    batch_size: int = 100
    learning_rate: float = 0.001
    missing_low: float = 0.0
    missing_high: float = 0.7
    seed: int = 0
    var_floor: float = DEFAULT_VAR_FLOOR
    kl_warmup: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigError("iterations must be >= 0 and batch size >= 1")
        if not 0.0 <= self.missing_low <= self.missing_high <= 1.0:
            raise ConfigError("missing-rate range must satisfy 0 <= low <= high <= 1")
        if self.var_floor <= 0.0:
            raise ConfigError("variance floor must be positive")
        if self.kl_warmup < 0:
            raise ConfigError("kl_warmup must be >= 0 iterations")


@dataclass
class PartialVae:
    schema: VariableSchema
    encoder_config: EncoderConfig
    decoder_hidden: tuple[int, ...]
    params: Params
    var_floor: float = DEFAULT_VAR_FLOOR

    @property
    def latent_dim(self) -> int:
        return self.encoder_config.latent_dim

    def decoder_sizes(self) -> list[int]:
        return [self.latent_dim, *self.decoder_hidden, self.schema.decoder_output_dim()]

    @staticmethod
    def build(
        schema: VariableSchema,
        encoder_config: EncoderConfig,
        decoder_hidden: tuple[int, ...],
        seed: int = 0,
    ) -> "PartialVae":
        """Freshly initialised model; allocation order is encoder then decoder."""
        rng = SeedKey(seed, TAG_INIT).generator()
        params = init_encoder_params(rng, encoder_config, schema.n_variables)
        model = PartialVae(schema, encoder_config, decoder_hidden, params)
        params.update(init_mlp(rng, model.decoder_sizes(), "dec"))
        return model


# -- presets ------------------------------------------------------------------

_STEPS = {"zi": 1, "zim": 1, "pn": 5, "pnp": 1}


def tabular_preset(variant: str, latent_dim: int = 10) -> tuple[EncoderConfig, tuple[int, ...]]:
    """Default tabular architecture: encoder stack to 2H via 100-50, decoder H-50-100-D."""
    config = EncoderConfig(
        variant,
        latent_dim=latent_dim,
        embed_dim=10,
        feature_dim=20,
        steps=_STEPS[variant],
        post_hidden=(100, 50),
    )
    return config, (50, 100)


def image_preset(variant: str) -> tuple[EncoderConfig, tuple[int, ...]]:
    """Default 28x28 image architecture: H=20, decoder 20-200-500-D."""
    config = EncoderConfig(
        variant,
        latent_dim=20,
        embed_dim=20,
        feature_dim=500,
        steps=_STEPS[variant],
        post_hidden=(500, 500, 200),
    )
    return config, (200, 500)


# -- decoder ------------------------------------------------------------------

def decode_t(
    model: PartialVae, params: TensorParams, z: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """z (n, H) -> (continuous means, floored variances, binary probabilities)."""
    out = mlp_apply(params, "dec", z, hidden_act="relu")
    c = len(model.schema.continuous_indices)
    cont_mean = out[:, :c]
    cont_var = out[:, c : 2 * c].clamp(LOGVAR_MIN, LOGVAR_MAX).exp().clamp(lo=model.var_floor)
    bin_p = out[:, 2 * c :].sigmoid()
    return cont_mean, cont_var, bin_p


def decode_arrays(model: PartialVae, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """decode_t on plain arrays, no gradient tracking."""
    cm, cv, bp = decode_t(model, freeze(model.params), Tensor(z))
    return cm.value, cv.value, bp.value


def decoder_loglik(model: PartialVae, z: np.ndarray, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """log p(x_O | z) for each latent row, summing observed variables only.

    x and mask are single dense rows shared across all z samples.
    """
    cont = np.array(model.schema.continuous_indices, dtype=int)
    binary = np.array(model.schema.binary_indices, dtype=int)
    cm, cv, bp = decode_arrays(model, z)
    total = np.zeros(z.shape[0])
    if cont.size:
        ll = gaussian_logpdf(x[cont], cm, np.log(cv))
        total += (ll * mask[cont]).sum(axis=1)
    if binary.size:
        ll = bernoulli_logpmf(x[binary], bp)
        total += (ll * mask[binary]).sum(axis=1)
    return total


# -- the partial variational bound -------------------------------------------

def _elbo_graph(
    model: PartialVae,
    params: TensorParams,
    x: np.ndarray,
    mask: np.ndarray,
    noise: np.ndarray,
    kl_weight: float = 1.0,
) -> Tensor:
    """Per-row single-sample bound estimates as a (batch,) tensor.

    x must contain zeros at unobserved positions (select-by-mask upstream).
    ``kl_weight`` scales the divergence term; 1 gives the exact bound,
    smaller values give the annealed objective used early in warmup.
    """
    cont = np.array(model.schema.continuous_indices, dtype=int)
    binary = np.array(model.schema.binary_indices, dtype=int)
    mean_q, logvar_q = encode_batch(model.encoder_config, params, Tensor(x), Tensor(mask))
    z = reparameterize(mean_q, logvar_q, noise)
    cont_mean, cont_var, bin_p = decode_t(model, params, z)
    parts = []
    if cont.size:
        ll = gaussian_logpdf_t(Tensor(x[:, cont]), cont_mean, cont_var.log())
        parts.append((ll * Tensor(mask[:, cont])).sum(axis=1))
    if binary.size:
        ll = bernoulli_logpmf_t(Tensor(x[:, binary]), bin_p)
        parts.append((ll * Tensor(mask[:, binary])).sum(axis=1))
    recon = parts[0] if len(parts) == 1 else parts[0] + parts[1]
    log_prior = standard_normal_logpdf_t(z).sum(axis=1)
    log_q = gaussian_logpdf_t(z, mean_q, logvar_q).sum(axis=1)
    if kl_weight != 1.0:
        return recon + (log_prior - log_q) * kl_weight
    return recon + log_prior - log_q


def elbo_samples(model: PartialVae, obs: ObservationSet, noise: np.ndarray) -> np.ndarray:
    """One bound estimate per noise row (n, H) for a fixed observation set."""
    x, mask = obs.to_dense()
    n = noise.shape[0]
    xs = np.broadcast_to(x, (n, x.shape[0])).copy()
    ms = np.broadcast_to(mask, (n, mask.shape[0])).copy()
    return _elbo_graph(model, freeze(model.params), xs, ms, noise).value


def partial_elbo(model: PartialVae, obs: ObservationSet, noise: np.ndarray) -> float:
    """Single-sample estimate of E_q[log p(x_O|z) + log p(z) - log q(z|x_O)]."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (model.latent_dim,):
        raise ShapeError(f"noise must have shape ({model.latent_dim},), got {noise.shape}")
    return float(elbo_samples(model, obs, noise[None, :])[0])


# -- training -----------------------------------------------------------------

def train(
    model: PartialVae,
    rows: np.ndarray,
    cfg: TrainConfig,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[PartialVae, list[float]]:
    """Maximise the mean partial bound over batches with simulated missingness.

    ``rows`` is (N, D) in model units with NaN marking natively missing
    cells; those are never treated as observed.  Returns a new model and
    the per-iteration mean-bound trace.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.schema.n_variables:
        raise ShapeError(
            f"rows must be (N, {model.schema.n_variables}), got {rows.shape}"
        )
    if rows.shape[0] == 0:
        raise ConfigError("training needs at least one row")
    native = ~np.isnan(rows)
    rng = SeedKey(cfg.seed, TAG_TRAIN).generator()
    params = dict(model.params)
    state = AdamState(lr=cfg.learning_rate)
    trained = replace(model, params=params, var_floor=cfg.var_floor)
    trace: list[float] = []
    for it in range(cfg.iterations):
        idx = rng.integers(0, rows.shape[0], size=cfg.batch_size)
        rate = rng.uniform(cfg.missing_low, cfg.missing_high)
        keep = rng.uniform(size=(cfg.batch_size, rows.shape[1])) >= rate
        mask = (native[idx] & keep).astype(np.float64)
        x = np.where(mask > 0, rows[idx], 0.0)
        noise = rng.standard_normal((cfg.batch_size, model.latent_dim))
        lifted = lift(params)
        beta = min(1.0, (it + 1) / cfg.kl_warmup) if cfg.kl_warmup else 1.0
        bound = _elbo_graph(trained, lifted, x, mask, noise, kl_weight=beta)
        mean_bound = bound.sum() * (1.0 / cfg.batch_size)
        value = mean_bound.item()
        if not math.isfinite(value):
            raise NumericError(f"non-finite training objective at iteration {it}")
        names = sorted(params)
        gs = grad(-mean_bound, [lifted[n] for n in names])
        params, state = adam_step(params, dict(zip(names, gs)), state)
        trained = replace(trained, params=params)
        trace.append(value)
        if progress is not None:
            progress(it, value)
    return trained, trace


def save_loss_trace(path, trace: Sequence[float]) -> None:
    with open(path, "w") as f:
        f.write("iteration,elbo\n")
        for i, v in enumerate(trace):
            f.write(f"{i},{v!r}\n")


# -- prediction ---------------------------------------------------------------

def latent_samples(
    model: PartialVae, obs: ObservationSet, n: int, rng: np.random.Generator
) -> np.ndarray:
    """n draws from q(z | x_O)."""
    x, mask = obs.to_dense()
    mean, logvar = encode_arrays(model.encoder_config, model.params, x[None, :], mask[None, :])
    eps = rng.standard_normal((n, model.latent_dim))
    return mean[0] + np.exp(0.5 * logvar[0]) * eps


def sample_conditional(
    model: PartialVae,
    obs: ObservationSet,
    query: Sequence[int],
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """n joint draws of the query variables from p̂(x_query | x_O).

    Columns follow the order of ``query``.  Sampling is hierarchical:
    z ~ q(z|x_O) first, then each variable from its decoder likelihood.
    """
    query = list(query)
    for v in query:
        if not 0 <= v < model.schema.n_variables:
            raise ShapeError(f"query index {v} out of range")
    overlap = set(query) & set(obs.entries)
    if overlap:
        raise ConfigError(f"query indices {sorted(overlap)} are already observed")
    if len(set(query)) != len(query):
        raise ConfigError("duplicate query indices")
    out = np.zeros((n, len(query)))
    if n == 0:
        return out
    z = latent_samples(model, obs, n, rng)
    cm, cv, bp = decode_arrays(model, z)
    cont_pos = {v: j for j, v in enumerate(model.schema.continuous_indices)}
    bin_pos = {v: j for j, v in enumerate(model.schema.binary_indices)}
    for col, v in enumerate(query):
        if v in cont_pos:
            j = cont_pos[v]
            out[:, col] = cm[:, j] + np.sqrt(cv[:, j]) * rng.standard_normal(n)
        else:
            j = bin_pos[v]
            out[:, col] = (rng.uniform(size=n) < bp[:, j]).astype(np.float64)
    return out


def impute(
    model: PartialVae,
    obs: ObservationSet,
    rng: np.random.Generator,
    n_samples: int = 50,
) -> dict[int, tuple[float, float]]:
    """Predictive mean and variance for every unobserved variable.

    Monte Carlo over n latent samples; continuous variance combines
    within-sample decoder variance and across-sample mean spread, binary
    variance is p(1-p) of the averaged probability.
    """
    missing = obs.missing
    if not missing:
        return {}
    z = latent_samples(model, obs, n_samples, rng)
    cm, cv, bp = decode_arrays(model, z)
    cont_pos = {v: j for j, v in enumerate(model.schema.continuous_indices)}
    bin_pos = {v: j for j, v in enumerate(model.schema.binary_indices)}
    out: dict[int, tuple[float, float]] = {}
    for v in missing:
        if v in cont_pos:
            j = cont_pos[v]
            mean = float(cm[:, j].mean())
            var = float(cv[:, j].mean() + (cm[:, j] ** 2).mean() - mean**2)
            out[v] = (mean, max(var, 0.0))
        else:
            j = bin_pos[v]
            p = float(bp[:, j].mean())
            out[v] = (p, p * (1.0 - p))
    return out


def predictive_log_likelihood(
    model: PartialVae,
    obs: ObservationSet,
    targets: dict[int, float],
    rng: np.random.Generator,
    n_samples: int = 50,
) -> float:
    """log (1/n) sum_s p(x_targets | z_s) with z_s ~ q(z | x_O), via log-sum-exp."""
    if not targets:
        raise ConfigError("predictive_log_likelihood needs at least one target value")
    z = latent_samples(model, obs, n_samples, rng)
    x = np.zeros(model.schema.n_variables)
    mask = np.zeros(model.schema.n_variables)
    for i in sorted(targets):
        x[i] = targets[i]
        mask[i] = 1.0
    per_sample = decoder_loglik(model, z, x, mask)
    return float(logsumexp(per_sample) - np.log(n_samples))
