"""Set encoders: map any subset of observed variables to a latent Gaussian.

Four variants share one contract.  Given observations x_O of a D-variable
record, produce q(z | x_O) = N(mean, diag(variance)) with mean, variance in
R^H:

* ``zi``   — zero imputing.  Unobserved entries are set to 0 and the dense
  vector feeds an ordinary MLP.
* ``zim``  — zero imputing plus a 0/1 observedness mask concatenated to the
  input (width 2D).
* ``pn``   — PointNet style.  Each observed variable d contributes
  s_d = [e_d, x_d] in R^{M+1} (e_d a learned embedding row), mapped through
  a per-variable feature layer h to R^K and summed over d.  With n
  recurrent steps, the aggregated code c_(t-1) is appended to every s_d
  and a fresh feature layer h_(t) is applied, so step t has input width
  (M+1) + (t-1)K.
* ``pnp``  — like ``pn`` but the per-variable input is the product
  s_d = e_d * x_d in R^M, the feature layer is affine, and the
  nonlinearity is applied after summation.  Because everything before the
  nonlinearity is linear in the per-variable terms, the whole aggregation
  collapses to dense matrix products, which is why this variant stays fast
  at image scale.

Aggregation is summation over a dense (batch, D, K) layout with a 0/1 mask,
so the result depends only on which variables are observed, never on the
order they were presented: permutation invariance is bit-exact.  The empty
observation set aggregates to the zero code, making q(z | nothing) a
learned but observation-independent Gaussian.

The final network maps the code to 2H outputs; the first H are the mean
and the second H are log-variances, clamped to [-10, 10] before
exponentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .numerics import DiagonalGaussian, Params, Tensor, activation, concat, freeze, glorot_uniform
from .numerics.nn import TensorParams, init_mlp, mlp_apply

VARIANTS = ("zi", "zim", "pn", "pnp")

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0


@dataclass
class ObservationSet:
    """Observed (index, value) pairs out of D variables.

    Values must already be in model units: continuous variables scaled to
    [0, 1], binary variables in {0, 1}.  Indices are unique by construction
    (dict keys) and checked against [0, D).
    """

    n_variables: int
    entries: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_variables <= 0:
            raise ShapeError(f"need a positive variable count, got {self.n_variables}")
        clean: dict[int, float] = {}
        for idx, value in self.entries.items():
            i = int(idx)
            if not 0 <= i < self.n_variables:
                raise ShapeError(
                    f"observation index {i} out of range for {self.n_variables} variables"
                )
            v = float(value)
            if not math.isfinite(v):
                raise NumericError(f"non-finite observed value at index {i}")
            clean[i] = v
        self.entries = clean

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def observed(self) -> tuple[int, ...]:
        return tuple(sorted(self.entries))

    @property
    def missing(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_variables) if i not in self.entries)

    def with_entry(self, index: int, value: float) -> "ObservationSet":
        merged = dict(self.entries)
        merged[index] = value
        return ObservationSet(self.n_variables, merged)

    def to_dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(values, mask) rows with unobserved entries zeroed."""
        x = np.zeros(self.n_variables)
        mask = np.zeros(self.n_variables)
        for i, v in self.entries.items():
            x[i] = v
            mask[i] = 1.0
        return x, mask

    @staticmethod
    def from_dense(x: np.ndarray, mask: np.ndarray) -> "ObservationSet":
        x = np.asarray(x, dtype=np.float64)
        mask = np.asarray(mask)
        if x.shape != mask.shape or x.ndim != 1:
            raise ShapeError(f"values/mask must be equal-length vectors, got {x.shape}/{mask.shape}")
        entries = {int(i): float(x[i]) for i in np.flatnonzero(mask)}
        return ObservationSet(x.shape[0], entries)


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of one encoder variant.

    ``post_hidden`` are the hidden widths of the network applied after
    aggregation (its input width is D for zi, 2D for zim, K for pn/pnp).
    ``steps`` is the recurrent step count n; zi/zim ignore it.  ``agg_act``
    is the nonlinearity pnp applies to the aggregated sum.
    """

    variant: str
    latent_dim: int
    embed_dim: int = 10
    feature_dim: int = 20
    steps: int = 1
    post_hidden: tuple[int, ...] = ()
    hidden_act: str = "relu"
    feature_act: str = "relu"
    agg_act: str = "sigmoid"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown encoder variant {self.variant!r}; expected one of {VARIANTS}")
        if self.latent_dim <= 0 or self.embed_dim <= 0 or self.feature_dim <= 0:
            raise ConfigError("latent_dim, embed_dim, feature_dim must be positive")
        if self.steps < 1:
            raise ConfigError(f"recurrent steps must be >= 1, got {self.steps}")

    def post_input_dim(self, n_variables: int) -> int:
        if self.variant == "zi":
            return n_variables
        if self.variant == "zim":
            return 2 * n_variables
        return self.feature_dim

    def feature_input_dim(self, step: int) -> int:
        base = self.embed_dim + 1 if self.variant == "pn" else self.embed_dim
        return base + (step - 1) * self.feature_dim

    def post_sizes(self, n_variables: int) -> list[int]:
        return [self.post_input_dim(n_variables), *self.post_hidden, 2 * self.latent_dim]


def init_encoder_params(
    rng: np.random.Generator, config: EncoderConfig, n_variables: int
) -> Params:
    """Fresh encoder parameters under the ``enc.`` prefix.

    Allocation order is fixed (embeddings, feature layers in step order,
    post network) so a given seed always yields the same parameters.
    """
    params: Params = {}
    if config.variant in ("pn", "pnp"):
        params["enc.embed"] = glorot_uniform(rng, n_variables, config.embed_dim)
        for t in range(1, config.steps + 1):
            params.update(
                init_mlp(rng, [config.feature_input_dim(t), config.feature_dim], f"enc.h{t}")
            )
    params.update(init_mlp(rng, config.post_sizes(n_variables), "enc.post"))
    return params


def encoder_param_shapes(config: EncoderConfig, n_variables: int) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every encoder parameter, without allocating any."""
    shapes: dict[str, tuple[int, ...]] = {}
    if config.variant in ("pn", "pnp"):
        shapes["enc.embed"] = (n_variables, config.embed_dim)
        for t in range(1, config.steps + 1):
            shapes[f"enc.h{t}.w0"] = (config.feature_input_dim(t), config.feature_dim)
            shapes[f"enc.h{t}.b0"] = (config.feature_dim,)
    sizes = config.post_sizes(n_variables)
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        shapes[f"enc.post.w{i}"] = (a, b)
        shapes[f"enc.post.b{i}"] = (b,)
    return shapes


def encoder_param_count(config: EncoderConfig, n_variables: int) -> int:
    """Exact trainable-parameter count for checkpoint validation."""
    return sum(
        int(np.prod(s)) for s in encoder_param_shapes(config, n_variables).values()
    )


def _per_variable_affine(params: TensorParams, prefix: str, s: Tensor) -> Tensor:
    """Apply one affine layer to every (batch, variable) row of s."""
    w = params[f"{prefix}.w0"]
    b = params[f"{prefix}.b0"]
    n_batch, n_vars, n_in = s.shape
    flat = s.reshape(n_batch * n_vars, n_in) @ w + b
    return flat.reshape(n_batch, n_vars, w.shape[1])


def _aggregate_pn(config: EncoderConfig, params: TensorParams, x: Tensor, mask: Tensor) -> Tensor:
    n_batch, n_vars = x.shape
    m, k = config.embed_dim, config.feature_dim
    feat_act = activation(config.feature_act)
    embed = params["enc.embed"].reshape(1, n_vars, m).broadcast_to((n_batch, n_vars, m))
    s = concat([embed, x.reshape(n_batch, n_vars, 1)], axis=2)
    mask3 = mask.reshape(n_batch, n_vars, 1)
    code = None
    for t in range(1, config.steps + 1):
        if t > 1:
            fed_back = code.reshape(n_batch, 1, k).broadcast_to((n_batch, n_vars, k))
            s = concat([s, fed_back], axis=2)
        h = feat_act(_per_variable_affine(params, f"enc.h{t}", s))
        code = (h * mask3).sum(axis=1)
    return code


def _aggregate_pnp(config: EncoderConfig, params: TensorParams, x: Tensor, mask: Tensor) -> Tensor:
    # Per-variable terms are linear, so sum_d h(s_d) collapses to dense
    # products: sum_d (e_d x_d) W = (x E) W, and the shared bias and any
    # fed-back code enter once per observed variable, hence the |O| factor.
    m = config.embed_dim
    agg_act = activation(config.agg_act)
    summed = x @ params["enc.embed"]  # (batch, M); unobserved x are zero
    count = mask.sum(axis=1, keepdims=True)  # |O| per row
    code = None
    history: list[Tensor] = []
    for t in range(1, config.steps + 1):
        w = params[f"enc.h{t}.w0"]
        b = params[f"enc.h{t}.b0"]
        if t == 1:
            pre = summed @ w + count * b
        else:
            fed_back = concat(history, axis=1)
            pre = summed @ w[:m, :] + count * (fed_back @ w[m:, :] + b)
        code = agg_act(pre)
        history.append(code)
    return code


def encode_batch(
    config: EncoderConfig, params: TensorParams, x: Tensor, mask: Tensor
) -> tuple[Tensor, Tensor]:
    """Differentiable core: (batch, D) masked values to (mean, logvar) pair.

    ``x`` must already have unobserved entries zeroed; ``mask`` is 0/1.
    Both training and inference go through this one code path.
    """
    n_vars = x.shape[1]
    if "enc.post.w0" in params:
        expected = config.post_input_dim(n_vars)
        got = params["enc.post.w0"].shape[0]
        if expected != got:
            raise ShapeError(
                f"{config.variant} encoder expects post-net input {got}, data implies {expected}"
            )
    if config.variant == "zi":
        code = x
    elif config.variant == "zim":
        code = concat([x, mask], axis=1)
    elif config.variant == "pn":
        code = _aggregate_pn(config, params, x, mask)
    else:
        code = _aggregate_pnp(config, params, x, mask)
    out = mlp_apply(params, "enc.post", code, hidden_act=config.hidden_act)
    h = config.latent_dim
    mean = out[:, :h]
    logvar = out[:, h:].clamp(LOGVAR_MIN, LOGVAR_MAX)
    return mean, logvar


def encode_arrays(
    config: EncoderConfig, params: Params, x: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """encode_batch on plain arrays, no gradient tracking."""
    mean, logvar = encode_batch(config, freeze(params), Tensor(x), Tensor(mask))
    return mean.value, logvar.value


def encode(config: EncoderConfig, params: Params, obs: ObservationSet) -> DiagonalGaussian:
    """Posterior q(z | x_O) for a single observation set."""
    x, mask = obs.to_dense()
    mean, logvar = encode_arrays(config, params, x[None, :], mask[None, :])
    return DiagonalGaussian(mean[0], np.exp(logvar[0]))


def zi_as_pnp(config: EncoderConfig, params: Params, n_variables: int) -> tuple[EncoderConfig, Params]:
    """Re-express a ZI encoder as a PNP encoder.

    The ZI network's first layer x W + b followed by its activation equals,
    on fully observed inputs, a PNP aggregation with embeddings E = W,
    identity feature layer, per-variable bias b/D, and the same activation
    after the sum.  The remaining ZI layers become the PNP post network.
    Matches the original on all-observed inputs up to rounding; unobserved
    inputs behave differently by design (that is the point of PNP).
    """
    if config.variant != "zi":
        raise ConfigError(f"construction starts from a zi encoder, got {config.variant!r}")
    if not config.post_hidden:
        raise ConfigError("construction needs at least one hidden layer to absorb")
    width = config.post_hidden[0]
    pnp_config = replace(
        config,
        variant="pnp",
        embed_dim=width,
        feature_dim=width,
        steps=1,
        post_hidden=config.post_hidden[1:],
        agg_act=config.hidden_act,
    )
    pnp_params: Params = {
        "enc.embed": params["enc.post.w0"].copy(),
        "enc.h1.w0": np.eye(width),
        "enc.h1.b0": params["enc.post.b0"] / n_variables,
    }
    i = 1
    while f"enc.post.w{i}" in params:
        pnp_params[f"enc.post.w{i - 1}"] = params[f"enc.post.w{i}"].copy()
        pnp_params[f"enc.post.b{i - 1}"] = params[f"enc.post.b{i}"].copy()
        i += 1
    return pnp_config, pnp_params
