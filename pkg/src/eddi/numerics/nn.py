"""Plain MLP building blocks on top of the autodiff Tensor.

Two views of the same network coexist.  :class:`MlpParams` is the
structured form, a chained list of (weight, bias, activation) layers, and
:func:`mlp_forward` runs it on a numpy array.  The flat form is a
``dict[str, np.ndarray]`` with dotted names (``"enc.post.w0"``), which is
what the optimiser and the checkpoint format consume; :func:`mlp_apply`
runs that form inside an autodiff graph.  Both call the same layer loop,
so the two views cannot drift apart numerically.

Weights use Glorot/Xavier uniform initialisation,

    W_ij ~ U(-a, a),   a = sqrt(6 / (fan_in + fan_out)),

biases start at zero.  Layer ``i`` of a stack named ``p`` is the pair
``p.w{i}`` (shape ``(n_in, n_out)``) and ``p.b{i}`` (shape ``(n_out,)``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import ConfigError, ShapeError
from .autodiff import Tensor

Params = dict[str, np.ndarray]
TensorParams = Mapping[str, Tensor]

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": lambda t: t.relu(),
    "sigmoid": lambda t: t.sigmoid(),
    "identity": lambda t: t,
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")


@dataclass
class Layer:
    weight: np.ndarray  # (n_in, n_out)
    bias: np.ndarray  # (n_out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError(
                f"layer expects 2-D weight and 1-D bias, got {self.weight.shape} / {self.bias.shape}"
            )
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} does not match weight columns {self.weight.shape[1]}"
            )
        activation(self.activation)


@dataclass
class MlpParams:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("mlp needs at least one layer")
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ShapeError(
                    f"layer widths do not chain: {a.weight.shape} then {b.weight.shape}"
                )


def _apply_layers(layers: Sequence[tuple[Tensor, Tensor, str]], x: Tensor) -> Tensor:
    for w, b, act in layers:
        x = activation(act)(x @ w + b)
    return x


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Run a structured MLP on a vector or a (batch, n_in) matrix."""
    x = np.asarray(x, dtype=np.float64)
    vector = x.ndim == 1
    t = Tensor(x.reshape(1, -1) if vector else x)
    layers = [(Tensor(l.weight), Tensor(l.bias), l.activation) for l in params.layers]
    out = _apply_layers(layers, t).value
    return out[0] if vector else out


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_mlp(rng: np.random.Generator, sizes: list[int], prefix: str) -> Params:
    """Initialise a flat affine stack ``sizes[0] -> ... -> sizes[-1]``."""
    if len(sizes) < 2:
        raise ConfigError(f"mlp needs at least input and output sizes, got {sizes}")
    params: Params = {}
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}.w{i}"] = glorot_uniform(rng, n_in, n_out)
        params[f"{prefix}.b{i}"] = np.zeros(n_out)
    return params


def stack_layers(
    params: TensorParams, prefix: str, hidden_act: str, out_act: str
) -> list[tuple[Tensor, Tensor, str]]:
    """Collect the layer triples stored under ``prefix`` in a flat parameter map."""
    layers = []
    i = 0
    while f"{prefix}.w{i}" in params:
        layers.append((params[f"{prefix}.w{i}"], params[f"{prefix}.b{i}"], hidden_act))
        i += 1
    if not layers:
        raise ConfigError(f"no layers found under parameter prefix {prefix!r}")
    w, b, _ = layers[-1]
    layers[-1] = (w, b, out_act)
    return layers


def mlp_apply(
    params: TensorParams,
    prefix: str,
    x: Tensor,
    hidden_act: str = "relu",
    out_act: str = "identity",
) -> Tensor:
    """Run ``x`` (batch, n_in) through the affine stack stored under ``prefix``."""
    return _apply_layers(stack_layers(params, prefix, hidden_act, out_act), x)


def lift(params: Params) -> dict[str, Tensor]:
    """Wrap every array as a trainable leaf (for computing gradients)."""
    return {k: Tensor.param(v) for k, v in params.items()}


def freeze(params: Params) -> dict[str, Tensor]:
    """Wrap every array as a constant (for inference-time graphs)."""
    return {k: Tensor(v) for k, v in params.items()}


def param_count(params: Params) -> int:
    return int(sum(v.size for v in params.values()))
