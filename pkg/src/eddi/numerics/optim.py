"""Adam optimiser as a pure function on parameter dictionaries.

State and parameters go in, fresh state and parameters come out; nothing is
mutated, so a training loop can be replayed or forked from any step.  The
update is the standard bias-corrected one:

    m_t = b1 m_{t-1} + (1 - b1) g        mhat = m_t / (1 - b1^t)
    v_t = b2 v_{t-1} + (1 - b2) g^2      vhat = v_t / (1 - b2^t)
    theta_t = theta_{t-1} - lr * mhat / (sqrt(vhat) + eps)

with defaults lr=0.001, b1=0.9, b2=0.999, eps=1e-8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError
from .nn import Params


@dataclass(frozen=True)
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """One Adam update over every parameter; raises on non-finite gradients."""
    t = state.step + 1
    new_params: Params = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r} at step {t}")
        m = state.beta1 * state.m.get(name, 0.0) + (1.0 - state.beta1) * g
        v = state.beta2 * state.v.get(name, 0.0) + (1.0 - state.beta2) * g * g
        mhat = m / (1.0 - state.beta1**t)
        vhat = v / (1.0 - state.beta2**t)
        new_params[name] = params[name] - state.lr * mhat / (np.sqrt(vhat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    next_state = AdamState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        step=t,
        m=new_m,
        v=new_v,
    )
    return new_params, next_state
