"""Shared test oracles: central finite differences against autodiff."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from eddi.numerics import Tensor, grad

FD_STEP = 1e-5
FD_REL_TOL = 1e-4


def fd_gradients(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[np.ndarray],
    step: float = FD_STEP,
) -> list[np.ndarray]:
    """Central-difference gradient of scalar f for every coordinate."""
    out = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        flat = g.ravel()
        for j in range(p.size):
            bumped = [q.copy() for q in params]
            bumped[i].ravel()[j] += step
            f_plus = f([Tensor(q) for q in bumped]).item()
            bumped[i].ravel()[j] -= 2.0 * step
            f_minus = f([Tensor(q) for q in bumped]).item()
            flat[j] = (f_plus - f_minus) / (2.0 * step)
        out.append(g)
    return out


def assert_grads_match_fd(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[np.ndarray],
    rel_tol: float = FD_REL_TOL,
) -> None:
    """Fail if any analytic gradient coordinate disagrees with finite differences."""
    leaves = [Tensor.param(p.copy()) for p in params]
    analytic = grad(f(leaves), leaves)
    numeric = fd_gradients(f, params)
    for i, (a, n) in enumerate(zip(analytic, numeric)):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        rel = np.abs(a - n) / denom
        worst = float(rel.max()) if rel.size else 0.0
        assert worst < rel_tol, (
            f"param {i}: max rel gradient error {worst:.3e} exceeds {rel_tol:.1e}"
        )
