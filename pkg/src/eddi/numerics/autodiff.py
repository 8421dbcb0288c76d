"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ``numpy.ndarray`` and records the
operation that produced it.  Calling :func:`backward` on a scalar result
walks the recorded graph once in reverse topological order and accumulates
``d result / d leaf`` into every leaf created with ``requires_grad=True``.

The primitive set is deliberately small: affine maps, relu/sigmoid,
exp/log/sqrt, elementwise arithmetic, reductions, shape plumbing
(reshape/concat/slice/broadcast), and value clamping.  That is exactly what
the encoder, decoder, and the variational objective need.  Anything else
(``**``, in-place mutation, fancy indexing) raises ``CapabilityError``
rather than silently detaching the graph.

All arrays are float64.  Operations never mutate their inputs; a fixed
input graph therefore produces bit-identical values and gradients on every
run.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence, Union

import numpy as np

from ..errors import CapabilityError, NumericError, ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int]


def _as_value(x: ArrayLike) -> np.ndarray:
    if isinstance(x, Tensor):
        raise TypeError("internal: expected raw value")
    return np.asarray(x, dtype=np.float64)


def as_tensor(x: ArrayLike) -> "Tensor":
    """Wrap ``x`` as a constant Tensor (no gradient) unless it already is one."""
    if isinstance(x, Tensor):
        return x
    return Tensor(_as_value(x))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # Remove leading axes added by broadcasting.
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # Collapse axes that were broadcast from length 1.
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the computation graph.

    ``value`` is the forward result.  ``grad`` is filled in by
    :func:`backward` for nodes with ``requires_grad`` (leaves the caller
    marked, plus interior nodes on a path to one).
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_grad_fns")

    def __init__(
        self,
        value: np.ndarray | float | Iterable,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _grad_fns: tuple[Callable[[np.ndarray], np.ndarray], ...] = (),
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._grad_fns = _grad_fns

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def param(value: np.ndarray) -> "Tensor":
        """A trainable leaf; gradient will be accumulated here."""
        return Tensor(value, requires_grad=True)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, grad={self.requires_grad})"

    # -- elementwise arithmetic ----------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        o = as_tensor(other)
        return Tensor(
            self.value + o.value,
            _parents=(self, o),
            _grad_fns=(
                lambda g: _unbroadcast(g, self.value.shape),
                lambda g: _unbroadcast(g, o.value.shape),
            ),
        )

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        o = as_tensor(other)
        return Tensor(
            self.value - o.value,
            _parents=(self, o),
            _grad_fns=(
                lambda g: _unbroadcast(g, self.value.shape),
                lambda g: _unbroadcast(-g, o.value.shape),
            ),
        )

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other).__sub__(self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        o = as_tensor(other)
        return Tensor(
            self.value * o.value,
            _parents=(self, o),
            _grad_fns=(
                lambda g: _unbroadcast(g * o.value, self.value.shape),
                lambda g: _unbroadcast(g * self.value, o.value.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        o = as_tensor(other)
        return Tensor(
            self.value / o.value,
            _parents=(self, o),
            _grad_fns=(
                lambda g: _unbroadcast(g / o.value, self.value.shape),
                lambda g: _unbroadcast(-g * self.value / (o.value * o.value), o.value.shape),
            ),
        )

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other).__truediv__(self)

    def __neg__(self) -> "Tensor":
        return Tensor(-self.value, _parents=(self,), _grad_fns=(lambda g: -g,))

    def __pow__(self, _other):
        raise CapabilityError(
            "'**' is not a supported primitive; build powers from mul/exp/log"
        )

    def __array_ufunc__(self, *args, **kwargs):
        raise CapabilityError(
            "numpy ufuncs do not track gradients; use Tensor primitives"
        )

    # -- linear algebra -------------------------------------------------------

    def matmul(self, other: ArrayLike) -> "Tensor":
        o = as_tensor(other)
        if self.value.ndim != 2 or o.value.ndim != 2:
            raise ShapeError(
                f"matmul requires 2-D operands, got {self.value.shape} @ {o.value.shape}"
            )
        if self.value.shape[1] != o.value.shape[0]:
            raise ShapeError(
                f"matmul dimension mismatch: {self.value.shape} @ {o.value.shape}"
            )
        return Tensor(
            self.value @ o.value,
            _parents=(self, o),
            _grad_fns=(
                lambda g: g @ o.value.T,
                lambda g: self.value.T @ g,
            ),
        )

    __matmul__ = matmul

    # -- nonlinearities -------------------------------------------------------

    def relu(self) -> "Tensor":
        out = np.maximum(self.value, 0.0)
        mask = self.value > 0.0
        return Tensor(out, _parents=(self,), _grad_fns=(lambda g: g * mask,))

    def sigmoid(self) -> "Tensor":
        # Stable in both tails.
        v = self.value
        out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
        return Tensor(out, _parents=(self,), _grad_fns=(lambda g: g * out * (1.0 - out),))

    def exp(self) -> "Tensor":
        out = np.exp(self.value)
        return Tensor(out, _parents=(self,), _grad_fns=(lambda g: g * out,))

    def log(self) -> "Tensor":
        return Tensor(
            np.log(self.value),
            _parents=(self,),
            _grad_fns=(lambda g: g / self.value,),
        )

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.value)
        return Tensor(out, _parents=(self,), _grad_fns=(lambda g: g * 0.5 / out,))

    def clamp(self, lo: float | None = None, hi: float | None = None) -> "Tensor":
        """Clip values to [lo, hi]; gradient is zero where the clip binds."""
        out = np.clip(self.value, lo, hi)
        inside = np.ones_like(self.value, dtype=bool)
        if lo is not None:
            inside &= self.value > lo
        if hi is not None:
            inside &= self.value < hi
        return Tensor(out, _parents=(self,), _grad_fns=(lambda g: g * inside,))

    # -- reductions -----------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = self.value.sum(axis=axis, keepdims=keepdims)
        shape = self.value.shape

        def back(g: np.ndarray) -> np.ndarray:
            if axis is None:
                return np.broadcast_to(g, shape).copy()
            ge = g if keepdims else np.expand_dims(g, axis)
            return np.broadcast_to(ge, shape).copy()

        return Tensor(out, _parents=(self,), _grad_fns=(back,))

    def mean(self, axis: int | None = None) -> "Tensor":
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    # -- shape plumbing -------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        old = self.value.shape
        return Tensor(
            self.value.reshape(shape),
            _parents=(self,),
            _grad_fns=(lambda g: g.reshape(old),),
        )

    def broadcast_to(self, shape: tuple[int, ...]) -> "Tensor":
        return Tensor(
            np.broadcast_to(self.value, shape).copy(),
            _parents=(self,),
            _grad_fns=(lambda g: _unbroadcast(g, self.value.shape),),
        )

    def __getitem__(self, key) -> "Tensor":
        if not isinstance(key, tuple):
            key = (key,)
        for k in key:
            if not isinstance(k, (int, slice)):
                raise CapabilityError("only int/slice indexing is supported")
        out = self.value[key]
        shape = self.value.shape

        def back(g: np.ndarray) -> np.ndarray:
            full = np.zeros(shape, dtype=np.float64)
            full[key] = g
            return full

        return Tensor(out, _parents=(self,), _grad_fns=(back,))

    # -- scalar access --------------------------------------------------------

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.value.shape}")
        return float(self.value)


def concat(parts: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``; gradient splits back to each part."""
    ts = [as_tensor(p) for p in parts]
    values = [t.value for t in ts]
    out = np.concatenate(values, axis=axis)
    ax = axis if axis >= 0 else out.ndim + axis
    sizes = [v.shape[ax] for v in values]
    offsets = np.cumsum([0] + sizes)

    def make_back(i: int):
        sl = [slice(None)] * out.ndim
        sl[ax] = slice(int(offsets[i]), int(offsets[i + 1]))
        sl = tuple(sl)
        return lambda g: g[sl]

    return Tensor(out, _parents=tuple(ts), _grad_fns=tuple(make_back(i) for i in range(len(ts))))


def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative post-order over the sub-graph that requires gradients."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node.

    ``loss`` must be scalar.  Grads from a previous call are discarded for
    the nodes reached here, so repeated backward passes do not leak state.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        g = node.grad
        for parent, fn in zip(node._parents, node._grad_fns):
            if not parent.requires_grad:
                continue
            contrib = fn(g)
            if parent.grad is None:
                parent.grad = contrib
            else:
                parent.grad = parent.grad + contrib


def grad(loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradient of a scalar ``loss`` with respect to each tensor in ``params``.

    Parameters that the loss does not touch get a zero array of their shape.
    """
    backward(loss)
    out = []
    for p in params:
        if not p.requires_grad:
            raise CapabilityError("grad requested for a tensor built without requires_grad")
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient encountered")
        out.append(g)
    return out
