"""Dense float64 tensors with a dynamic reverse-mode tape.

Design: ops execute eagerly on numpy buffers (hot kernels dispatched through
:mod:`stressformer.kernels`). When a :class:`Tape` is active on the current
thread, every op whose inputs carry gradients appends one node; ``backward``
walks the node list in reverse, which is a valid reverse topological order
because nodes are appended in execution order. The tape is rebuilt per
forward pass.

Backward contract: each ``backward()`` call first clears the gradients of
every tensor the tape touches, so repeated calls yield identical (not
accumulated) gradients.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError, UsageError, ValidationError

PROB_CLAMP_LO = 1e-12
ROW_SUM_TOL = 1e-6

_state = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = _state.tapes = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """numpy-backed value with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValidationError("tensor values must be finite (got NaN/Inf)")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Internal constructor for op outputs; skips the finiteness check."""
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t._tape = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # reductions / shape ops

    def sum(self, axis: int | None = None) -> "Tensor":
        return _reduce(self, axis, mean=False)

    def mean(self, axis: int | None = None) -> "Tensor":
        return _reduce(self, axis, mean=True)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.data.shape
        out = Tensor._wrap(self.data.reshape(shape))
        return _record(out, (self,), lambda g: (g.reshape(src_shape),))

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        out = Tensor._wrap(np.ascontiguousarray(np.transpose(self.data, axes)))
        return _record(
            out, (self,), lambda g: (np.ascontiguousarray(np.transpose(g, inv)),)
        )

    # operator sugar

    def __add__(self, other) -> "Tensor":
        return add(self, _coerce(other))

    def __radd__(self, other) -> "Tensor":
        return add(_coerce(other), self)

    def __sub__(self, other) -> "Tensor":
        return add(self, scale(_coerce(other), -1.0))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _coerce(other))

    def __rmul__(self, other) -> "Tensor":
        return self.__mul__(other)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, _coerce(other))


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


class _Node:
    __slots__ = ("inputs", "out", "bwd")

    def __init__(self, inputs: tuple[Tensor, ...], out: Tensor, bwd: Callable):
        self.inputs = inputs
        self.out = out
        self.bwd = bwd


class Tape:
    """Ordered record of executed primitives for reverse accumulation."""

    __slots__ = ("_nodes",)

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise UsageError("tape context exited out of order")
        stack.pop()

    def __len__(self) -> int:
        return len(self._nodes)

    def _append(self, node: _Node) -> None:
        self._nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise UsageError("loss is not connected to this tape")
        for node in self._nodes:
            node.out.grad = None
            for t in node.inputs:
                t.grad = None
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            gout = node.out.grad
            if gout is None:
                continue
            for t, g in zip(node.inputs, node.bwd(gout)):
                if g is None or not t.requires_grad:
                    continue
                t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Populate ``grad`` for every requires_grad tensor reachable from loss."""
    if loss._tape is None:
        raise UsageError("loss is not connected to a tape (no Tape was active)")
    loss._tape.backward(loss)


def _record(out: Tensor, inputs: tuple[Tensor, ...], bwd: Callable) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape._append(_Node(inputs, out, bwd))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor._wrap(a.data + b.data)
    ash, bsh = a.shape, b.shape
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh))
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor._wrap(a.data * b.data)
    ash, bsh = a.shape, b.shape
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, ash), _unbroadcast(g * a.data, bsh)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor._wrap(a.data * c)
    return _record(out, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2D x 2D or batched 3D x 3D with equal batch size."""
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(
                f"matmul inner dimensions differ: {a.shape} x {b.shape}"
            )
        out = Tensor._wrap(kernels.matmul(a.data, b.data))

        def bwd(g):
            da = kernels.matmul(g, np.ascontiguousarray(b.data.T))
            db = kernels.matmul(np.ascontiguousarray(a.data.T), g)
            return da, db

        return _record(out, (a, b), bwd)

    if a.ndim == 3 and b.ndim == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise ShapeError(
                f"batched matmul dimensions differ: {a.shape} x {b.shape}"
            )
        out = Tensor._wrap(kernels.bmm(a.data, b.data))

        def bwd3(g):
            bt = np.ascontiguousarray(b.data.transpose(0, 2, 1))
            at = np.ascontiguousarray(a.data.transpose(0, 2, 1))
            return kernels.bmm(g, bt), kernels.bmm(at, g)

        return _record(out, (a, b), bwd3)

    raise ShapeError(f"matmul expects 2D x 2D or 3D x 3D, got {a.shape} x {b.shape}")


def relu(x: Tensor) -> Tensor:
    out = Tensor._wrap(kernels.relu_fwd(x.data))
    return _record(out, (x,), lambda g: (kernels.relu_bwd(x.data, g),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = axis if axis >= 0 else x.ndim + axis
    if not 0 <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {x.shape}")
    n = x.shape[axis]
    if n < 1:
        raise ShapeError(f"softmax over empty axis {axis} of shape {x.shape}")
    moved = np.ascontiguousarray(np.moveaxis(x.data, axis, -1))
    rows = moved.reshape(-1, n)
    y2d = kernels.softmax_fwd(rows)
    out_data = np.ascontiguousarray(np.moveaxis(y2d.reshape(moved.shape), -1, axis))
    out = Tensor._wrap(out_data)

    def bwd(g):
        g2d = np.ascontiguousarray(np.moveaxis(g, axis, -1)).reshape(-1, n)
        dx2d = kernels.softmax_bwd(y2d, g2d)
        return (np.ascontiguousarray(np.moveaxis(dx2d.reshape(moved.shape), -1, axis)),)

    return _record(out, (x,), bwd)


def layer_norm(
    x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5
) -> Tensor:
    """Normalize the last axis to zero mean / unit population variance, then
    apply the affine pair."""
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be > 0, got {eps}")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} "
            f"do not match feature dim {d}"
        )
    rows = x.data.reshape(-1, d)
    y2d, xhat, rstd = kernels.layer_norm_fwd(rows, gamma.data, beta.data, eps)
    out = Tensor._wrap(y2d.reshape(x.shape))

    def bwd(g):
        g2d = np.ascontiguousarray(g.reshape(-1, d))
        dx2d, dgamma, dbeta = kernels.layer_norm_bwd(g2d, xhat, gamma.data, rstd)
        return dx2d.reshape(x.shape), dgamma, dbeta

    return _record(out, (x, gamma, beta), bwd)


def dropout(
    x: Tensor, rate: float, rng: np.random.Generator, training: bool
) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and scale survivors by
    1/(1-rate) in training mode; identity in inference mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    mult = keep * (1.0 / (1.0 - rate))
    out = Tensor._wrap(x.data * mult)
    return _record(out, (x,), lambda g: (g * mult,))


def cross_entropy(probs: Tensor, onehot: Tensor) -> Tensor:
    """Mean over the batch of -sum(target * log(prob)), probabilities clamped
    to [1e-12, 1] before the log."""
    if probs.ndim != 2 or probs.shape != onehot.shape:
        raise ShapeError(
            f"cross_entropy expects matching 2D shapes, got {probs.shape} "
            f"and {onehot.shape}"
        )
    row_sums = probs.data.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
        worst = float(np.max(np.abs(row_sums - 1.0)))
        raise ValidationError(
            f"probability rows must sum to 1 within {ROW_SUM_TOL} (off by {worst:.3g})"
        )
    oh = onehot.data
    if not (np.all((oh == 0.0) | (oh == 1.0)) and np.all(oh.sum(axis=1) == 1.0)):
        raise ValidationError("targets must be valid one-hot rows")
    b = probs.shape[0]
    clamped = np.clip(probs.data, PROB_CLAMP_LO, 1.0)
    loss = Tensor._wrap(np.asarray(-(oh * np.log(clamped)).sum() / b))

    def bwd(g):
        inside = (probs.data >= PROB_CLAMP_LO) & (probs.data <= 1.0)
        dprobs = np.where(inside, -oh / clamped, 0.0) * (float(g) / b)
        return dprobs, None

    return _record(loss, (probs, onehot), bwd)


def _reduce(x: Tensor, axis: int | None, mean: bool) -> Tensor:
    if axis is None:
        denom = x.size if mean else 1
        out = Tensor._wrap(np.asarray(x.data.sum() / denom))
        return _record(
            out, (x,), lambda g: (np.full(x.shape, float(g) / denom),)
        )
    axis = axis if axis >= 0 else x.ndim + axis
    if not 0 <= axis < x.ndim:
        raise ShapeError(f"reduction axis {axis} out of range for shape {x.shape}")
    denom = x.shape[axis] if mean else 1
    out = Tensor._wrap(np.ascontiguousarray(x.data.sum(axis=axis) / denom))

    def bwd(g):
        expanded = np.expand_dims(g / denom, axis)
        return (np.ascontiguousarray(np.broadcast_to(expanded, x.shape)),)

    return _record(out, (x,), bwd)
