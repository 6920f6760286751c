"""Minimal reverse-mode differentiation over float64 numpy arrays.

Every primitive records itself on the active tape during the forward pass;
backward walks the tape once in reverse, accumulating exact vector-Jacobian
products. Dense tensors only; broadcasting is supported for elementwise ops
and bias addition, with gradients summed back over broadcast axes.

No wall-clock or address-dependent behavior anywhere: given the same inputs
the tape, the outputs, and the gradients are bit-identical.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

_uid = itertools.count(1)
_active = threading.local()


class Tensor:
    """Immutable float64 value with a stable identity for tape bookkeeping."""

    __slots__ = ("data", "uid", "name")

    def __init__(self, data, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.uid = next(_uid)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


@dataclass
class OpRecord:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], tuple]


@dataclass
class Tape:
    """Topologically ordered record of every primitive in one forward pass."""

    records: list[OpRecord] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        stack = getattr(_active, "stack", None)
        if stack is None:
            stack = _active.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _active.stack.pop()

    def __len__(self) -> int:
        return len(self.records)


def _record(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray, vjp) -> Tensor:
    out = Tensor(out_data)
    stack = getattr(_active, "stack", None)
    if stack:
        stack[-1].records.append(OpRecord(op, inputs, out, vjp))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# --- primitives ----------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return _record(
        "add", (a, b), out,
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return _record(
        "sub", (a, b), out,
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return _record(
        "mul", (a, b), out,
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def neg(a: Tensor) -> Tensor:
    return _record("neg", (a,), -a.data, lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    out = a.data @ b.data
    return _record(
        "matmul", (a, b), out,
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)
    return _record("reshape", (a,), out, lambda g: (g.reshape(a.data.shape),))


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = np.broadcast_to(a.data, shape).copy()
    return _record(
        "broadcast_to", (a,), out, lambda g: (_unbroadcast(g, a.data.shape),)
    )


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.full(a.data.shape, float(np.asarray(g).reshape(())) / count),)
        expanded = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a.data.shape) / count,)

    return _record("mean", (a,), out, vjp)


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.full(a.data.shape, float(np.asarray(g).reshape(()))),)
        expanded = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(expanded, a.data.shape).copy(),)

    return _record("sum", (a,), out, vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    return _record("relu", (a,), out, lambda g: (g * (a.data > 0.0),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(a.data)
    return _record("log", (a,), out, lambda g: (g / a.data,))


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax over the last axis, stable via logsumexp."""
    m = a.data.max(axis=-1, keepdims=True)
    shifted = a.data - m
    lse = m + np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = a.data - lse

    def vjp(g):
        softmax = np.exp(out)
        return (g - softmax * g.sum(axis=-1, keepdims=True),)

    return _record("log_softmax", (a,), out, vjp)


# --- backward and the independent oracle -----------------------------------------


@dataclass
class Gradients:
    by_name: dict[str, np.ndarray]
    unreached: set[str] = field(default_factory=set)

    def max_abs(self) -> float:
        if not self.by_name:
            return 0.0
        return max(float(np.abs(g).max()) for g in self.by_name.values())

    def global_norm(self) -> float:
        total = sum(float((g * g).sum()) for g in self.by_name.values())
        return float(np.sqrt(total))

    def all_finite(self) -> bool:
        return all(np.isfinite(g).all() for g in self.by_name.values())


def backward(tape: Tape, loss: Tensor, params: Mapping[str, Tensor]) -> Gradients:
    """Exact reverse-mode gradients of a scalar loss for every parameter.

    Parameters the loss does not reach get a zero gradient and are flagged
    as unreached.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.uid: np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        gout = grads.get(rec.output.uid)
        if gout is None:
            continue
        for tensor, gin in zip(rec.inputs, rec.vjp(gout)):
            if gin is None:
                continue
            if tensor.uid in grads:
                grads[tensor.uid] = grads[tensor.uid] + gin
            else:
                grads[tensor.uid] = gin
    by_name: dict[str, np.ndarray] = {}
    unreached: set[str] = set()
    for name, tensor in params.items():
        grad = grads.get(tensor.uid)
        if grad is None:
            by_name[name] = np.zeros_like(tensor.data)
            unreached.add(name)
        else:
            by_name[name] = np.asarray(grad, dtype=np.float64)
    return Gradients(by_name=by_name, unreached=unreached)


def finite_difference_gradient(
    model,
    batch,
    loss_fn: Callable,
    step: float = 1e-6,
) -> dict[str, np.ndarray]:
    """Central-difference gradients, coordinate by coordinate.

    This is the independent oracle for `backward`: it only ever calls the
    model's forward pass through `loss_fn(model, batch)` and never touches
    the tape machinery.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    original = dict(model.parameters)
    grads: dict[str, np.ndarray] = {}
    try:
        for name, tensor in original.items():
            flat = tensor.data.reshape(-1).copy()
            grad = np.zeros_like(flat)
            for i in range(flat.size):
                for sign, slot in ((+1.0, 0), (-1.0, 1)):
                    bumped = flat.copy()
                    bumped[i] += sign * step
                    patched = dict(original)
                    patched[name] = Tensor(bumped.reshape(tensor.data.shape), name=name)
                    model.set_parameters(patched)
                    value = loss_fn(model, batch)
                    if slot == 0:
                        upper = value
                    else:
                        grad[i] = (upper - value) / (2.0 * step)
            grads[name] = grad.reshape(tensor.data.shape)
    finally:
        model.set_parameters(original)
    return grads
