"""Minimal reverse-mode autodiff over dense 2-D numpy arrays.

Deliberately small: a Tensor wraps one 2-D float array, records its parents
and a backward closure, and `backward()` runs a topological sweep. Only the
operations this model needs exist, and everything is shape-checked eagerly so
graph bugs surface at build time, not inside the backward pass.

Values entering from the outside world are validated finite; intermediate op
outputs are not re-checked (the optimizer checks gradients instead).
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError

FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """One node on the gradient tape: a 2-D array plus backward plumbing."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        arr = np.asarray(value)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        if arr.ndim != 2:
            raise ValueError(f"tape tensors are 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericalError("non-finite values in tensor input")
        self.value = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @classmethod
    def _from_op(cls, value: np.ndarray, parents: Sequence["Tensor"],
                 backward: Callable[[np.ndarray], None] | None) -> "Tensor":
        out = cls.__new__(cls)
        out.value = value
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.value[0, 0])

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into .grad of every reachable leaf."""
        if self.value.shape != (1, 1):
            raise ValueError("backward() starts from a (1,1) scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones((1, 1), dtype=self.value.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _as2d(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b with grads flowing only to sides that require them."""
    a, b = _as2d(a), _as2d(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} x {b.shape}")
    out_val = a.value @ b.value

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accum(g @ b.value.T)
        if b.requires_grad:
            b._accum(a.value.T @ g)

    return Tensor._from_op(out_val, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; b may also be a (1,k) bias row or a (1,1) scalar."""
    a, b = _as2d(a), _as2d(b)
    if b.shape != a.shape and not (b.shape[0] == 1 and b.shape[1] in (1, a.shape[1])):
        raise ValueError(f"add shape mismatch {a.shape} + {b.shape}")
    out_val = a.value + b.value

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            if b.shape == a.shape:
                b._accum(g)
            elif b.shape == (1, 1):
                b._accum(g.sum(keepdims=True))
            else:
                b._accum(g.sum(axis=0, keepdims=True))

    return Tensor._from_op(out_val, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    """a * c for a plain python scalar c."""
    a = _as2d(a)
    c = float(c)
    out_val = a.value * c

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accum(g * c)

    return Tensor._from_op(out_val, (a,), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product; shapes must match exactly."""
    a, b = _as2d(a), _as2d(b)
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch {a.shape} * {b.shape}")
    out_val = a.value * b.value

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accum(g * b.value)
        if b.requires_grad:
            b._accum(g * a.value)

    return Tensor._from_op(out_val, (a, b), bwd)


def relu(a: Tensor) -> Tensor:
    a = _as2d(a)
    out_val = np.maximum(a.value, 0.0)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accum(g * (a.value > 0.0))

    return Tensor._from_op(out_val, (a,), bwd)


def masked_mse(pred: Tensor, target: Tensor, mask: Tensor) -> Tensor:
    """sum(mask * (pred-target)^2) / max(sum(mask), 1), as a (1,1) tensor.

    The mask is treated as a constant weighting; gradients never flow to it.
    """
    pred, target, mask = _as2d(pred), _as2d(target), _as2d(mask)
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError(
            f"masked_mse shape mismatch {pred.shape} / {target.shape} / {mask.shape}")
    if mask.requires_grad:
        raise ValueError("masked_mse mask must not require gradients")
    diff = pred.value - target.value
    denom = max(float(mask.value.sum()), 1.0)
    out_val = np.array([[float((mask.value * diff * diff).sum()) / denom]],
                       dtype=pred.value.dtype)

    def bwd(g: np.ndarray) -> None:
        coeff = 2.0 * g[0, 0] / denom
        common = coeff * mask.value * diff
        if pred.requires_grad:
            pred._accum(common)
        if target.requires_grad:
            target._accum(-common)

    return Tensor._from_op(out_val, (pred, target, mask), bwd)


def l2_row_norms(a: Tensor) -> Tensor:
    """Euclidean norm of each row, as an (n,1) tensor."""
    a = _as2d(a)
    norms = np.sqrt((a.value * a.value).sum(axis=1, keepdims=True))

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            safe = np.where(norms > 0.0, norms, 1.0)
            a._accum(g / safe * a.value)

    return Tensor._from_op(norms, (a,), bwd)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    """Stack b's rows under a's."""
    a, b = _as2d(a), _as2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"concat_rows width mismatch {a.shape} | {b.shape}")
    out_val = np.concatenate([a.value, b.value], axis=0)
    na = a.shape[0]

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accum(g[:na])
        if b.requires_grad:
            b._accum(g[na:])

    return Tensor._from_op(out_val, (a, b), bwd)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Rows [start, stop) as a view-like node."""
    a = _as2d(a)
    n = a.shape[0]
    if not (0 <= start <= stop <= n):
        raise ValueError(f"slice_rows [{start}:{stop}) out of range for {n} rows")
    out_val = a.value[start:stop].copy()

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.value)
            full[start:stop] = g
            a._accum(full)

    return Tensor._from_op(out_val, (a,), bwd)


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Rows a[idx] for an integer index vector (duplicates allowed)."""
    a = _as2d(a)
    idx = np.asarray(idx, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ValueError("gather_rows index out of range")
    out_val = a.value[idx]

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.value)
            np.add.at(full, idx, g)
            a._accum(full)

    return Tensor._from_op(out_val, (a,), bwd)


def mean_scalar(parts: Sequence[Tensor]) -> Tensor:
    """Arithmetic mean of (1,1) tensors (utility for loss assembly)."""
    if not parts:
        raise ValueError("mean_scalar of nothing")
    acc = parts[0]
    for p in parts[1:]:
        acc = add(acc, p)
    return scale(acc, 1.0 / len(parts))
