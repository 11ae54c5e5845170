"""Dense tensors with reverse-mode automatic differentiation.

Data lives in numpy arrays (float32 by default, float64 supported for
high-precision gradient checks). Every operation that produces a tensor
records its inputs and a backward closure; ``backward(loss)`` walks the
recorded tape in reverse topological order and accumulates gradients
into every ``requires_grad`` tensor it reaches. The tape is rebuilt on
every forward pass; graphs are never reused.

Thread-safety: tensors are value-like and all operations are pure, so
read-only inference on frozen parameters may run concurrently. Gradient
accumulation and optimizer updates assume a single writer.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ShapeError

DEFAULT_DTYPE = np.float32

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """N-dimensional float array with an attached gradient tape node.

    Invariants: the flat data length always equals the product of the
    shape; ``grad``, when populated, matches ``data``'s shape; elements
    are finite (constructing a tensor from NaN/Inf data raises, so
    numerical blow-ups surface as errors rather than silent state).
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data contains NaN or Inf")
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: tuple["Tensor", ...],
        backward: Callable[[np.ndarray], None] | None,
    ) -> "Tensor":
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    # -- basic properties -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Copy of the values with no tape history."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- gradient accumulation -------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        if not isinstance(other, Tensor):
            other = Tensor(np.asarray(other, dtype=self.data.dtype))
        a, b = self, other
        out_data = a.data + b.data

        def bwd(g: np.ndarray) -> None:
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._from_op(out_data, (a, b), bwd)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __sub__(self, other) -> "Tensor":
        return self + (-other if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other) -> "Tensor":
        return (-self) + other

    def __mul__(self, other) -> "Tensor":
        if not isinstance(other, Tensor):
            other = Tensor(np.asarray(other, dtype=self.data.dtype))
        a, b = self, other
        out_data = a.data * b.data

        def bwd(g: np.ndarray) -> None:
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._from_op(out_data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return self * (1.0 / float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # -- reductions and views ----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        x = self
        out_data = x.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g: np.ndarray) -> None:
            if not x.requires_grad:
                return
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            x._accumulate(np.broadcast_to(gg, x.shape).astype(x.data.dtype, copy=False))

        return Tensor._from_op(out_data, (x,), bwd)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        x = self
        out_data = x.data.reshape(shape)

        def bwd(g: np.ndarray) -> None:
            if x.requires_grad:
                x._accumulate(g.reshape(x.shape))

        return Tensor._from_op(out_data, (x,), bwd)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        x = self
        inv = np.argsort(axes)
        out_data = np.transpose(x.data, axes)

        def bwd(g: np.ndarray) -> None:
            if x.requires_grad:
                x._accumulate(np.transpose(g, inv))

        return Tensor._from_op(out_data, (x,), bwd)


def parameter(data, dtype=DEFAULT_DTYPE) -> Tensor:
    """Learnable tensor: requires_grad set, data copied."""
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batching semantics; both inputs must be >= 2-D."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions do not match: {a.shape} x {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor._from_op(out_data, (a, b), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Probabilities along ``axis``, computed with max-subtraction for stability."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            dot = (g * p).sum(axis=axis, keepdims=True)
            x._accumulate(p * (g - dot))

    return Tensor._from_op(p, (x,), bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply the affine pair."""
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"gamma/beta must have shape ({d},), got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = xhat * gamma.data + beta.data

    def bwd(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gg = g * gamma.data
            m1 = gg.mean(axis=-1, keepdims=True)
            m2 = (gg * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gg - m1 - xhat * m2))

    return Tensor._from_op(out_data, (x, gamma, beta), bwd)


def gelu(x: Tensor) -> Tensor:
    """Elementwise x * Phi(x) using the exact Gaussian CDF (erf form)."""
    phi = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out_data = x.data * phi

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
            x._accumulate(g * (phi + x.data * pdf))

    return Tensor._from_op(out_data.astype(x.data.dtype, copy=False), (x,), bwd)


def cross_entropy_logits(z: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(z)[label], log-sum-exp stabilized.

    ``labels`` is an integer array of length B with values in [0, C).
    """
    if z.ndim != 2:
        raise ShapeError(f"cross_entropy_logits expects [B, C] logits, got {z.shape}")
    y = np.asarray(labels)
    b, c = z.shape
    if y.shape != (b,):
        raise ShapeError(f"labels must have shape ({b},), got {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ValueError(f"label out of range [0, {c})")
    y = y.astype(np.int64)
    m = z.data.max(axis=1, keepdims=True)
    e = np.exp(z.data - m)
    lse = m[:, 0] + np.log(e.sum(axis=1))
    losses = lse - z.data[np.arange(b), y]
    out_data = np.asarray(losses.mean(), dtype=z.data.dtype)

    def bwd(g: np.ndarray) -> None:
        if z.requires_grad:
            p = e / e.sum(axis=1, keepdims=True)
            p[np.arange(b), y] -= 1.0
            z._accumulate(p * (g / b))

    return Tensor._from_op(out_data, (z,), bwd)


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` by integer ids; gradients scatter-add back."""
    idx = np.asarray(ids.data if isinstance(ids, Tensor) else ids)
    idx = idx.astype(np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValueError(f"id out of range [0, {table.shape[0]})")
    out_data = table.data[idx]

    def bwd(g: np.ndarray) -> None:
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx.ravel(), g.reshape(-1, table.shape[-1]))
            table._accumulate(gt)

    return Tensor._from_op(out_data, (table,), bwd)


def select(x: Tensor, index: int, axis: int) -> Tensor:
    """Slice out position ``index`` along ``axis`` (rank-reducing)."""
    out_data = np.take(x.data, index, axis=axis)
    sl = [slice(None)] * x.ndim
    sl[axis] = index
    sl = tuple(sl)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[sl] = g
            x._accumulate(gx)

    return Tensor._from_op(out_data, (x,), bwd)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate is 0."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)

    def bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g * keep)

    return Tensor._from_op(x.data * keep, (x,), bwd)


def backward(loss: Tensor) -> None:
    """Populate gradients of every requires_grad tensor reachable from ``loss``.

    Gradients accumulate additively: a tensor used twice receives both
    contributions. The caller is responsible for zeroing grads between
    passes.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
