"""Reverse-mode automatic differentiation on a dynamic tape.

All values are float64 numpy arrays. A Tensor records the operation that
produced it; calling ``backward()`` on a scalar walks the graph in reverse
topological order and accumulates gradients into every reachable tensor
with ``requires_grad=True``.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


class AutodiffError(RuntimeError):
    """Raised on graph misuse (backward on non-scalar, repeated backward)."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # sum out prepended axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents: Sequence["Tensor"] = (),
                 _backward: Callable[[np.ndarray], None] | None = None, _op: str = ""):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = _backward
        self._op = _op

    # -- basic protocol ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # -- graph machinery ---------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise AutodiffError(f"backward requires a scalar loss, got shape {self.shape}")
        if self.grad is not None:
            raise AutodiffError("repeated backward without zero_grad on the loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        other = _ensure(other)
        out = Tensor(self.data + other.data, self.requires_grad or other.requires_grad,
                     (self, other), _op="add")

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))
        out._backward = bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, self.requires_grad, (self,), _op="neg")

        def bw(g):
            if self.requires_grad:
                self._accumulate(-g)
        out._backward = bw
        return out

    def __sub__(self, other):
        return self + (-_ensure(other))

    def __rsub__(self, other):
        return _ensure(other) + (-self)

    def __mul__(self, other):
        other = _ensure(other)
        out = Tensor(self.data * other.data, self.requires_grad or other.requires_grad,
                     (self, other), _op="mul")

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))
        out._backward = bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _ensure(other)
        out = Tensor(self.data / other.data, self.requires_grad or other.requires_grad,
                     (self, other), _op="div")

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / other.data ** 2, other.shape))
        out._backward = bw
        return out

    def __rtruediv__(self, other):
        return _ensure(other) / self

    def __pow__(self, p: float):
        out = Tensor(self.data ** p, self.requires_grad, (self,), _op="pow")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * p * self.data ** (p - 1))
        out._backward = bw
        return out

    def __matmul__(self, other):
        other = _ensure(other)
        if self.data.shape[-1] != other.data.shape[0 if other.ndim <= 2 else -2]:
            raise ShapeError(f"matmul: {self.shape} @ {other.shape}")
        out = Tensor(self.data @ other.data, self.requires_grad or other.requires_grad,
                     (self, other), _op="matmul")

        def bw(g):
            if self.requires_grad:
                if other.ndim == 1:
                    self._accumulate(np.outer(g, other.data) if self.ndim == 2 else g * other.data)
                else:
                    self._accumulate(_unbroadcast(g @ np.swapaxes(other.data, -1, -2), self.shape))
            if other.requires_grad:
                if self.ndim == 1:
                    other._accumulate(np.outer(self.data, g) if other.ndim == 2 else g * self.data)
                else:
                    other._accumulate(_unbroadcast(np.swapaxes(self.data, -1, -2) @ g, other.shape))
        out._backward = bw
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], self.requires_grad, (self,), _op="slice")

        def bw(g):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, idx, g)
                self._accumulate(full)
        out._backward = bw
        return out

    # -- shape ops ---------------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), self.requires_grad, (self,), _op="reshape")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g.reshape(self.shape))
        out._backward = bw
        return out

    def transpose(self, *axes):
        axes = axes or None
        out = Tensor(self.data.transpose(axes), self.requires_grad, (self,), _op="transpose")

        def bw(g):
            if self.requires_grad:
                inv = np.argsort(axes) if axes else None
                self._accumulate(g.transpose(inv))
        out._backward = bw
        return out

    # -- reductions --------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), self.requires_grad,
                     (self,), _op="sum")

        def bw(g):
            if self.requires_grad:
                if axis is None:
                    self._accumulate(np.broadcast_to(g, self.shape).copy())
                else:
                    gg = g if keepdims else np.expand_dims(g, axis)
                    self._accumulate(np.broadcast_to(gg, self.shape).copy())
        out._backward = bw
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / n

    def max(self, axis=None, keepdims=False):
        data = self.data.max(axis=axis, keepdims=keepdims)
        out = Tensor(data, self.requires_grad, (self,), _op="max")

        def bw(g):
            if self.requires_grad:
                if axis is None:
                    mask = (self.data == self.data.max()).astype(np.float64)
                    self._accumulate(mask / mask.sum() * g)
                else:
                    m = self.data.max(axis=axis, keepdims=True)
                    mask = (self.data == m).astype(np.float64)
                    mask /= mask.sum(axis=axis, keepdims=True)
                    gg = g if keepdims else np.expand_dims(g, axis)
                    self._accumulate(mask * gg)
        out._backward = bw
        return out

    # -- elementwise nonlinearities ----------------------------------------
    def exp(self):
        data = np.exp(self.data)
        out = Tensor(data, self.requires_grad, (self,), _op="exp")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * data)
        out._backward = bw
        return out

    def log(self):
        out = Tensor(np.log(self.data), self.requires_grad, (self,), _op="log")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g / self.data)
        out._backward = bw
        return out

    def tanh(self):
        data = np.tanh(self.data)
        out = Tensor(data, self.requires_grad, (self,), _op="tanh")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * (1.0 - data ** 2))
        out._backward = bw
        return out

    def sigmoid(self):
        data = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor(data, self.requires_grad, (self,), _op="sigmoid")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * data * (1.0 - data))
        out._backward = bw
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor(self.data * mask, self.requires_grad, (self,), _op="relu")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * mask)
        out._backward = bw
        return out

    def abs(self):
        sign = np.sign(self.data)
        out = Tensor(np.abs(self.data), self.requires_grad, (self,), _op="abs")

        def bw(g):
            if self.requires_grad:
                self._accumulate(g * sign)
        out._backward = bw
        return out


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_ensure(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data, any(t.requires_grad for t in tensors), tuple(tensors), _op="concat")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])
    out._backward = bw
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_ensure(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)
    out = Tensor(data, any(t.requires_grad for t in tensors), tuple(tensors), _op="stack")

    def bw(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))
    out._backward = bw
    return out


def logsumexp(x: Tensor, axis=None, keepdims=False) -> Tensor:
    m = np.max(x.data, axis=axis, keepdims=True)
    shifted = x - Tensor(m)
    s = shifted.exp().sum(axis=axis, keepdims=True).log() + Tensor(m)
    if not keepdims and axis is not None:
        s = s.reshape(np.squeeze(s.data, axis=axis).shape)
    elif not keepdims and axis is None:
        s = s.reshape(())
    return s


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return (x - logsumexp(x, axis=axis, keepdims=True)).exp()


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return x - logsumexp(x, axis=axis, keepdims=True)
