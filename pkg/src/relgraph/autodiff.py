"""Minimal reverse-mode automatic differentiation on numpy arrays.

The model's computation graph is small and fixed (gather / scatter /
matmul / elementwise), so a light tape is all we need.  Arrays are kept
in float64; checkpoints downcast to float32 on disk.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64


class NumericError(RuntimeError):
    """Raised when a non-finite value appears in a checked computation."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the tape: a numpy array plus an optional backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}, name={self.name})"

    # -- graph construction helpers ------------------------------------

    def _accum(self, grad):
        if self.grad is None:
            self.grad = np.array(grad, dtype=DTYPE, copy=True)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += grad

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accum(np.asarray(grad, dtype=DTYPE))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other)
        out = _op(np.add(self.data, other.data), (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g, other.data.shape))
            out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _op(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(-g)
        return out

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        out = _op(np.multiply(self.data, other.data), (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g * self.data, other.data.shape))
            out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        out = _op(self.data / other.data, (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(-g * self.data / other.data ** 2,
                                              other.data.shape))
            out._backward = bwd
        return out

    def matmul(self, other):
        other = _as_tensor(other)
        out = _op(self.data @ other.data, (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    self._accum(g @ other.data.T)
                if other.requires_grad:
                    other._accum(self.data.T @ g)
            out._backward = bwd
        return out

    __matmul__ = matmul

    def sum(self, axis=None, keepdims=False):
        out = _op(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def bwd(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape).copy())
            out._backward = bwd
        return out

    @property
    def T(self):
        out = _op(self.data.T, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g.T)
        return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _op(data, parents) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=tuple(p for p in parents if p.requires_grad))


# -- activations and pointwise functions -------------------------------

def relu(t: Tensor) -> Tensor:
    out = _op(np.maximum(t.data, 0.0), (t,))
    if out.requires_grad:
        mask = (t.data > 0).astype(DTYPE)
        out._backward = lambda g: t._accum(g * mask)
    return out


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)
    out = _op(y, (t,))
    if out.requires_grad:
        out._backward = lambda g: t._accum(g * (1.0 - y ** 2))
    return out


def sigmoid(t: Tensor) -> Tensor:
    y = np.where(t.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(t.data))),
                 np.exp(-np.abs(t.data)) / (1.0 + np.exp(-np.abs(t.data))))
    out = _op(y, (t,))
    if out.requires_grad:
        out._backward = lambda g: t._accum(g * y * (1.0 - y))
    return out


def softplus(t: Tensor) -> Tensor:
    # log(1 + e^x), computed without overflow
    y = np.maximum(t.data, 0.0) + np.log1p(np.exp(-np.abs(t.data)))
    out = _op(y, (t,))
    if out.requires_grad:
        s = np.where(t.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(t.data))),
                     np.exp(-np.abs(t.data)) / (1.0 + np.exp(-np.abs(t.data))))
        out._backward = lambda g: t._accum(g * s)
    return out


def exp(t: Tensor) -> Tensor:
    y = np.exp(t.data)
    out = _op(y, (t,))
    if out.requires_grad:
        out._backward = lambda g: t._accum(g * y)
    return out


def identity(t: Tensor) -> Tensor:
    return t


ACTIVATIONS = {"relu": relu, "tanh": tanh, "idd": identity, "identity": identity}


def activation(tag: str):
    try:
        return ACTIVATIONS[tag]
    except KeyError:
        raise ValueError(f"unknown activation tag: {tag!r}") from None


# -- indexing / aggregation --------------------------------------------

def gather_rows(t: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    out = _op(t.data[idx], (t,))
    if out.requires_grad:
        def bwd(g):
            acc = np.zeros_like(t.data)
            np.add.at(acc, idx, g)
            t._accum(acc)
        out._backward = bwd
    return out


def segment_sum(t: Tensor, seg_ids, num_segments: int) -> Tensor:
    """Sum rows of `t` into `num_segments` buckets given by `seg_ids`."""
    seg_ids = np.asarray(seg_ids, dtype=np.intp)
    acc = np.zeros((num_segments,) + t.data.shape[1:], dtype=DTYPE)
    np.add.at(acc, seg_ids, t.data)
    out = _op(acc, (t,))
    if out.requires_grad:
        out._backward = lambda g: t._accum(g[seg_ids])
    return out


def concat_cols(parts) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = _op(np.concatenate([p.data for p in parts], axis=1), parts)
    if out.requires_grad:
        splits = np.cumsum([p.data.shape[1] for p in parts])[:-1]
        def bwd(g):
            for p, piece in zip(parts, np.split(g, splits, axis=1)):
                if p.requires_grad:
                    p._accum(piece)
        out._backward = bwd
    return out


def concat_rows(parts) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = _op(np.concatenate([p.data for p in parts], axis=0), parts)
    if out.requires_grad:
        splits = np.cumsum([p.data.shape[0] for p in parts])[:-1]
        def bwd(g):
            for p, piece in zip(parts, np.split(g, splits, axis=0)):
                if p.requires_grad:
                    p._accum(piece)
        out._backward = bwd
    return out


def slice_rows(t: Tensor, start: int, stop: int) -> Tensor:
    out = _op(t.data[start:stop], (t,))
    if out.requires_grad:
        def bwd(g):
            acc = np.zeros_like(t.data)
            acc[start:stop] = g
            t._accum(acc)
        out._backward = bwd
    return out


def check_finite(t: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite value in {where}")
    return t
