"""Dense 2-d tensors with a define-by-run reverse-mode tape.

A fresh :class:`Tape` is created for every forward pass. Parameters enter the
tape through :meth:`Tape.leaf`; every op whose inputs live on a tape records a
node holding its input ids and a closure mapping the output gradient to input
gradients. Ops on tape-free tensors just compute values.
"""

import os

import numpy as np

from .errors import EmptyBatchError, NumericError, ShapeError

DEBUG = os.environ.get("GSWGAN_DEBUG", "") not in ("", "0")


def set_debug(flag: bool) -> None:
    """Toggle the non-finite guard run at every op boundary."""
    global DEBUG
    DEBUG = bool(flag)


class Tensor:
    __slots__ = ("data", "grad", "tape", "node")

    def __init__(self, data, tape=None, node=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-d, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.tape = tape
        self.node = node

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor({self.rows}x{self.cols}, node={self.node})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only record of (op kind, input node ids, backward closure)."""

    def __init__(self):
        self.nodes = []
        self.tensors = []

    def leaf(self, value) -> Tensor:
        """Register a parameter. The tensor shares memory with ``value``."""
        arr = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=np.float64)
        t = Tensor(arr, self, len(self.nodes))
        self.nodes.append(("leaf", (), None))
        self.tensors.append(t)
        return t

    def record(self, kind, inputs, value, backward_fn) -> Tensor:
        ids = tuple(x.node if x.tape is self else None for x in inputs)
        t = Tensor(value, self, len(self.nodes))
        self.nodes.append((kind, ids, backward_fn))
        self.tensors.append(t)
        return t


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(*xs):
    tape = None
    for x in xs:
        if x.tape is not None:
            if tape is not None and x.tape is not tape:
                raise ValueError("inputs recorded on different tapes")
            tape = x.tape
    return tape


def _check(kind, value):
    if DEBUG and not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite output from {kind}")


def _emit(kind, inputs, value, backward_fn):
    if DEBUG:
        for x in inputs:
            _check(kind + " input", x.data)
        _check(kind, value)
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(value)
    return tape.record(kind, inputs, value, backward_fn)


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def back(g):
        return g @ B.T, A.T @ g

    return _emit("matmul", (a, b), A @ B, back)


def affine(x, w, b) -> Tensor:
    x, w, b = _t(x), _t(w), _t(b)
    if x.cols != w.rows or b.shape != (1, w.cols):
        raise ShapeError(f"affine: x {x.shape}, w {w.shape}, b {b.shape}")
    X, W = x.data, w.data

    def back(g):
        return g @ W.T, X.T @ g, g.sum(axis=0, keepdims=True)

    return _emit("affine", (x, w, b), X @ W + b.data, back)


def relu(x) -> Tensor:
    x = _t(x)
    mask = x.data > 0.0

    def back(g):
        return (g * mask,)

    return _emit("relu", (x,), np.where(mask, x.data, 0.0), back)


def tanh_act(x) -> Tensor:
    x = _t(x)
    y = np.tanh(x.data)

    def back(g):
        return (g * (1.0 - y * y),)

    return _emit("tanh", (x,), y, back)


def groupsort2(x) -> Tensor:
    """Sort each consecutive coordinate pair of every row into (max, min).

    On ties the first coordinate is treated as the max, so its gradient comes
    from the max slot.
    """
    x = _t(x)
    m, w = x.shape
    if w % 2:
        raise ShapeError(f"groupsort2 needs an even width, got {w}")
    pairs = x.data.reshape(m, w // 2, 2)
    first, second = pairs[:, :, 0], pairs[:, :, 1]
    keep = first >= second
    out = np.empty_like(pairs)
    out[:, :, 0] = np.where(keep, first, second)
    out[:, :, 1] = np.where(keep, second, first)

    def back(g):
        g = g.reshape(m, w // 2, 2)
        gin = np.empty_like(g)
        gin[:, :, 0] = np.where(keep, g[:, :, 0], g[:, :, 1])
        gin[:, :, 1] = np.where(keep, g[:, :, 1], g[:, :, 0])
        return (gin.reshape(m, w),)

    return _emit("groupsort2", (x,), out.reshape(m, w), back)


def take_rows(x, start: int, stop: int) -> Tensor:
    """Rows ``start:stop`` of ``x``."""
    x = _t(x)
    if not 0 <= start <= stop <= x.rows:
        raise ShapeError(f"row slice {start}:{stop} out of range for {x.shape}")
    shape = x.shape

    def back(g):
        gin = np.zeros(shape)
        gin[start:stop] = g
        return (gin,)

    return _emit("rows", (x,), x.data[start:stop].copy(), back)


def reduce_mean(x) -> Tensor:
    x = _t(x)
    if x.cols != 1:
        raise ShapeError(f"reduce_mean expects a column vector, got {x.shape}")
    m = x.rows
    if m == 0:
        raise EmptyBatchError("reduce_mean of an empty batch")

    def back(g):
        return (np.full((m, 1), g[0, 0] / m),)

    return _emit("mean", (x,), np.array([[x.data.mean()]]), back)


def sum_all(x) -> Tensor:
    x = _t(x)
    shape = x.shape

    def back(g):
        return (np.full(shape, g[0, 0]),)

    return _emit("sum", (x,), np.array([[x.data.sum()]]), back)


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")

    def back(g):
        return g, g

    return _emit("add", (a, b), a.data + b.data, back)


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}")

    def back(g):
        return g, -g

    return _emit("sub", (a, b), a.data - b.data, back)


def mul(a, b) -> Tensor:
    """Elementwise product."""
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    A, B = a.data, b.data

    def back(g):
        return g * B, g * A

    return _emit("mul", (a, b), A * B, back)


def scale(x, c: float) -> Tensor:
    x = _t(x)
    c = float(c)

    def back(g):
        return (g * c,)

    return _emit("scale", (x,), x.data * c, back)


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Returns a map node id -> gradient for every node on the loss's tape and
    sets ``.grad`` on each recorded tensor. Nodes the loss does not depend on
    get exact zeros. Calling it again on the same tape gives the same result.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar loss, got {loss.shape}")
    tape = loss.tape
    if tape is None:
        raise ValueError("loss is not on a tape")
    nodes = tape.nodes
    grads = [None] * len(nodes)
    grads[loss.node] = np.ones((1, 1))
    for i in range(loss.node, -1, -1):
        g = grads[i]
        if g is None:
            continue
        _, inputs, fn = nodes[i]
        if fn is None:
            continue
        for j, gj in zip(inputs, fn(g)):
            if j is None:
                continue
            grads[j] = gj if grads[j] is None else grads[j] + gj
    out = {}
    for t in tape.tensors:
        g = grads[t.node]
        if g is None:
            g = np.zeros_like(t.data)
        if DEBUG and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at node {t.node} ({nodes[t.node][0]})")
        t.grad = g
        out[t.node] = g
    return out
