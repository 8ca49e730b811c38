"""Reverse-mode automatic differentiation over 2-D float64 numpy arrays.

A Tensor wraps one matrix. Scalars are stored as (1, 1), vectors as (1, n)
rows. Every operation creates a fresh node holding references to its parents
and a closure that maps the node's cotangent to per-parent cotangents.
backward() walks the graph once in reverse topological order, so shared
subexpressions contribute exactly once.

There is no silent broadcasting. The single allowed broadcast is adding a
(1, n) bias row to an (m, n) matrix. Everything else must match shapes
exactly or raises ShapeMismatch.
"""

from __future__ import annotations

import numpy as np

from .errors import NotScalar, ShapeMismatch

__all__ = [
    "Tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "transpose",
    "reshape",
    "slice_rows",
    "slice_cols",
    "concat_rows",
    "concat_cols",
    "sum_all",
    "mean_all",
    "row_sum",
    "mean_rows",
    "tile_rows",
    "square",
    "exp",
    "tanh",
    "sigmoid",
    "relu",
    "softmax_rows",
    "layer_norm",
    "scale",
    "col_scale",
    "clamp_away_from_zero",
    "mse_loss",
    "attention_block",
]


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeMismatch(f"tensors are 2-D; got array of ndim {arr.ndim}")
    return np.ascontiguousarray(arr)


class Tensor:
    """One node of the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_matrix(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise NotScalar(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Accumulate d(self)/d(node) into .grad over the whole graph.

        Repeated calls without clearing grads accumulate. Uses an explicit
        stack; recursion would overflow on long recurrent chains.
        """
        if self.data.size != 1:
            raise NotScalar(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        cotangent: dict[int, np.ndarray] = {id(self): np.ones((1, 1))}
        for node in reversed(order):
            g = cotangent.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                held = cotangent.get(id(parent))
                cotangent[id(parent)] = pg if held is None else held + pg

    # Operator sugar. Scalars are accepted for + - * and lifted to constants.
    def __add__(self, other):
        return add(self, _lift(other, self.shape))

    def __radd__(self, other):
        return add(_lift(other, self.shape), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self.shape))

    def __rsub__(self, other):
        return sub(_lift(other, self.shape), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(value, shape) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.full(shape, float(value)))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape == b.data.shape:
        return _node(a.data + b.data, (a, b), lambda g: (g, g))
    # bias-row broadcast, the only shape relaxation
    if b.data.shape == (1, a.data.shape[1]):
        return _node(a.data + b.data, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)))
    if a.data.shape == (1, b.data.shape[1]):
        return _node(a.data + b.data, (a, b), lambda g: (g.sum(axis=0, keepdims=True), g))
    raise ShapeMismatch(f"add: {a.data.shape} vs {b.data.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape == b.data.shape:
        return _node(a.data - b.data, (a, b), lambda g: (g, -g))
    if b.data.shape == (1, a.data.shape[1]):
        return _node(a.data - b.data, (a, b), lambda g: (g, -g.sum(axis=0, keepdims=True)))
    raise ShapeMismatch(f"sub: {a.data.shape} vs {b.data.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"mul: {a.data.shape} vs {b.data.shape}")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"div: {a.data.shape} vs {b.data.shape}")
    inv = 1.0 / b.data
    out = a.data * inv
    return _node(out, (a, b), lambda g: (g * inv, -g * out * inv))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul: {a.data.shape} @ {b.data.shape}")
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _node(np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,))


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != a.data.size:
        raise ShapeMismatch(f"reshape: {a.data.shape} has {a.data.size} entries, not {rows}x{cols}")
    shape = a.data.shape
    return _node(a.data.reshape(rows, cols).copy(), (a,), lambda g: (g.reshape(shape),))


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    m, _ = a.data.shape
    if not (0 <= start < stop <= m):
        raise ShapeMismatch(f"slice_rows: [{start}:{stop}] out of range for {a.data.shape}")

    def back(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _node(a.data[start:stop].copy(), (a,), back)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    _, n = a.data.shape
    if not (0 <= start < stop <= n):
        raise ShapeMismatch(f"slice_cols: [{start}:{stop}] out of range for {a.data.shape}")

    def back(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _node(np.ascontiguousarray(a.data[:, start:stop]), (a,), back)


def concat_rows(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat_rows: empty list")
    width = parts[0].data.shape[1]
    for p in parts:
        if p.data.shape[1] != width:
            raise ShapeMismatch(f"concat_rows: widths differ ({p.data.shape[1]} vs {width})")
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _node(np.concatenate([p.data for p in parts], axis=0), tuple(parts), back)


def concat_cols(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat_cols: empty list")
    height = parts[0].data.shape[0]
    for p in parts:
        if p.data.shape[0] != height:
            raise ShapeMismatch(f"concat_cols: heights differ ({p.data.shape[0]} vs {height})")
    sizes = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        return tuple(np.ascontiguousarray(g[:, offsets[i]:offsets[i + 1]]) for i in range(len(parts)))

    return _node(np.concatenate([p.data for p in parts], axis=1), tuple(parts), back)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _node(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    inv = 1.0 / a.data.size
    return _node(np.array([[a.data.mean()]]), (a,), lambda g: (np.full(shape, g[0, 0] * inv),))


def row_sum(a: Tensor) -> Tensor:
    """(m, n) -> (m, 1), summing each row."""
    n = a.data.shape[1]
    return _node(a.data.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, n, axis=1),))


def mean_rows(a: Tensor) -> Tensor:
    """(m, n) -> (1, n), averaging over rows. Used for sequence pooling."""
    m = a.data.shape[0]
    inv = 1.0 / m
    return _node(a.data.mean(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g * inv, m, axis=0),))


def tile_rows(a: Tensor, count: int) -> Tensor:
    if a.data.shape[0] != 1:
        raise ShapeMismatch(f"tile_rows expects a single row, got {a.data.shape}")
    return _node(np.repeat(a.data, count, axis=0), (a,), lambda g: (g.sum(axis=0, keepdims=True),))


def square(a: Tensor) -> Tensor:
    return _node(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, shift-stabilized. Fused forward and backward."""
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (a,), back)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean, unit variance, then affine."""
    n = x.data.shape[1]
    if gain.data.shape != (1, n) or shift.data.shape != (1, n):
        raise ShapeMismatch(
            f"layer_norm: affine rows must be (1, {n}), got {gain.data.shape} and {shift.data.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + shift.data

    def back(g):
        dxhat = g * gain.data
        # standard layer-norm backward: remove the mean and the xhat-aligned
        # component before rescaling
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        dgain = (g * xhat).sum(axis=0, keepdims=True)
        dshift = g.sum(axis=0, keepdims=True)
        return (dx, dgain, dshift)

    return _node(out, (x, gain, shift), back)


def col_scale(a: Tensor, factors) -> Tensor:
    """Multiply each column by a fixed constant. Not differentiable in factors."""
    f = np.asarray(factors, dtype=np.float64).reshape(1, -1)
    if f.shape[1] != a.data.shape[1]:
        raise ShapeMismatch(f"col_scale: {f.shape[1]} factors for {a.data.shape[1]} columns")
    return _node(a.data * f, (a,), lambda g: (g * f,))


def clamp_away_from_zero(a: Tensor, eps: float) -> Tensor:
    """Sign-preserving clamp: |out| >= eps everywhere. Zeros clamp to +eps.

    The backward pass masks clamped entries, so gradients never blow up
    through near-zero denominators.
    """
    sign = np.where(a.data < 0.0, -1.0, 1.0)
    mask = np.abs(a.data) >= eps
    out = np.where(mask, a.data, sign * eps)
    return _node(out, (a,), lambda g: (g * mask,))


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all entries of the squared difference. Returns a scalar."""
    if not isinstance(target, Tensor):
        target = Tensor(target)
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch(f"mse_loss: {pred.data.shape} vs {target.data.shape}")
    diff = pred.data - target.data
    inv = 2.0 / diff.size
    out = np.array([[(diff * diff).mean()]])

    def back(g):
        d = g[0, 0] * inv * diff
        return (d, -d)

    return _node(out, (pred, target), back)


def attention_block(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Scaled dot-product attention for one head.

    q, k, v are (T, d). Scores are scaled by 1/sqrt(d) before the row-wise
    softmax, and rows of the result are convex combinations of v rows.
    """
    if q.data.shape[1] != k.data.shape[1]:
        raise ShapeMismatch(f"attention: query dim {q.data.shape} vs key dim {k.data.shape}")
    if k.data.shape[0] != v.data.shape[0]:
        raise ShapeMismatch(f"attention: {k.data.shape[0]} keys vs {v.data.shape[0]} values")
    d = q.data.shape[1]
    scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(d))
    return matmul(softmax_rows(scores), v)
