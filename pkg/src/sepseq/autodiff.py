"""Reverse-mode differentiation over a fixed primitive set.

The model needs exactly: matrix products (2-D and stacked 3-D), elementwise
add/multiply, sigmoid, tanh, softmax, concatenation, slicing, reshape and a
mean-square reduction. Each primitive records its analytic adjoint on a tape;
``backward`` replays the tape in reverse topological order. There is no
general broadcasting or op registration -- the architecture is closed, so the
op set is too.

Everything is float64. Tensors built from ops whose operands carry no
gradient requirement stay off the tape, which makes inference allocation-free
apart from the numpy work itself.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


class Tensor:
    """A numpy array plus the tape bookkeeping needed for backward."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar over the module-level primitives
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every tape ancestor."""
        if self.data.shape != ():
            raise ShapeMismatch(
                f"backward requires a scalar root, got shape {self.data.shape}"
            )
        order = _toposort(self)
        self.grad = np.ones(())
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS: graphs unroll over hundreds of time steps, far past the
    # recursion limit.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def as_tensor(x) -> Tensor:
    """Wrap arrays/scalars as constant tensors; pass tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad or t._backward is not None:
        t.grad = g if t.grad is None else t.grad + g


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._backward is not None for p in parents):
        out._parents = parents
        out._backward = backward
    return out


# --- primitives --------------------------------------------------------------

def add(a, b) -> Tensor:
    """Elementwise sum; also accepts a trailing-axis bias vector or a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data
    if x.shape != y.shape and y.shape != x.shape[-1:] and y.shape != ():
        raise ShapeMismatch(f"add: {x.shape} vs {y.shape}")
    out_data = x + y

    def backward(g):
        _accum(a, g)
        if y.shape == x.shape:
            _accum(b, g)
        elif y.shape == ():
            _accum(b, np.sum(g))
        else:  # bias broadcast over leading axes
            _accum(b, g.reshape(-1, y.shape[0]).sum(axis=0))

    return _node(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data
    if x.shape != y.shape and y.shape != ():
        raise ShapeMismatch(f"sub: {x.shape} vs {y.shape}")
    out_data = x - y

    def backward(g):
        _accum(a, g)
        _accum(b, -np.sum(g) if y.shape == () else -g)

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    """Elementwise product of equal shapes, or tensor-times-scalar."""
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data
    if x.shape != y.shape and y.shape != () and x.shape != ():
        raise ShapeMismatch(f"mul: {x.shape} vs {y.shape}")
    out_data = x * y

    def backward(g):
        ga = g * y
        gb = g * x
        _accum(a, np.sum(ga) if x.shape == () else ga)
        _accum(b, np.sum(gb) if y.shape == () else gb)

    return _node(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """Matrix-vector, matrix-matrix, or stacked (3-D) matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    x, y = a.data, b.data
    if not (
        (x.ndim == 2 and y.ndim == 2 and x.shape[1] == y.shape[0])
        or (x.ndim == 2 and y.ndim == 1 and x.shape[1] == y.shape[0])
        or (x.ndim == 1 and y.ndim == 2 and x.shape[0] == y.shape[0])
        or (
            x.ndim == 3
            and y.ndim == 3
            and x.shape[0] == y.shape[0]
            and x.shape[2] == y.shape[1]
        )
    ):
        raise ShapeMismatch(f"matmul: {x.shape} @ {y.shape}")
    out_data = x @ y

    def backward(g):
        if x.ndim == 2 and y.ndim == 2:
            _accum(a, g @ y.T)
            _accum(b, x.T @ g)
        elif x.ndim == 2 and y.ndim == 1:
            _accum(a, np.outer(g, y))
            _accum(b, x.T @ g)
        elif x.ndim == 1:
            _accum(a, g @ y.T)
            _accum(b, np.outer(x, g))
        else:  # stacked 3-D
            _accum(a, g @ np.swapaxes(y, -1, -2))
            _accum(b, np.swapaxes(x, -1, -2) @ g)

    return _node(out_data, (a, b), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    # evaluate exp only on the stable side
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), backward)


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - np.max(a.data, axis=-1, keepdims=True)
    ez = np.exp(z)
    out_data = ez / np.sum(ez, axis=-1, keepdims=True)

    def backward(g):
        inner = np.sum(g * out_data, axis=-1, keepdims=True)
        _accum(a, out_data * (g - inner))

    return _node(out_data, (a,), backward)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeMismatch("concat of zero tensors")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def backward(g):
        offset = 0
        for p, size in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offset, offset + size)
            _accum(p, g[tuple(idx)])
            offset += size

    return _node(out_data, tuple(parts), backward)


def take(a, idx) -> Tensor:
    """Basic indexing/slicing; adjoint scatters into a zero buffer."""
    a = as_tensor(a)
    out_data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accum(a, buf)

    return _node(out_data, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    in_shape = a.data.shape
    out_data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(in_shape))

    return _node(out_data, (a,), backward)


def mse_loss(pred, obs) -> Tensor:
    """Mean squared error over all entries: (1/n) * sum((pred - obs)^2)."""
    pred, obs = as_tensor(pred), as_tensor(obs)
    if pred.data.shape != obs.data.shape:
        raise ShapeMismatch(f"mse_loss: {pred.data.shape} vs {obs.data.shape}")
    diff = pred.data - obs.data
    n = diff.size
    if n == 0:
        raise ShapeMismatch("mse_loss of empty operands")
    out_data = np.asarray((diff * diff).sum() / n)

    def backward(g):
        scaled = (2.0 / n) * g * diff
        _accum(pred, scaled)
        _accum(obs, -scaled)

    return _node(out_data, (pred, obs), backward)
