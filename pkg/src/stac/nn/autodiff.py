"""Reverse-mode automatic differentiation over numpy arrays.

Every op returns a `Node` holding its forward value and a closure that pushes
the adjoint back to its parents. `backward` walks the graph once in reverse
topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class ShapeMismatch(ValueError):
    pass


class NonScalarLoss(ValueError):
    pass


def set_default_dtype(dtype) -> None:
    global DTYPE
    DTYPE = np.dtype(dtype).type


class Node:
    __slots__ = ("value", "grad", "parents", "op", "_backward", "requires_grad", "name")

    def __init__(self, value, parents: tuple["Node", ...] = (), op: str = "const",
                 backward: Callable[[np.ndarray], None] | None = None,
                 requires_grad: bool | None = None, name: str | None = None):
        self.value = np.asarray(value, dtype=DTYPE) if not isinstance(value, np.ndarray) else value
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.op = op
        self._backward = backward
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_node(other), -1.0))

    def __rsub__(self, other):
        return add(as_node(other), scale(self, -1.0))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Node):
    """A trainable leaf; `value` is updated in place by optimizers."""

    __slots__ = ()

    def __init__(self, value, name: str | None = None):
        super().__init__(np.array(value, dtype=DTYPE), (), "param", None, True, name)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(np.asarray(x, dtype=DTYPE), requires_grad=False)


def _acc(node: Node, g: np.ndarray) -> None:
    if not node.requires_grad:
        return
    node.grad = g if node.grad is None else node.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- ops -------------------------------------------------------------------------


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        out = a.value + b.value
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return Node(out, (a, b), "add", bw)


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    try:
        out = a.value * b.value
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None

    def bw(g):
        _acc(a, _unbroadcast(g * b.value, a.shape))
        _acc(b, _unbroadcast(g * a.value, b.shape))

    return Node(out, (a, b), "mul", bw)


def scale(a, c: float) -> Node:
    a = as_node(a)
    return Node(a.value * c, (a,), "scale", lambda g: _acc(a, g * c))


def matmul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    if a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    out = a.value @ b.value

    def bw(g):
        if a.requires_grad:
            _acc(a, g @ b.value.T)
        if b.requires_grad:
            _acc(b, a.value.T @ g if a.value.ndim > 1 else np.outer(a.value, g))

    return Node(out, (a, b), "matmul", bw)


def linear(x, w, b) -> Node:
    """x @ w.T + b for x of shape (batch, in), w (out, in), b (out,)."""
    x, w, b = as_node(x), as_node(w), as_node(b)
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"linear x{x.shape} w{w.shape} b{b.shape}")
    out = x.value @ w.value.T + b.value

    def bw(g):
        if x.requires_grad:
            _acc(x, g @ w.value)
        if w.requires_grad:
            _acc(w, g.T @ x.value)
        if b.requires_grad:
            _acc(b, g.sum(axis=0))

    return Node(out, (x, w, b), "linear", bw)


def relu(a) -> Node:
    a = as_node(a)
    pos = a.value > 0
    return Node(a.value * pos, (a,), "relu", lambda g: _acc(a, g * pos))


def square(a) -> Node:
    a = as_node(a)
    return Node(a.value * a.value, (a,), "square", lambda g: _acc(a, 2.0 * a.value * g))


def logsoftmax(a, mask: np.ndarray | None = None) -> Node:
    """Log-softmax over the last axis; masked-out slots get -inf-free log 0 as 0.

    With a boolean `mask`, excluded entries do not take part in the
    normalization and their output is set to 0 (their probability is 0).
    """
    a = as_node(a)
    z = a.value
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    m = np.max(z, axis=-1, keepdims=True)
    e = np.exp(z - m)
    s = e.sum(axis=-1, keepdims=True)
    p = e / s
    out = z - m - np.log(s)
    if mask is not None:
        out = np.where(mask, out, 0.0)

    def bw(g):
        if mask is not None:
            g = np.where(mask, g, 0.0)
        _acc(a, g - p * g.sum(axis=-1, keepdims=True))

    return Node(out, (a,), "logsoftmax", bw)


def softmax(a, mask: np.ndarray | None = None) -> Node:
    a = as_node(a)
    z = a.value
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    m = np.max(z, axis=-1, keepdims=True)
    e = np.exp(z - m)
    p = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        _acc(a, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return Node(p, (a,), "softmax", bw)


def sum_(a, axis: int | None = None) -> Node:
    a = as_node(a)
    out = a.value.sum(axis=axis)

    def bw(g):
        if axis is None:
            _acc(a, np.broadcast_to(g, a.shape))
        else:
            _acc(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return Node(np.asarray(out), (a,), "sum", bw)


def mean(a, axis: int | None = None) -> Node:
    a = as_node(a)
    n = a.value.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis), 1.0 / n)


def minimum(a, b) -> Node:
    """Elementwise min; ties route the adjoint to the first argument."""
    a, b = as_node(a), as_node(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"minimum {a.shape} vs {b.shape}")
    first = a.value <= b.value
    out = np.where(first, a.value, b.value)

    def bw(g):
        _acc(a, np.where(first, g, 0.0))
        _acc(b, np.where(first, 0.0, g))

    return Node(out, (a, b), "min", bw)


def concat(nodes: Sequence, axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    out = np.concatenate([n.value for n in nodes], axis=axis)
    cuts = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def bw(g):
        for n, piece in zip(nodes, np.split(g, cuts, axis=axis)):
            _acc(n, piece)

    return Node(out, tuple(nodes), "concat", bw)


def gather(a, idx: np.ndarray) -> Node:
    """Row-wise pick: out[i] = a[i, idx[i]]."""
    a = as_node(a)
    rows = np.arange(a.shape[0])
    out = a.value[rows, idx]

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, (rows, idx), g)
        _acc(a, full)

    return Node(out, (a,), "gather", bw)


def reshape(a, shape: tuple[int, ...]) -> Node:
    a = as_node(a)
    try:
        out = a.value.reshape(shape)
    except ValueError as e:
        raise ShapeMismatch(str(e)) from None
    return Node(out, (a,), "reshape", lambda g: _acc(a, g.reshape(a.shape)))


def index_rows(a, rows: np.ndarray) -> Node:
    a = as_node(a)

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, rows, g)
        _acc(a, full)

    return Node(a.value[rows], (a,), "rows", bw)


def stop_gradient(a) -> Node:
    return Node(as_node(a).value, requires_grad=False)


# -- backward pass -------------------------------------------------------------


def _topo(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Node, params: Iterable[Node] | None = None) -> list[np.ndarray] | None:
    """Accumulate d(loss)/d(node) into `.grad` for every node needing it.

    Gradients of leaves are accumulated, so zero them (`zero_grad`) between
    steps. With `params`, returns their gradients, zeros for disconnected ones.
    """
    if loss.value.size != 1:
        raise NonScalarLoss(f"loss has shape {loss.shape}")
    order = _topo(loss)
    for n in order:
        if n.parents:
            n.grad = None
    loss.grad = np.ones_like(loss.value)
    for n in reversed(order):
        if n._backward is not None and n.grad is not None:
            n._backward(n.grad)
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in params]


def zero_grad(params: Iterable[Node]) -> None:
    for p in params:
        p.grad = None
