"""Dense tensors with reverse-mode automatic differentiation.

Values are numpy arrays (float32 by default, float64 under
``precision("float64")`` for gradient-check runs). Every operation records
a GraphNode holding the result, its operation tag, its parents and the
vector-Jacobian products used by :func:`backward`.

A graph instance is single-writer: forward recording and backward traversal
must not run concurrently. Value arrays are never mutated by operations and
are safe to share read-only across threads.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "GraphNode",
    "Parameter",
    "ShapeError",
    "add",
    "as_node",
    "backward",
    "clip",
    "concat_channels",
    "constant",
    "div",
    "finite_diff_check",
    "get_default_dtype",
    "log",
    "mean",
    "mul",
    "neg",
    "power",
    "precision",
    "relu",
    "set_debug_checks",
    "set_default_dtype",
    "sigmoid",
    "softmax_channels",
    "sub",
    "sum_all",
    "take_channel",
]

_default_dtype = np.float32
_debug_checks = False


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _default_dtype = dtype.type


def get_default_dtype():
    return _default_dtype


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default dtype, e.g. precision("float64")."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def set_debug_checks(enabled: bool) -> None:
    """Check every operation result for NaN/Inf (debug builds only)."""
    global _debug_checks
    _debug_checks = bool(enabled)


class GraphNode:
    """One recorded value in the computation graph.

    ``vjps`` is a tuple of (parent, fn) pairs where fn maps the gradient at
    this node to the gradient contribution for that parent.
    """

    __slots__ = ("value", "op", "parents", "grad", "trainable", "_vjps")

    def __init__(self, value, op: str = "leaf", vjps=(), trainable: bool = False):
        if op in ("leaf", "param", "const"):
            value = np.asarray(value, dtype=_default_dtype)
        self.value = value
        self.op = op
        self.parents = tuple(parent for parent, _ in vjps)
        self._vjps = tuple(vjps)
        self.grad = None
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"GraphNode(op={self.op!r}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)


class Parameter:
    """A named trainable leaf; names are unique path-like strings."""

    __slots__ = ("name", "node")

    def __init__(self, name: str, value):
        self.name = name
        self.node = GraphNode(value, op="param", trainable=True)

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @value.setter
    def value(self, new):
        self.node.value = np.asarray(new, dtype=self.node.value.dtype)

    @property
    def grad(self):
        return self.node.grad

    @property
    def shape(self):
        return self.node.value.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.node.value.shape})"


def constant(value) -> GraphNode:
    """Wrap a raw array as a non-trainable graph leaf."""
    return GraphNode(value, op="const")


def as_node(x) -> GraphNode:
    return x if isinstance(x, GraphNode) else constant(x)


def _make(value, op: str, vjps) -> GraphNode:
    if _debug_checks and not np.all(np.isfinite(value)):
        raise ArithmeticError(f"non-finite values produced by op '{op}'")
    return GraphNode(value, op=op, vjps=vjps)


def _check_broadcast(sa, sb, op):
    # Singleton-dimension expansion only; ranks must match.
    if sa == sb:
        return
    if len(sa) != len(sb) or any(
        a != b and a != 1 and b != 1 for a, b in zip(sa, sb)
    ):
        raise ShapeError(f"{op}: shapes {sa} and {sb} are not broadcastable")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    return grad.sum(axis=axes, keepdims=True)


def _binary(op, a, b, value_fn, vjp_a, vjp_b):
    if not isinstance(a, GraphNode) and not isinstance(b, GraphNode):
        raise TypeError(f"{op}: at least one operand must be a GraphNode")
    # Python scalars stay raw constants; arrays become const leaves.
    a_scalar = isinstance(a, (int, float))
    b_scalar = isinstance(b, (int, float))
    if not a_scalar:
        a = as_node(a)
    if not b_scalar:
        b = as_node(b)
    if not a_scalar and not b_scalar:
        _check_broadcast(a.value.shape, b.value.shape, op)
    av = a if a_scalar else a.value
    bv = b if b_scalar else b.value
    value = value_fn(av, bv)
    vjps = []
    if not a_scalar:
        sa = a.value.shape
        vjps.append((a, lambda g, av=av, bv=bv, sa=sa: _reduce_to(vjp_a(g, av, bv), sa)))
    if not b_scalar:
        sb = b.value.shape
        vjps.append((b, lambda g, av=av, bv=bv, sb=sb: _reduce_to(vjp_b(g, av, bv), sb)))
    return _make(value, op, vjps)


def add(a, b) -> GraphNode:
    return _binary("add", a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> GraphNode:
    return _binary("sub", a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b) -> GraphNode:
    return _binary("mul", a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> GraphNode:
    return _binary("div", a, b, lambda x, y: x / y,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def neg(x: GraphNode) -> GraphNode:
    x = as_node(x)
    return _make(-x.value, "neg", [(x, lambda g: -g)])


def power(x: GraphNode, exponent: float) -> GraphNode:
    """Elementwise x**p for a fixed scalar exponent."""
    x = as_node(x)
    p = float(exponent)
    value = x.value ** p
    return _make(value, "pow", [(x, lambda g: g * p * x.value ** (p - 1.0))])


def log(x: GraphNode) -> GraphNode:
    x = as_node(x)
    return _make(np.log(x.value), "log", [(x, lambda g: g / x.value)])


def clip(x: GraphNode, lo: float, hi: float) -> GraphNode:
    """Clamp to [lo, hi]; gradient passes only strictly inside the interval."""
    x = as_node(x)
    value = np.clip(x.value, lo, hi)
    inside = (x.value > lo) & (x.value < hi)
    return _make(value, "clip", [(x, lambda g: g * inside)])


def relu(x: GraphNode) -> GraphNode:
    x = as_node(x)
    value = np.maximum(x.value, 0.0)
    mask = x.value > 0
    return _make(value, "relu", [(x, lambda g: g * mask)])


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch on sign to avoid exp overflow.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: GraphNode) -> GraphNode:
    x = as_node(x)
    s = _sigmoid(x.value)
    return _make(s, "sigmoid", [(x, lambda g: g * s * (1.0 - s))])


def softmax_channels(x: GraphNode) -> GraphNode:
    """Softmax over the last (channel) axis; needs >= 2 channels."""
    x = as_node(x)
    if x.value.shape[-1] < 2:
        raise ShapeError(f"softmax needs a channel axis of size >= 2, got {x.value.shape}")
    shifted = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return s * (g - (g * s).sum(axis=-1, keepdims=True))

    return _make(s, "softmax_ch", [(x, vjp)])


def sum_all(x: GraphNode) -> GraphNode:
    x = as_node(x)
    shape = x.value.shape
    return _make(np.sum(x.value), "sum", [(x, lambda g: np.broadcast_to(g, shape))])


def mean(x: GraphNode) -> GraphNode:
    x = as_node(x)
    return mul(sum_all(x), 1.0 / x.value.size)


def take_channel(x: GraphNode, index: int) -> GraphNode:
    """Select one channel from the last axis, dropping the axis."""
    x = as_node(x)
    value = x.value[..., index]

    def vjp(g):
        out = np.zeros_like(x.value)
        out[..., index] = g
        return out

    return _make(value, "take_ch", [(x, vjp)])


def concat_channels(a: GraphNode, b: GraphNode) -> GraphNode:
    a, b = as_node(a), as_node(b)
    if a.value.shape[:-1] != b.value.shape[:-1]:
        raise ShapeError(
            f"concat: leading dims differ, {a.value.shape} vs {b.value.shape}")
    ca = a.value.shape[-1]
    value = np.concatenate([a.value, b.value], axis=-1)
    return _make(value, "concat_ch", [
        (a, lambda g: g[..., :ca]),
        (b, lambda g: g[..., ca:]),
    ])


def _toposort(root: GraphNode) -> list:
    """Iterative post-order over the ancestors of root (acyclic by construction)."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: GraphNode, parameters: Iterable[Parameter] = ()) -> dict:
    """Reverse-mode sweep from a scalar loss.

    Populates ``grad`` on every node reachable from ``loss`` and returns a
    {name: gradient array} map for the given parameters; parameters not
    reachable from the loss get zero gradients. Deterministic: a fixed
    traversal and accumulation order makes repeat runs bit-identical.
    """
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order = _toposort(loss)
    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        for parent, vjp in node._vjps:
            contribution = vjp(g)
            key = id(parent)
            existing = grads.get(key)
            grads[key] = contribution if existing is None else existing + contribution
    reached = {id(node) for node in order}
    result = {}
    for p in parameters:
        if id(p.node) in reached and p.node.grad is not None:
            result[p.name] = p.node.grad
        else:
            result[p.name] = np.zeros_like(p.node.value)
    return result


def finite_diff_check(f: Callable[[GraphNode], GraphNode], x, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a leaf node to a scalar node. Requires float64 mode. Elements
    where the one-sided differences disagree (a kink between x-h and x+h,
    e.g. relu at 0) are excluded from the comparison.
    """
    if _default_dtype is not np.float64:
        raise RuntimeError("finite_diff_check requires precision('float64')")
    x = np.asarray(x, dtype=np.float64)

    leaf = GraphNode(x, op="leaf", trainable=True)
    out = f(leaf)
    if out.value.size != 1:
        raise ShapeError(f"f must return a scalar, got shape {out.value.shape}")
    f0 = float(out.value)
    backward(out)
    analytic = leaf.grad.ravel()

    flat = x.ravel()
    central = np.empty_like(flat)
    kink = np.zeros(flat.size, dtype=bool)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        f_plus = float(f(GraphNode(bumped.reshape(x.shape), op="leaf")).value)
        bumped[i] = flat[i] - step
        f_minus = float(f(GraphNode(bumped.reshape(x.shape), op="leaf")).value)
        central[i] = (f_plus - f_minus) / (2.0 * step)
        forward_d = (f_plus - f0) / step
        backward_d = (f0 - f_minus) / step
        scale = max(abs(forward_d), abs(backward_d), 1.0)
        kink[i] = abs(forward_d - backward_d) > 0.05 * scale
    if not (np.isfinite(f0) and np.all(np.isfinite(central)) and np.all(np.isfinite(analytic))):
        raise ArithmeticError("non-finite value encountered during finite_diff_check")

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(central)), 1e-8)
    rel = np.abs(analytic - central) / denom
    rel[kink] = 0.0
    return float(rel.max()) if rel.size else 0.0
