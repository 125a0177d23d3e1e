"""Reverse-mode automatic differentiation on dense float64 arrays.

A Graph records primitive operations in creation order, which is a valid
topological order by construction. Values are computed eagerly on node
creation; evaluate() performs the finiteness audit and unlocks backward(),
which walks the tape in exact reverse creation order so gradient
accumulation is deterministic.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested primitive."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared in the computation graph."""


class GraphStateError(RuntimeError):
    """Graph API used out of order (e.g. backward before evaluate)."""


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


class Tensor:
    """One node of a computation graph holding a float64 ndarray value.

    Leaves are created through Graph.leaf(); interior nodes through the
    primitive functions below. Values are immutable after construction.
    """

    __slots__ = ("graph", "idx", "op", "value", "requires_grad", "parents", "_vjp")

    def __init__(self, graph, op, value, parents, vjp, requires_grad):
        self.graph = graph
        self.op = op
        self.value = value
        self.parents = parents
        self._vjp = vjp
        self.requires_grad = requires_grad
        self.idx = graph._register(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_leaf(self):
        return self.op.startswith("leaf")

    def __repr__(self):
        return f"Tensor(idx={self.idx}, op={self.op!r}, shape={self.value.shape})"

    # operator sugar; scalars are folded into the op, not new nodes
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return rsub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return rdiv(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def reshape(self, shape):
        return reshape(self, shape)


class Graph:
    """Ordered tape of Tensor nodes; single-threaded during use."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._checked_upto = 0  # nodes [0, _checked_upto) audited finite
        self.evaluated = False

    def _register(self, node: Tensor) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def leaf(self, data, requires_grad: bool = False, name: str = "") -> Tensor:
        value = _as_f64(data)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"leaf tensor {name!r} contains non-finite values")
        op = f"leaf:{name}" if name else "leaf"
        return Tensor(self, op, value, (), None, bool(requires_grad))

    def constant(self, data, name: str = "") -> Tensor:
        return self.leaf(data, requires_grad=False, name=name)


def evaluate(graph: Graph, node: Tensor) -> np.ndarray:
    """Audit every node up to `node` for finiteness and return its value.

    Raises NonFiniteError naming the first offending node. Marks the graph
    evaluated, which is the precondition for backward().
    """
    if node.graph is not graph:
        raise GraphStateError("node does not belong to this graph")
    upto = node.idx + 1
    for i in range(graph._checked_upto, upto):
        n = graph.nodes[i]
        if not np.all(np.isfinite(n.value)):
            raise NonFiniteError(
                f"non-finite value at node {i} (op={n.op}, shape={n.value.shape})"
            )
    graph._checked_upto = max(graph._checked_upto, upto)
    graph.evaluated = True
    return node.value


def backward(graph: Graph, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse accumulation from a scalar loss node.

    Returns {leaf Tensor: gradient array} for every leaf with
    requires_grad; leaves without the flag are absent. Visits nodes in
    exact reverse creation order, so accumulation is deterministic.
    """
    if loss.graph is not graph:
        raise GraphStateError("loss node does not belong to this graph")
    if not graph.evaluated or loss.idx >= graph._checked_upto:
        raise GraphStateError("backward() requires evaluate() on the loss node first")
    if loss.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")

    grads: dict[int, np.ndarray] = {loss.idx: np.ones_like(loss.value)}
    result: dict[Tensor, np.ndarray] = {}
    for i in range(loss.idx, -1, -1):
        node = graph.nodes[i]
        g = grads.pop(i, None)
        if g is None or not node.requires_grad:
            continue
        if node.is_leaf:
            result[node] = g
            continue
        for parent, pgrad in zip(node.parents, node._vjp(g)):
            if pgrad is None or not parent.requires_grad:
                continue
            if parent.idx in grads:
                grads[parent.idx] = grads[parent.idx] + pgrad
            else:
                grads[parent.idx] = pgrad
    # leaves reachable only through grad-free paths still get explicit zeros
    for i in range(loss.idx + 1):
        node = graph.nodes[i]
        if node.is_leaf and node.requires_grad and node not in result:
            result[node] = np.zeros_like(node.value)
    return result


# ---------------------------------------------------------------------------
# primitive construction helpers

def _node(op, value, parents, vjp):
    graph = parents[0].graph
    for p in parents[1:]:
        if p.graph is not graph:
            raise GraphStateError(f"{op}: operands from different graphs")
    rg = any(p.requires_grad for p in parents)
    return Tensor(graph, op, value, parents, vjp if rg else None, rg)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _check_elementwise(op, a, b):
    try:
        np.broadcast_shapes(a.value.shape, b.value.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: shapes {a.value.shape} and {b.value.shape} do not broadcast"
        ) from None


# ---------------------------------------------------------------------------
# elementwise arithmetic (Python scalars fold into the op)

def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return _node("add", a.value + float(b), (a,), lambda g: (g,))
    _check_elementwise("add", a, b)
    return _node(
        "add",
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return _node("sub", a.value - float(b), (a,), lambda g: (g,))
    _check_elementwise("sub", a, b)
    return _node(
        "sub",
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
    )


def rsub(a: Tensor, scalar) -> Tensor:
    return _node("rsub", float(scalar) - a.value, (a,), lambda g: (-g,))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        return _node("mul", a.value * s, (a,), lambda g: (g * s,))
    _check_elementwise("mul", a, b)
    return _node(
        "mul",
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        return _node("div", a.value / s, (a,), lambda g: (g / s,))
    _check_elementwise("div", a, b)
    return _node(
        "div",
        a.value / b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.value.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def rdiv(a: Tensor, scalar) -> Tensor:
    s = float(scalar)
    return _node(
        "rdiv", s / a.value, (a,), lambda g: (-g * s / (a.value * a.value),)
    )


# ---------------------------------------------------------------------------
# nonlinear elementwise

def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _node("relu", np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sin(a: Tensor) -> Tensor:
    return _node("sin", np.sin(a.value), (a,), lambda g: (g * np.cos(a.value),))


def cos(a: Tensor) -> Tensor:
    return _node("cos", np.cos(a.value), (a,), lambda g: (-g * np.sin(a.value),))


def square(a: Tensor) -> Tensor:
    return _node("square", a.value * a.value, (a,), lambda g: (g * (2.0 * a.value),))


def sqrt(a: Tensor) -> Tensor:
    # domain errors surface as NonFiniteError at evaluate(), not as warnings
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sqrt(a.value)
    return _node("sqrt", out, (a,), lambda g: (g * (0.5 / out),))


def log(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(a.value)
    return _node("log", out, (a,), lambda g: (g / a.value,))


def clip01(a: Tensor) -> Tensor:
    """max(0, min(1, x)) built from relu: relu(x) - relu(x - 1)."""
    return sub(relu(a), relu(sub(a, 1.0)))


# ---------------------------------------------------------------------------
# structural ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeError(
            f"matmul: operands must be at least 2-D, got {a.value.shape} @ {b.value.shape}"
        )
    if a.value.shape[-1] != b.value.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.value.shape} @ {b.value.shape}"
        )
    try:
        value = a.value @ b.value
    except ValueError:
        raise ShapeError(
            f"matmul: batch dimensions do not broadcast, {a.value.shape} @ {b.value.shape}"
        ) from None

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.value.shape)
        gb = _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.value.shape)
        return ga, gb

    return _node("matmul", value, (a, b), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(
            f"reshape: cannot view shape {a.value.shape} as {shape}"
        ) from None
    return _node("reshape", value, (a,), lambda g: (g.reshape(a.value.shape),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat: incompatible shapes {[t.value.shape for t in tensors]} on axis {axis}"
        ) from None
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    node = _node("concat", value, tuple(tensors), vjp)
    return node


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    dim = a.value.shape[axis]
    if not (0 <= start < stop <= dim):
        raise ShapeError(
            f"slice: range [{start}, {stop}) invalid for axis {axis} of shape {a.value.shape}"
        )
    index = [slice(None)] * a.value.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    value = a.value[index]

    def vjp(g):
        out = np.zeros_like(a.value)
        out[index] = g
        return (out,)

    return _node("slice", value, (a,), vjp)


def _reduce(op, a: Tensor, axis):
    if axis is None:
        value = getattr(np, op)(a.value)
        value = np.asarray(value).reshape(1)
        n = a.value.size
    else:
        value = getattr(np, op)(a.value, axis=axis)
        n = a.value.shape[axis]

    def vjp(g):
        if axis is None:
            grad = np.broadcast_to(g.reshape(()), a.value.shape)
        else:
            grad = np.broadcast_to(np.expand_dims(g, axis), a.value.shape)
        if op == "mean":
            grad = grad / n
        return (np.ascontiguousarray(grad),)

    return _node(f"reduce_{op}", value, (a,), vjp)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    return _reduce("mean", a, axis)


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    return _reduce("sum", a, axis)
