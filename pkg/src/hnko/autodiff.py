"""Reverse-mode automatic differentiation on a dynamically built tape.

Values are float64 numpy arrays, either 0-d (scalars) or 2-D (matrices).
Each operation records a :class:`Node` holding the forward value, the parent
nodes, and a vector-Jacobian-product closure; :func:`backward` walks the tape
once in reverse topological order and accumulates adjoints.  The primitive set
is deliberately small — just enough to express the model's loss terms and the
exponential of a skew-symmetric generator — and every primitive's gradient is
pinned against finite differences in the tests.

The tape is immutable after construction: :func:`backward` never mutates
nodes, so repeated backward passes over the same tape give identical results.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from . import numerics

__all__ = [
    "Node",
    "constant",
    "leaf",
    "add",
    "sub",
    "scale",
    "matmul",
    "transpose",
    "tanh",
    "exp",
    "sum_squares",
    "inner_product",
    "colsumsq",
    "rowsumsq",
    "sub_scalar",
    "reciprocal",
    "slice_cols",
    "add_bias",
    "skew_from_params",
    "kron",
    "expm_skew",
    "backward",
]


class Node:
    """One tape entry: a value plus how to push gradients to its parents."""

    __slots__ = ("value", "parents", "vjp")

    def __init__(
        self,
        value,
        parents: tuple["Node", ...] = (),
        vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None,
    ):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim not in (0, 2):
            raise ValueError(f"tape values must be 0-d or 2-D, got shape {value.shape}")
        self.value = value
        self.parents = parents
        self.vjp = vjp

    def __repr__(self):  # pragma: no cover - debugging aid
        kind = "leaf" if self.vjp is None else "op"
        return f"Node({kind}, shape={self.value.shape})"


def leaf(value) -> Node:
    """A differentiation target; pass the same object to backward's `wrt`."""
    return Node(value)


def constant(value) -> Node:
    """A node gradients do not flow into (mechanically identical to a leaf)."""
    return Node(value)


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _same_shape(a: Node, b: Node, op: str):
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


def add(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _same_shape(a, b, "add")
    return Node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _same_shape(a, b, "sub")
    return Node(a.value - b.value, (a, b), lambda g: (g, -g))


def scale(a, c: float) -> Node:
    """Multiply by a (non-differentiated) python scalar."""
    a = _as_node(a)
    c = float(c)
    return Node(c * a.value, (a,), lambda g: (c * g,))


def matmul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ValueError(
            f"matmul: incompatible shapes {a.value.shape} @ {b.value.shape}"
        )
    av, bv = a.value, b.value
    return Node(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a) -> Node:
    a = _as_node(a)
    return Node(a.value.T, (a,), lambda g: (g.T,))


def tanh(a) -> Node:
    a = _as_node(a)
    out = np.tanh(a.value)
    return Node(out, (a,), lambda g: ((1.0 - out * out) * g,))


def exp(a) -> Node:
    a = _as_node(a)
    out = np.exp(a.value)
    return Node(out, (a,), lambda g: (out * g,))


def sum_squares(a) -> Node:
    """Scalar sum of squared entries."""
    a = _as_node(a)
    av = a.value
    return Node(np.sum(av * av), (a,), lambda g: (2.0 * av * g,))


def inner_product(a, b) -> Node:
    """Scalar sum of elementwise products (Frobenius inner product)."""
    a, b = _as_node(a), _as_node(b)
    _same_shape(a, b, "inner_product")
    av, bv = a.value, b.value
    return Node(np.sum(av * bv), (a, b), lambda g: (bv * g, av * g))


def colsumsq(a) -> Node:
    """Row vector (1, M) of per-column sums of squares."""
    a = _as_node(a)
    if a.value.ndim != 2:
        raise ValueError("colsumsq expects a matrix")
    av = a.value
    return Node(np.sum(av * av, axis=0, keepdims=True), (a,), lambda g: (2.0 * av * g,))


def rowsumsq(a) -> Node:
    """Column vector (N, 1) of per-row sums of squares."""
    a = _as_node(a)
    if a.value.ndim != 2:
        raise ValueError("rowsumsq expects a matrix")
    av = a.value
    return Node(np.sum(av * av, axis=1, keepdims=True), (a,), lambda g: (2.0 * av * g,))


def sub_scalar(a, s) -> Node:
    """Subtract a 0-d node from every entry of `a`."""
    a, s = _as_node(a), _as_node(s)
    if s.value.ndim != 0:
        raise ValueError("sub_scalar: subtrahend must be 0-d")
    return Node(a.value - s.value, (a, s), lambda g: (g, np.asarray(-np.sum(g))))


def reciprocal(a) -> Node:
    """Elementwise 1/a; the caller is responsible for keeping entries away from zero."""
    a = _as_node(a)
    out = 1.0 / a.value
    return Node(out, (a,), lambda g: (-(out * out) * g,))


def slice_cols(a, start: int, stop: int) -> Node:
    a = _as_node(a)
    if a.value.ndim != 2:
        raise ValueError("slice_cols expects a matrix")
    n_cols = a.value.shape[1]
    if not (0 <= start <= stop <= n_cols):
        raise ValueError(f"slice_cols: [{start}, {stop}) out of range for {n_cols} columns")
    av = a.value

    def vjp(g):
        full = np.zeros_like(av)
        full[:, start:stop] = g
        return (full,)

    return Node(av[:, start:stop], (a,), vjp)


def add_bias(a, b) -> Node:
    """Add a column vector (n, 1) to every column of an (n, M) matrix."""
    a, b = _as_node(a), _as_node(b)
    if b.value.ndim != 2 or b.value.shape[1] != 1 or a.value.shape[0] != b.value.shape[0]:
        raise ValueError(
            f"add_bias: expected (n, M) and (n, 1), got {a.value.shape} and {b.value.shape}"
        )
    return Node(a.value + b.value, (a, b), lambda g: (g, np.sum(g, axis=1, keepdims=True)))


def skew_from_params(params, dim: int) -> Node:
    """Map an (L, 1) parameter column to the dim x dim skew-symmetric matrix
    whose strictly-upper-triangular entries, in row-major order, are the
    parameters (the lower triangle is their negation)."""
    params = _as_node(params)
    L = dim * (dim - 1) // 2
    if params.value.shape != (L, 1):
        raise ValueError(
            f"skew_from_params: need shape ({L}, 1) for dim {dim}, got {params.value.shape}"
        )
    rows, cols = np.triu_indices(dim, k=1)
    mat = np.zeros((dim, dim))
    mat[rows, cols] = params.value[:, 0]
    mat[cols, rows] = -params.value[:, 0]

    def vjp(g):
        return ((g[rows, cols] - g[cols, rows]).reshape(-1, 1),)

    return Node(mat, (params,), vjp)


def kron(a, b) -> Node:
    """Kronecker product of two matrices."""
    a, b = _as_node(a), _as_node(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("kron expects two matrices")
    av, bv = a.value, b.value
    (p1, q1), (p2, q2) = av.shape, bv.shape

    def vjp(g):
        g4 = g.reshape(p1, p2, q1, q2)
        return (
            np.einsum("ijkl,jl->ik", g4, bv),
            np.einsum("ijkl,ik->jl", g4, av),
        )

    return Node(np.kron(av, bv), (a, b), vjp)


def expm_skew(params, dim: int) -> Node:
    """exp of the skew matrix built from `params`, as a differentiable subgraph.

    Uses the same scaling-and-squaring policy as :func:`hnko.numerics.expm`
    (scale until the 1-norm is at most 0.5, order-18 Horner Taylor, square
    back up), but expressed entirely in tape primitives so gradients flow
    through the whole recursion.
    """
    params = _as_node(params)
    gen = skew_from_params(params, dim)
    norm1 = float(np.abs(gen.value).sum(axis=0).max()) if dim else 0.0
    squarings = numerics._squarings(norm1)
    x = scale(gen, 0.5**squarings)
    eye = constant(np.eye(dim))
    p = eye
    for k in range(numerics.EXPM_TAYLOR_ORDER, 0, -1):
        p = add(eye, matmul(scale(x, 1.0 / k), p))
    for _ in range(squarings):
        p = matmul(p, p)
    return p


def _topo_order(root: Node) -> list[Node]:
    """Iterative post-order over the tape (children after all their parents)."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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


def backward(root: Node, wrt: Iterable[Node]) -> dict[Node, np.ndarray]:
    """Gradients of a scalar root with respect to the given leaves.

    Returns a dict keyed by the leaf node objects; leaves the root does not
    depend on map to zero arrays of matching shape.
    """
    if root.value.ndim != 0:
        raise ValueError(f"backward needs a 0-d root, got shape {root.value.shape}")
    adjoint: dict[int, np.ndarray] = {id(root): np.asarray(1.0)}
    for node in reversed(_topo_order(root)):
        g = adjoint.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            prev = adjoint.get(id(parent))
            adjoint[id(parent)] = pg if prev is None else prev + pg
    return {
        w: adjoint.get(id(w), np.zeros_like(w.value)) for w in wrt
    }
