"""Minimal tape-based reverse-mode differentiation over float64 arrays.

The tape records exactly the primitives the training objectives need:
elementwise arithmetic, exp / log / tanh, min / max selections, full and
row-wise reductions, reshapes, column and element extraction, dot products
and affine maps. Values are scalars (0-d), vectors or matrices.

``backward`` walks the recorded operations once, in reverse order, so
gradients are exact and repeated backward passes over the same tape return
bit-identical results. Leaves created with :meth:`Tape.leaf` receive
adjoints; leaves created with :meth:`Tape.constant` are frozen and never
appear in the gradient map, which is how teacher outputs and other fixed
quantities are kept outside the update path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Vjp = Callable[[np.ndarray], tuple]


class Node:
    """Handle to one value recorded on a tape."""

    __slots__ = ("tape", "index", "value")

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(index={self.index}, shape={self.value.shape})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self) -> None:
        self._values: list[np.ndarray] = []
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[Vjp | None] = []
        self._leaf_ids: list[int] = []

    def __len__(self) -> int:
        return len(self._values)

    def _record(self, value, parents: tuple[int, ...] = (), vjp: Vjp | None = None) -> Node:
        value = np.asarray(value, dtype=np.float64)
        index = len(self._values)
        self._values.append(value)
        self._parents.append(parents)
        self._vjps.append(vjp)
        return Node(self, index, value)

    def leaf(self, value) -> Node:
        """Record a differentiable input; backward reports its adjoint."""
        node = self._record(value)
        self._leaf_ids.append(node.index)
        return node

    def constant(self, value) -> Node:
        """Record a frozen input that never receives a gradient entry."""
        return self._record(value)

    def backward(self, root: Node, *, check_finite: bool = False) -> dict[int, np.ndarray]:
        """Reverse sweep from a scalar ``root``.

        Returns adjoints keyed by leaf node index. Leaves the root does not
        reach get zero adjoints. With ``check_finite`` every propagated
        adjoint is verified to be finite.
        """
        if not isinstance(root, Node) or root.tape is not self:
            raise ValueError("backward root was not recorded on this tape")
        if root.value.shape != ():
            raise ValueError(f"backward root must be a scalar, got shape {root.value.shape}")
        if not np.isfinite(root.value):
            raise FloatingPointError(f"non-finite value at root node {root.index}")

        adjoints: list[np.ndarray | None] = [None] * (root.index + 1)
        adjoints[root.index] = np.ones(())
        for i in range(root.index, -1, -1):
            grad = adjoints[i]
            if grad is None:
                continue
            if check_finite and not np.all(np.isfinite(grad)):
                raise FloatingPointError(f"non-finite adjoint at node {i}")
            vjp = self._vjps[i]
            if vjp is None:
                continue
            for parent, contribution in zip(self._parents[i], vjp(grad)):
                if adjoints[parent] is None:
                    adjoints[parent] = np.asarray(contribution, dtype=np.float64)
                else:
                    adjoints[parent] = adjoints[parent] + contribution

        grads: dict[int, np.ndarray] = {}
        for leaf in self._leaf_ids:
            if leaf <= root.index and adjoints[leaf] is not None:
                grads[leaf] = np.asarray(adjoints[leaf], dtype=np.float64)
            else:
                grads[leaf] = np.zeros_like(self._values[leaf])
        return grads


def _wrap(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ValueError("nodes belong to different tapes")
        return x
    return tape.constant(x)


def _binary(a, b) -> tuple[Tape, Node, Node]:
    if isinstance(a, Node):
        tape = a.tape
    elif isinstance(b, Node):
        tape = b.tape
    else:
        raise TypeError("at least one operand must be a Node")
    return tape, _wrap(tape, a), _wrap(tape, b)


def _check_pair(va: np.ndarray, vb: np.ndarray) -> None:
    # Elementwise ops allow identical shapes or a scalar on either side.
    if va.shape != vb.shape and va.shape != () and vb.shape != ():
        raise ValueError(f"shape mismatch: {va.shape} vs {vb.shape}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum())


def add(a, b) -> Node:
    tape, a, b = _binary(a, b)
    va, vb = a.value, b.value
    _check_pair(va, vb)

    def vjp(g):
        return (_reduce_to(g, va.shape), _reduce_to(g, vb.shape))

    return tape._record(va + vb, (a.index, b.index), vjp)


def sub(a, b) -> Node:
    tape, a, b = _binary(a, b)
    va, vb = a.value, b.value
    _check_pair(va, vb)

    def vjp(g):
        return (_reduce_to(g, va.shape), _reduce_to(-g, vb.shape))

    return tape._record(va - vb, (a.index, b.index), vjp)


def mul(a, b) -> Node:
    tape, a, b = _binary(a, b)
    va, vb = a.value, b.value
    _check_pair(va, vb)

    def vjp(g):
        return (_reduce_to(g * vb, va.shape), _reduce_to(g * va, vb.shape))

    return tape._record(va * vb, (a.index, b.index), vjp)


def div(a, b) -> Node:
    tape, a, b = _binary(a, b)
    va, vb = a.value, b.value
    _check_pair(va, vb)
    out = va / vb

    def vjp(g):
        return (_reduce_to(g / vb, va.shape), _reduce_to(-g * out / vb, vb.shape))

    return tape._record(out, (a.index, b.index), vjp)


def neg(a: Node) -> Node:
    def vjp(g):
        return (-g,)

    return a.tape._record(-a.value, (a.index,), vjp)


def exp(a: Node) -> Node:
    out = np.exp(a.value)

    def vjp(g):
        return (g * out,)

    return a.tape._record(out, (a.index,), vjp)


def log(a: Node) -> Node:
    va = a.value

    def vjp(g):
        return (g / va,)

    return a.tape._record(np.log(va), (a.index,), vjp)


def tanh(a: Node) -> Node:
    out = np.tanh(a.value)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return a.tape._record(out, (a.index,), vjp)


def clamp_min(a: Node, bound: float) -> Node:
    """Elementwise max(a, bound); the gradient is zero where clamping bites."""
    va = a.value
    mask = va > bound

    def vjp(g):
        return (g * mask,)

    return a.tape._record(np.maximum(va, bound), (a.index,), vjp)


def maximum(a, b) -> Node:
    """Elementwise max; ties route the gradient to the first argument."""
    tape, a, b = _binary(a, b)
    va, vb = a.value, b.value
    _check_pair(va, vb)
    mask = va >= vb

    def vjp(g):
        return (_reduce_to(g * mask, va.shape), _reduce_to(g * ~mask, vb.shape))

    return tape._record(np.maximum(va, vb), (a.index, b.index), vjp)


def minimum(a, b) -> Node:
    """Elementwise min; ties route the gradient to the first argument."""
    tape, a, b = _binary(a, b)
    va, vb = a.value, b.value
    _check_pair(va, vb)
    mask = va <= vb

    def vjp(g):
        return (_reduce_to(g * mask, va.shape), _reduce_to(g * ~mask, vb.shape))

    return tape._record(np.minimum(va, vb), (a.index, b.index), vjp)


def sum(a: Node) -> Node:  # noqa: A001 - mirrors numpy's naming
    """Sum of all elements, as a scalar node."""
    shape = a.value.shape

    def vjp(g):
        return (np.full(shape, float(g)),)

    return a.tape._record(a.value.sum(), (a.index,), vjp)


def max(a: Node) -> Node:  # noqa: A001 - mirrors numpy's naming
    """Largest element, as a scalar node; gradient goes to its first position."""
    va = a.value
    flat_index = int(np.argmax(va))

    def vjp(g):
        out = np.zeros_like(va)
        out.flat[flat_index] = float(g)
        return (out,)

    return a.tape._record(va.max(), (a.index,), vjp)


def rowsum(a: Node) -> Node:
    """Row sums of a matrix node, shape (rows,)."""
    va = a.value
    if va.ndim != 2:
        raise ValueError(f"rowsum expects a matrix, got shape {va.shape}")

    def vjp(g):
        return (np.broadcast_to(g[:, None], va.shape),)

    return a.tape._record(va.sum(axis=1), (a.index,), vjp)


def rowmax(a: Node) -> Node:
    """Row maxima of a matrix node; per row the gradient goes to the first
    position attaining the maximum."""
    va = a.value
    if va.ndim != 2:
        raise ValueError(f"rowmax expects a matrix, got shape {va.shape}")
    arg = np.argmax(va, axis=1)
    rows = np.arange(va.shape[0])

    def vjp(g):
        out = np.zeros_like(va)
        out[rows, arg] = g
        return (out,)

    return a.tape._record(va.max(axis=1), (a.index,), vjp)


def sub_rowvec(a: Node, v) -> Node:
    """Subtract ``v[i]`` from every element of row ``i``."""
    tape = a.tape
    v = _wrap(tape, v)
    va, vv = a.value, v.value
    if va.ndim != 2 or vv.shape != (va.shape[0],):
        raise ValueError(f"sub_rowvec expects ({va.shape[0]},) vector, got {vv.shape}")

    def vjp(g):
        return (g, -g.sum(axis=1))

    return tape._record(va - vv[:, None], (a.index, v.index), vjp)


def div_rowvec(a: Node, v) -> Node:
    """Divide every element of row ``i`` by ``v[i]``."""
    tape = a.tape
    v = _wrap(tape, v)
    va, vv = a.value, v.value
    if va.ndim != 2 or vv.shape != (va.shape[0],):
        raise ValueError(f"div_rowvec expects ({va.shape[0]},) vector, got {vv.shape}")
    out = va / vv[:, None]

    def vjp(g):
        return (g / vv[:, None], -(g * out).sum(axis=1) / vv)

    return tape._record(out, (a.index, v.index), vjp)


def reshape(a: Node, shape: Sequence[int]) -> Node:
    shape = tuple(shape)
    va = a.value

    def vjp(g):
        return (g.reshape(va.shape),)

    return a.tape._record(va.reshape(shape), (a.index,), vjp)


def col(a: Node, j: int) -> Node:
    """Column ``j`` of a matrix node, as a vector."""
    va = a.value
    if va.ndim != 2 or not 0 <= j < va.shape[1]:
        raise ValueError(f"column {j} out of range for shape {va.shape}")

    def vjp(g):
        out = np.zeros_like(va)
        out[:, j] = g
        return (out,)

    return a.tape._record(va[:, j].copy(), (a.index,), vjp)


def slice_cols(a: Node, lo: int, hi: int) -> Node:
    """Columns ``[lo, hi)`` of a matrix node."""
    va = a.value
    if va.ndim != 2 or not 0 <= lo < hi <= va.shape[1]:
        raise ValueError(f"column slice [{lo}, {hi}) invalid for shape {va.shape}")

    def vjp(g):
        out = np.zeros_like(va)
        out[:, lo:hi] = g
        return (out,)

    return a.tape._record(va[:, lo:hi].copy(), (a.index,), vjp)


def getitem(a: Node, i: int) -> Node:
    """Element ``i`` of a vector node, as a scalar."""
    va = a.value
    if va.ndim != 1 or not 0 <= i < va.shape[0]:
        raise ValueError(f"index {i} out of range for shape {va.shape}")

    def vjp(g):
        out = np.zeros_like(va)
        out[i] = float(g)
        return (out,)

    return a.tape._record(va[i], (a.index,), vjp)


def dot(a, b) -> Node:
    """Inner product of two vectors, as a scalar node."""
    tape, a, b = _binary(a, b)
    va, vb = a.value, b.value
    if va.ndim != 1 or vb.ndim != 1 or va.shape != vb.shape:
        raise ValueError(f"dot expects equal-length vectors, got {va.shape} and {vb.shape}")

    def vjp(g):
        return (g * vb, g * va)

    return tape._record(np.dot(va, vb), (a.index, b.index), vjp)


def matvec(a, x) -> Node:
    """Matrix-vector product (rows, n) @ (n,) -> (rows,)."""
    tape, a, x = _binary(a, x)
    va, vx = a.value, x.value
    if va.ndim != 2 or vx.ndim != 1 or va.shape[1] != vx.shape[0]:
        raise ValueError(f"matvec shapes do not align: {va.shape} @ {vx.shape}")

    def vjp(g):
        return (np.outer(g, vx), va.T @ g)

    return tape._record(va @ vx, (a.index, x.index), vjp)


def linear(x, w, b) -> Node:
    """Batched affine map ``x @ w.T + b`` for an (N, F) input, (H, F) weight
    and (H,) bias."""
    if isinstance(x, Node):
        tape = x.tape
    elif isinstance(w, Node):
        tape = w.tape
    else:
        raise TypeError("linear needs at least one Node operand")
    x = _wrap(tape, x)
    w = _wrap(tape, w)
    b = _wrap(tape, b)
    vx, vw, vb = x.value, w.value, b.value
    if vx.ndim != 2 or vw.ndim != 2 or vx.shape[1] != vw.shape[1] or vb.shape != (vw.shape[0],):
        raise ValueError(
            f"linear shapes do not align: x {vx.shape}, w {vw.shape}, b {vb.shape}"
        )

    def vjp(g):
        return (g @ vw, g.T @ vx, g.sum(axis=0))

    return tape._record(vx @ vw.T + vb, (x.index, w.index, b.index), vjp)


@dataclass(frozen=True)
class GradCheckReport:
    """Worst-coordinate outcome of a finite-difference comparison."""

    max_rel_error: float
    worst_index: int
    analytic_at_worst: float
    numeric_at_worst: float


def finite_difference_check(
    f: Callable[[np.ndarray], float],
    x,
    analytic,
    *,
    h: float = 1e-5,
) -> GradCheckReport:
    """Compare ``analytic`` to central differences of ``f`` around ``x``.

    The relative error per coordinate is |a - n| / max(1, |a|, |n|). The
    scalar objective must stay finite at every probed point.
    """
    x = np.asarray(x, dtype=np.float64)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != x.shape:
        raise ValueError(f"analytic gradient shape {analytic.shape} does not match {x.shape}")
    if not (np.isfinite(h) and h > 0.0):
        raise ValueError(f"step size must be positive, got {h}")
    flat_analytic = analytic.ravel()
    numeric = np.empty(x.size)
    for i in range(x.size):
        perturbed = x.copy()
        perturbed.flat[i] += h
        upper = float(f(perturbed))
        perturbed = x.copy()
        perturbed.flat[i] -= h
        lower = float(f(perturbed))
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise FloatingPointError(f"objective is non-finite near coordinate {i}")
        numeric[i] = (upper - lower) / (2.0 * h)
    scale = np.maximum(1.0, np.maximum(np.abs(flat_analytic), np.abs(numeric)))
    rel = np.abs(flat_analytic - numeric) / scale
    worst = int(np.argmax(rel))
    return GradCheckReport(
        max_rel_error=float(rel[worst]),
        worst_index=worst,
        analytic_at_worst=float(flat_analytic[worst]),
        numeric_at_worst=float(numeric[worst]),
    )
