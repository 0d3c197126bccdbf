"""A small reverse-mode differentiation tape over numpy arrays.

Every operation appends one node to a :class:`Tape`.  Nodes are created in
execution order, so parents always precede children and a single reverse
sweep over the node list is a valid topological traversal.

Values may be scalars, vectors or matrices.  Binary elementwise operations
accept numpy broadcasting; their adjoints are summed back to the operand
shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linalg import ridge_lstsq, solve_normal

Vjp = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NumericError(ArithmeticError):
    """An operation produced or received a non-finite or undefined value."""


@dataclass
class Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    vjp: Vjp | None
    requires_grad: bool


class Var:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "index")
    __array_priority__ = 100.0

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.tape.nodes[self.index].requires_grad

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Var(#{self.index} {node.op} shape={self.shape})"

    def __len__(self) -> int:
        return self.shape[0]

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return take(self, key)


class Gradients:
    """Adjoints produced by :meth:`Tape.backward`, indexed by :class:`Var`."""

    def __init__(self, tape: Tape, grads: list[np.ndarray | None]):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, v: Var) -> np.ndarray:
        if v.tape is not self._tape:
            raise ValueError("variable belongs to a different tape")
        g = self._grads[v.index]
        if g is None:
            return np.zeros_like(v.value)
        return g


class Tape:
    """Append-only record of a forward computation."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, op: str, value, parents: Sequence[Var] = (), vjp: Vjp | None = None) -> Var:
        value = np.asarray(value, dtype=float)
        req = any(p.requires_grad for p in parents)
        self.nodes.append(Node(op, tuple(p.index for p in parents), value, vjp if req else None, req))
        return Var(self, len(self.nodes) - 1)

    def var(self, value) -> Var:
        """Register a differentiable leaf."""
        value = np.array(value, dtype=float)
        self.nodes.append(Node("leaf", (), value, None, True))
        return Var(self, len(self.nodes) - 1)

    def const(self, value) -> Var:
        """Register a constant; it never receives a gradient."""
        return self._push("const", np.array(value, dtype=float))

    def backward(self, root: Var) -> Gradients:
        """One reverse sweep from a scalar ``root``."""
        if root.tape is not self:
            raise ValueError("root belongs to a different tape")
        if root.value.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
        grads: list[np.ndarray | None] = [None] * (root.index + 1)
        grads[root.index] = np.ones_like(root.value)
        for i in range(root.index, -1, -1):
            g = grads[i]
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not self.nodes[parent].requires_grad:
                    continue
                if grads[parent] is None:
                    grads[parent] = np.array(pg, dtype=float)
                else:
                    grads[parent] = grads[parent] + pg
        return Gradients(self, grads)


def _lift(tape: Tape, x) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ValueError("operands live on different tapes")
        return x
    return tape.const(x)


def _pair(a, b) -> tuple[Var, Var]:
    tape = a.tape if isinstance(a, Var) else b.tape
    return _lift(tape, a), _lift(tape, b)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Var, b: Var, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# -- elementwise -------------------------------------------------------------


def add(a, b) -> Var:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return a.tape._push(
        "add", a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Var:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return a.tape._push(
        "sub", a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))
    )


def mul(a, b) -> Var:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return a.tape._push(
        "mul",
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a, b) -> Var:
    a, b = _pair(a, b)
    _broadcast_shape(a, b, "div")
    av, bv = a.value, b.value
    zero = bv == 0
    if np.any(zero):
        where = np.argwhere(zero)[0].tolist()
        raise NumericError(f"division by zero at denominator index {where} (degenerate knot span?)")
    out = av / bv
    return a.tape._push(
        "div",
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def safe_recip(x: Var) -> Var:
    """``1/x`` with ``1/0 := 0``; zero entries are constants with zero adjoint."""
    xv = x.value
    nz = xv != 0
    out = np.zeros_like(xv)
    out[nz] = 1.0 / xv[nz]
    return x.tape._push("safe_recip", out, (x,), lambda g: (-g * out * out,))


def relu(x: Var) -> Var:
    xv = x.value
    mask = xv > 0
    return x.tape._push("relu", np.where(mask, xv, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Var) -> Var:
    out = np.exp(x.value)
    return x.tape._push("exp", out, (x,), lambda g: (g * out,))


def square(x: Var) -> Var:
    xv = x.value
    return x.tape._push("square", xv * xv, (x,), lambda g: (2.0 * g * xv,))


def clip_min(x: Var, floor: float) -> Var:
    """``max(x, floor)`` elementwise; clipped entries pass no gradient."""
    xv = x.value
    mask = xv > floor
    return x.tape._push("clip_min", np.where(mask, xv, floor), (x,), lambda g: (g * mask,))


# -- reductions and structural ops ----------------------------------------------


def sum_all(x: Var) -> Var:
    shape = x.shape
    return x.tape._push("sum", np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, shape),))


def cumsum(x: Var) -> Var:
    """Running sum of a vector, i.e. multiplication by a lower-triangular ones matrix."""
    if x.value.ndim != 1:
        raise ShapeError(f"cumsum expects a vector, got shape {x.shape}")
    return x.tape._push("cumsum", np.cumsum(x.value), (x,), lambda g: (np.cumsum(g[::-1])[::-1],))


def reshape(x: Var, shape: tuple[int, ...]) -> Var:
    old = x.shape
    return x.tape._push("reshape", x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def take(x: Var, key) -> Var:
    """Basic (slice/integer) indexing."""
    xv = x.value
    out = xv[key]

    def vjp(g):
        full = np.zeros_like(xv)
        if _is_basic(key):
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return x.tape._push("take", out, (x,), vjp)


def _is_basic(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (slice, int, type(None), type(Ellipsis))) for k in keys)


def concat(parts: Sequence) -> Var:
    tape = next(p.tape for p in parts if isinstance(p, Var))
    vs = [_lift(tape, p) for p in parts]
    for v in vs:
        if v.value.ndim != 1:
            raise ShapeError("concat joins vectors only")
    sizes = np.cumsum([v.shape[0] for v in vs])[:-1]
    return tape._push("concat", np.concatenate([v.value for v in vs]), vs, lambda g: np.split(g, sizes))


def stack_columns(cols: Sequence[Var]) -> Var:
    """Matrix whose columns are the given equal-length vectors."""
    tape = cols[0].tape
    vs = [_lift(tape, c) for c in cols]
    if any(v.value.ndim != 1 or v.shape != vs[0].shape for v in vs):
        raise ShapeError("stack_columns needs equal-length vectors")
    return tape._push(
        "stack_columns",
        np.column_stack([v.value for v in vs]),
        vs,
        lambda g: [g[:, j] for j in range(g.shape[1])],
    )


def scatter(values: Var, index: tuple[np.ndarray, np.ndarray], shape: tuple[int, int]) -> Var:
    """Dense zero matrix of ``shape`` with ``values`` written at distinct ``index`` positions."""
    out = np.zeros(shape)
    out[index] = values.value
    return values.tape._push("scatter", out, (values,), lambda g: (g[index],))


def matmul(a, b) -> Var:
    a, b = _pair(a, b)
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ShapeError(f"matmul: shapes {av.shape} and {bv.shape} do not chain")

    def vjp(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:  # matrix @ vector
            return np.outer(g, bv), av.T @ g
        if bv.ndim == 2:  # vector @ matrix
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return a.tape._push("matmul", av @ bv, (a, b), vjp)


def softmax(x: Var) -> Var:
    """Max-shifted softmax of a vector."""
    xv = x.value
    if xv.ndim != 1:
        raise ShapeError(f"softmax expects a vector, got shape {x.shape}")
    if not np.all(np.isfinite(xv)):
        raise NumericError("softmax received non-finite logits")
    e = np.exp(xv - xv.max())
    y = e / e.sum()
    # J^T g = y * (g - <g, y>)
    return x.tape._push("softmax", y, (x,), lambda g: (y * (g - np.dot(g, y)),))


def ls_solve(a: Var, p, ridge: float = 1e-8) -> Var:
    """Ridge least-squares control points ``C(A)``; ``P`` is held constant.

    The adjoint differentiates ``C = (A^T A + lam I)^{-1} A^T P`` including
    the dependence of ``lam = ridge * mean(diag(A^T A))`` on ``A``, and
    reuses the forward triangular factor.
    """
    if isinstance(p, Var):
        p = p.value
    p = np.asarray(p, dtype=float)
    av = a.value
    if av.ndim != 2 or p.shape[0] != av.shape[0]:
        raise ShapeError(f"ls_solve: A {av.shape} and P {p.shape} are incompatible")
    sol = ridge_lstsq(av, p, ridge)
    c = sol.coef
    cols = av.shape[1]
    p2 = p.reshape(p.shape[0], -1)
    c2 = c.reshape(cols, -1)

    def vjp(g):
        x = solve_normal(sol.r, g.reshape(cols, -1))
        cx = c2 @ x.T
        ga = p2 @ x.T - av @ (cx + cx.T)
        if sol.lam > 0.0:
            ga = ga - (2.0 * ridge / cols) * float(np.sum(x * c2)) * av
        return (ga,)

    return a.tape._push("ls_solve", c, (a,), vjp)


def grad_check(f: Callable[[Tape, Var], Var], x0, step: float = 1e-6, floor: float = 1e-8) -> float:
    """Worst disagreement between taped and central-difference gradients.

    Relative error is used per entry, switching to absolute error where the
    taped gradient is below ``floor`` in magnitude.
    """
    x0 = np.array(x0, dtype=float)
    tape = Tape()
    x = tape.var(x0)
    analytic = tape.backward(f(tape, x))[x]
    numeric = finite_difference(lambda v: _eval(f, v), x0, step)
    return max_gradient_error(analytic, numeric, floor)


def _eval(f, v: np.ndarray) -> float:
    t = Tape()
    return float(f(t, t.var(v)).value)


def finite_difference(fn: Callable[[np.ndarray], float], x0: np.ndarray, step: float = 1e-6) -> np.ndarray:
    x0 = np.array(x0, dtype=float)
    out = np.zeros_like(x0)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        out.reshape(-1)[i] = (fn(xp.reshape(x0.shape)) - fn(xm.reshape(x0.shape))) / (2 * step)
    return out


def max_gradient_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    analytic = np.asarray(analytic, dtype=float).reshape(-1)
    numeric = np.asarray(numeric, dtype=float).reshape(-1)
    if analytic.size == 0:
        return 0.0
    diff = np.abs(analytic - numeric)
    scale = np.abs(analytic)
    err = np.where(scale < floor, diff, diff / np.maximum(scale, floor))
    return float(err.max())
