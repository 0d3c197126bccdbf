"""Clamped B-spline primitives on the normalized domain ``[0, 1]``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .linalg import SingularSystemError, effective_ridge, ridge_lstsq

__all__ = [
    "DegenerateDataError",
    "DomainError",
    "KnotVector",
    "PointSet",
    "SingularSystemError",
    "build_design_matrix",
    "chord_length_params",
    "design_matrix_tape",
    "eval_basis",
    "eval_curve",
    "find_span",
    "hausdorff",
    "sample_curve",
    "solve_controls",
    "spacing_floor",
]


class DomainError(ValueError):
    """An argument lies outside the normalized parameter domain."""


class DegenerateDataError(ValueError):
    """Data cannot be parametrized (too few distinct points)."""


def spacing_floor(m: int) -> float:
    """Minimum gap enforced between consecutive knots when ``m`` interior knots are free."""
    return 1e-4 / (m + 1)


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Clamped knot sequence over ``[0, 1]``.

    Interior knots may repeat up to ``degree`` times (after coalescing);
    the spacing floor is the responsibility of whoever produces free knots.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self) -> None:
        k = np.array(self.knots, dtype=float)
        p = int(self.degree)
        if p < 0:
            raise ValueError("degree must be non-negative")
        if k.ndim != 1 or k.size < 2 * (p + 1):
            raise ValueError(f"a degree-{p} clamped knot vector needs at least {2 * (p + 1)} knots")
        if np.any(np.diff(k) < 0):
            raise ValueError("knots must be non-decreasing")
        if np.any(k[: p + 1] != 0.0) or np.any(k[-(p + 1) :] != 1.0):
            raise ValueError(f"knot vector must be clamped: {p + 1} zeros first and {p + 1} ones last")
        inner = k[p + 1 : k.size - p - 1]
        if inner.size and (inner[0] <= 0.0 or inner[-1] >= 1.0):
            raise ValueError("interior knots must lie strictly inside (0, 1)")
        if inner.size and p > 0:
            _, counts = np.unique(inner, return_counts=True)
            if counts.max() > p:
                raise ValueError(f"interior knot multiplicity exceeds degree {p}")
        k.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", k)

    @classmethod
    def from_interior(cls, interior, degree: int = 3) -> KnotVector:
        interior = np.asarray(interior, dtype=float).reshape(-1)
        return cls(degree, np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)]))

    @property
    def interior(self) -> np.ndarray:
        p = self.degree
        return self.knots[p + 1 : self.knots.size - p - 1]

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    def __len__(self) -> int:
        return self.knots.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __repr__(self) -> str:
        return f"KnotVector(degree={self.degree}, interior={np.round(self.interior, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class PointSet:
    """Data points with their parameter values in ``[0, 1]``."""

    points: np.ndarray
    params: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        s = np.array(self.params, dtype=float).reshape(-1)
        if pts.shape[0] != s.size:
            raise ValueError(f"{pts.shape[0]} points but {s.size} parameters")
        if s.size < 2:
            raise DegenerateDataError("need at least two points")
        if s[0] != 0.0 or s[-1] != 1.0:
            raise DomainError("parameters must start at 0 and end at 1")
        if np.any(np.diff(s) <= 0):
            raise DomainError("parameters must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        pts.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "params", s)

    def __len__(self) -> int:
        return self.params.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def find_span(kv: KnotVector, t: float) -> int:
    """Index ``i`` with ``knots[i] <= t < knots[i+1]``; ``t == 1`` maps to the last non-empty span."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"parameter {t!r} outside [0, 1]")
    k = kv.knots
    if t >= k[-1]:
        return int(np.flatnonzero(k < k[-1])[-1])
    return int(np.searchsorted(k, t, side="right") - 1)


def _nonzero_basis(k: np.ndarray, p: int, span: int, t: float) -> np.ndarray:
    # triangular Cox-de Boor table for the p+1 functions alive on the span
    n = np.zeros(p + 1)
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    n[0] = 1.0
    for j in range(1, p + 1):
        left[j] = t - k[span + 1 - j]
        right[j] = k[span + j] - t
        saved = 0.0
        for r in range(j):
            den = right[r + 1] + left[j - r]
            temp = n[r] / den if den != 0.0 else 0.0
            n[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        n[j] = saved
    return n


def eval_basis(kv: KnotVector, t: float) -> np.ndarray:
    """All ``n+1`` basis values at ``t`` as a dense vector."""
    span = find_span(kv, t)
    out = np.zeros(kv.n_basis)
    out[span - kv.degree : span + 1] = _nonzero_basis(kv.knots, kv.degree, span, float(t))
    return out


def build_design_matrix(kv: KnotVector, params) -> np.ndarray:
    """Rows of basis values, one per parameter.

    ``params`` may be a :class:`PointSet` or a plain sequence of parameters.
    """
    s = params.params if isinstance(params, PointSet) else np.asarray(params, dtype=float).reshape(-1)
    a = np.zeros((s.size, kv.n_basis))
    p = kv.degree
    for i, t in enumerate(s):
        span = find_span(kv, float(t))
        a[i, span - p : span + 1] = _nonzero_basis(kv.knots, p, span, float(t))
    return a


def solve_controls(a: np.ndarray, ps, ridge: float = 1e-8) -> np.ndarray:
    """Control points minimizing ``||P - A C||^2 + lam ||C||^2``.

    ``ridge`` is relative to the mean diagonal of ``A^T A``; ``ridge=0``
    gives the plain least-squares solution and raises
    :class:`SingularSystemError` when ``A`` is rank deficient.
    """
    p = ps.points if isinstance(ps, PointSet) else np.asarray(ps, dtype=float)
    return ridge_lstsq(a, p, ridge).coef


def absolute_ridge(a: np.ndarray, ridge: float) -> float:
    return effective_ridge(a, ridge)


def eval_curve(kv: KnotVector, controls: np.ndarray, t):
    """Curve point(s) at scalar or array ``t``."""
    controls = np.asarray(controls, dtype=float)
    if controls.shape[0] != kv.n_basis:
        raise ValueError(f"{controls.shape[0]} control points for {kv.n_basis} basis functions")
    if np.ndim(t) == 0:
        return eval_basis(kv, float(t)) @ controls
    return build_design_matrix(kv, t) @ controls


def sample_curve(kv: KnotVector, controls: np.ndarray, n: int = 2000) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0.0, 1.0, n)
    return t, eval_curve(kv, controls, t)


def chord_length_params(points) -> np.ndarray:
    """Accumulated chord length, normalized to ``[0, 1]``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise DegenerateDataError("need at least two points")
    seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
    total = seg.sum()
    if total == 0.0:
        raise DegenerateDataError("all points are identical")
    s = np.concatenate([[0.0], np.cumsum(seg) / total])
    s[-1] = 1.0
    return s


def hausdorff(a, b, chunk: int = 512) -> float:
    """Symmetric Hausdorff distance between two finite point sets (exhaustive scan)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DomainError("Hausdorff distance of an empty set")
    if a.shape[1] != b.shape[1]:
        raise ValueError("point sets have different dimensions")
    a_to_b = 0.0
    b_to_a = np.full(b.shape[0], np.inf)
    for start in range(0, a.shape[0], chunk):
        block = a[start : start + chunk]
        d2 = ((block[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        a_to_b = max(a_to_b, float(d2.min(axis=1).max()))
        b_to_a = np.minimum(b_to_a, d2.min(axis=0))
    return float(np.sqrt(max(a_to_b, float(b_to_a.max()))))


def design_matrix_tape(tape: ad.Tape, knots: ad.Var, params, degree: int) -> ad.Var:
    """Design matrix built from taped operations on the full knot vector.

    Spans are located from the current numeric values (a piecewise-constant
    choice, so it carries no gradient); the ``degree + 1`` nonzero basis
    values of each row then come from the triangular Cox-de Boor scheme
    applied to all rows at once, with knots gathered per row.  Gathered
    boundary knots are tape constants, so they receive no gradient.
    ``params`` may itself be a Var.
    """
    s = params if isinstance(params, ad.Var) else tape.const(params)
    kval = knots.value
    sval = s.value
    if np.any(sval < 0.0) or np.any(sval > 1.0):
        raise DomainError("parameters outside [0, 1]")
    last = int(np.flatnonzero(kval < kval[-1])[-1])
    span = np.minimum(np.searchsorted(kval, sval, side="right") - 1, last)
    p = degree
    left = [None] + [s - knots[span + 1 - j] for j in range(1, p + 1)]
    right = [None] + [knots[span + j] - s for j in range(1, p + 1)]
    n = [tape.const(np.ones(sval.size))]
    for j in range(1, p + 1):
        saved = None
        row = []
        for r in range(j):
            temp = n[r] / (right[r + 1] + left[j - r])
            term = right[r + 1] * temp
            row.append(term if saved is None else saved + term)
            saved = left[j - r] * temp
        row.append(saved)
        n = row
    band = ad.stack_columns(n)
    rows = np.repeat(np.arange(sval.size), p + 1)
    cols = (span[:, None] - p + np.arange(p + 1)).reshape(-1)
    flat = ad.reshape(band, (sval.size * (p + 1),))
    return ad.scatter(flat, (rows, cols), (sval.size, kval.size - p - 1))
