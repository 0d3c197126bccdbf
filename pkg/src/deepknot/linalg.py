"""Ridge-regularized least squares shared by the numeric and taped solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


class SingularSystemError(np.linalg.LinAlgError):
    """The normal equations are (numerically) singular."""


@dataclass(frozen=True)
class RidgeSolution:
    coef: np.ndarray
    r: np.ndarray  # upper-triangular factor with r.T @ r == A.T A + lam I
    lam: float  # absolute ridge weight actually applied


def effective_ridge(a: np.ndarray, ridge: float) -> float:
    """Scale a relative ridge weight by the mean diagonal of ``A^T A``."""
    if ridge == 0.0:
        return 0.0
    return float(ridge * np.sum(a * a) / a.shape[1])


def ridge_lstsq(a: np.ndarray, p: np.ndarray, ridge: float = 1e-8) -> RidgeSolution:
    """Minimize ``||P - A C||_F^2 + lam ||C||_F^2`` through a QR factorization.

    ``ridge`` is relative: ``lam = ridge * mean(diag(A^T A))``.  The
    augmented system ``[A; sqrt(lam) I]`` is factored so that the normal
    equations are never formed.
    """
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    rows, cols = a.shape
    if rows < cols:
        raise ValueError(f"design matrix has {rows} rows but {cols} columns")
    if ridge < 0:
        raise ValueError("ridge weight must be non-negative")
    lam = effective_ridge(a, ridge)
    squeeze = p.ndim == 1
    rhs = p[:, None] if squeeze else p
    if lam > 0.0:
        aug = np.vstack([a, np.sqrt(lam) * np.eye(cols)])
        rhs = np.vstack([rhs, np.zeros((cols, rhs.shape[1]))])
    else:
        aug = a
    q, r = np.linalg.qr(aug)
    diag = np.abs(np.diag(r))
    if diag.size and (not np.all(np.isfinite(diag)) or diag.min() <= 1e-13 * max(diag.max(), 1e-300)):
        raise SingularSystemError(
            "least-squares system is rank deficient; use a positive ridge weight"
        )
    coef = solve_triangular(r, q.T @ rhs)
    if squeeze:
        coef = coef[:, 0]
    return RidgeSolution(coef=coef, r=r, lam=lam)


def solve_normal(r: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(R^T R) X = rhs`` with two triangular solves."""
    y = solve_triangular(r, rhs, trans="T")
    return solve_triangular(r, y)
