"""Reference knot placements used for comparison."""

from __future__ import annotations

import math

import numpy as np

from .network import ConfigError
from .spline import KnotVector


def uniform_knots(m: int, degree: int = 3) -> KnotVector:
    """``m`` equally spaced interior knots."""
    if m < 0:
        raise ConfigError("number of interior knots must be non-negative")
    return KnotVector.from_interior(np.arange(1, m + 1) / (m + 1), degree)


def nktp_knots(params, n_controls: int, degree: int = 3) -> KnotVector:
    """Knots by averaging data parameters for a spline with ``n_controls`` control points.

    With ``N+1`` parameters and ``n+1`` controls, ``d = (N+1)/(n-p+1)`` and
    interior knot ``j`` interpolates between ``s[i-1]`` and ``s[i]`` at
    ``i = floor(j d)``, ``alpha = j d - i``.
    """
    s = np.asarray(params, dtype=float).reshape(-1)
    if np.any(np.diff(s) < 0):
        raise ConfigError("parameters must be sorted")
    n = n_controls - 1
    if not s.size > n_controls > degree:
        raise ConfigError(
            f"need #params > #controls > degree, got {s.size}, {n_controls}, {degree}"
        )
    d = s.size / (n - degree + 1)
    interior = []
    for j in range(1, n - degree + 1):
        i = math.floor(j * d)
        alpha = j * d - i
        interior.append((1 - alpha) * s[i - 1] + alpha * s[i])
    return KnotVector.from_interior(interior, degree)
