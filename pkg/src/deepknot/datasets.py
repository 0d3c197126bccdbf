"""Built-in benchmark data."""

from __future__ import annotations

import numpy as np

from .spline import KnotVector, PointSet, build_design_matrix, chord_length_params

BUILTINS = ("peak_function", "space_curve")


def peak_function(x):
    """``sin(4x - 2) + 2 exp(-30 (4x - 2)^2)``."""
    x = np.asarray(x, dtype=float)
    return np.sin(4 * x - 2) + 2 * np.exp(-30 * (4 * x - 2) ** 2)


def space_curve(t):
    """C0 space curve with a cusp in ``x`` at ``t = 1/2``."""
    t = np.asarray(t, dtype=float)
    x = 100 / np.exp(np.abs(10 * t - 5)) + 25 * (2 * t - 1) ** 5 / 4
    return np.stack([x, 30 * t - 5, 100 * t**2], axis=-1)


def gen_builtin(name: str, n: int | None = None, noise: float | None = None, seed: int = 0, params: str = "native") -> PointSet:
    """Sample a built-in dataset in raw coordinates.

    ``peak_function`` (default 1001 points, noise 0.05) is parametrized by
    its abscissa; noise is uniform on ``[-noise, noise]`` and touches only
    the function values.  ``space_curve`` (default 501 points, noiseless)
    is parametrized by its generating parameter unless ``params="chord"``.
    """
    rng = np.random.default_rng(seed)
    if name == "peak_function":
        n = 1001 if n is None else n
        noise = 0.05 if noise is None else noise
        _check_n(n)
        x = np.linspace(0.0, 1.0, n)
        y = peak_function(x)
        if noise:
            y = y + rng.uniform(-noise, noise, size=n)
        pts = np.column_stack([x, y])
        s = x
    elif name == "space_curve":
        n = 501 if n is None else n
        noise = 0.0 if noise is None else noise
        _check_n(n)
        t = np.linspace(0.0, 1.0, n)
        pts = space_curve(t)
        if noise:
            pts = pts + rng.uniform(-noise, noise, size=pts.shape)
        s = t
    else:
        raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(BUILTINS)}")
    if params == "chord":
        s = chord_length_params(pts)
    elif params != "native":
        raise ValueError(f"unknown parametrization {params!r}")
    return PointSet(pts, s, {"name": name, "n": n, "noise": noise, "seed": seed})


def _check_n(n: int) -> None:
    if n < 2:
        raise ValueError("need at least two samples")


def random_spline(m: int, degree: int = 3, dim: int = 2, seed: int = 0, min_gap: float = 0.08) -> tuple[KnotVector, np.ndarray]:
    """Random clamped spline with ``m`` well-separated interior knots."""
    rng = np.random.default_rng(seed)
    while True:
        inner = np.sort(rng.uniform(0.0, 1.0, m))
        gaps = np.diff(np.concatenate([[0.0], inner, [1.0]]))
        if gaps.min() >= min_gap:
            break
    kv = KnotVector.from_interior(inner, degree)
    return kv, rng.uniform(-1.0, 1.0, size=(kv.n_basis, dim))


def spline_samples(kv: KnotVector, controls: np.ndarray, n: int, noise: float = 0.0, seed: int = 0) -> PointSet:
    """Points on a spline at uniform parameters, optionally with uniform noise."""
    s = np.linspace(0.0, 1.0, n)
    pts = build_design_matrix(kv, s) @ controls
    if noise:
        pts = pts + np.random.default_rng(seed).uniform(-noise, noise, size=pts.shape)
    return PointSet(pts, s, {"name": "spline", "n": n, "noise": noise, "seed": seed})
