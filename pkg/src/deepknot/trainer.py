"""Training, knot-count selection and knot post-processing."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .network import (
    ConfigError,
    KnotNet,
    NetworkConfig,
    build_network,
    stack_forward,
    uniform_difference,
)
from .spline import KnotVector, PointSet, build_design_matrix, solve_controls

log = logging.getLogger(__name__)


class TrainingError(ArithmeticError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations: int = 2000
    seed: int = 0
    ridge: float = 1e-8
    delta: float = 0.05
    merge_tol: float = 0.01
    patience: int = 100
    min_improvement: float = 1e-9

    def __post_init__(self) -> None:
        for name in ("lr", "eps", "iterations", "patience"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.ridge < 0 or self.delta < 0 or self.merge_tol < 0:
            raise ConfigError("ridge, delta and merge_tol must be non-negative")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: list[np.ndarray]) -> AdamState:
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
    names: list[str] | None = None,
) -> list[np.ndarray]:
    """One bias-corrected Adam update; ``state`` is advanced in place."""
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            owner = names[i] if names else f"parameter {i}"
            raise TrainingError(f"non-finite gradient in {owner}")
    state.step += 1
    t = state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * g * g
        m_hat = state.m[i] / (1 - cfg.beta1**t)
        v_hat = state.v[i] / (1 - cfg.beta2**t)
        out.append(p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps))
    return out


@dataclass
class LossTrace:
    """Per-iteration loss of every subnetwork (keyed by knot count) and their sum."""

    counts: list[int]
    per_count: dict[int, list[float]] = field(default_factory=dict)
    total: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        for c in self.counts:
            self.per_count.setdefault(c, [])

    def record(self, losses: list[float], total: float) -> None:
        for c, l in zip(self.counts, losses):
            self.per_count[c].append(l)
        self.total.append(total)

    def __len__(self) -> int:
        return len(self.total)

    def final(self) -> dict[int, float]:
        return {c: self.per_count[c][-1] for c in self.counts}


@dataclass
class CountFit:
    count: int
    knots: KnotVector
    controls: np.ndarray
    loss: float  # mean squared residual per point
    sse: float  # unnormalized squared Frobenius residual
    iteration: int
    params: np.ndarray


@dataclass
class TrainResult:
    trace: LossTrace
    fits: dict[int, CountFit]
    net: KnotNet
    iterations: int
    seconds: float

    def final_losses(self) -> dict[int, float]:
        return {c: f.loss for c, f in self.fits.items()}


def _param_names(net: KnotNet) -> list[str]:
    names = []
    for k, s in enumerate(net.subnets):
        names += [f"subnet {k + 1} ({s.m_out - 1} knots)"] * len(s.arrays)
    if net.pnet is not None:
        names += ["parametrization subnet"] * len(net.pnet.arrays)
    return names


def train(
    net: KnotNet,
    ps: PointSet,
    cfg: TrainConfig,
    du0: np.ndarray | None = None,
    points: np.ndarray | None = None,
) -> TrainResult:
    """Full-batch Adam on the summed loss of all subnetworks.

    Each knot count reports the iterate at which its own loss was lowest,
    so Adam's late oscillations do not leak into the comparison between
    counts.  Training stops early when the best total loss improves by less
    than ``cfg.min_improvement`` (relative) over ``cfg.patience`` iterations.
    """
    net = net.copy()
    if du0 is None:
        du0 = uniform_difference(net.config.upper)
    counts = net.config.counts
    trace = LossTrace(counts)
    params = net.parameters()
    state = AdamState.zeros(params)
    names = _param_names(net)
    pts = ps.points if points is None else np.asarray(points, dtype=float)
    fits: dict[int, CountFit] = {}
    t0 = time.perf_counter()
    best: list[float] = []
    for it in range(cfg.iterations):
        tape = ad.Tape()
        out = stack_forward(tape, net, du0, ps, cfg.ridge, points)
        losses = out.loss_values
        total = float(out.total.value)
        if not np.isfinite(total):
            bad = next(c for c, l in zip(counts, losses) if not np.isfinite(l))
            kv = out.knots[counts.index(bad)]
            raise TrainingError(f"non-finite loss at iteration {it} for {bad} knots: {kv}")
        trace.record(losses, total)
        for c, kv, ctrl, l in zip(out.counts, out.knots, out.controls, losses):
            if c not in fits or l < fits[c].loss:
                fits[c] = CountFit(c, kv, ctrl, l, l * pts.shape[0], it, out.params)
        best.append(min(total, best[-1]) if best else total)
        w = cfg.patience
        if len(best) > w and best[-w - 1] - best[-1] < cfg.min_improvement * best[-w - 1]:
            log.debug("early stop at iteration %d", it)
            break
        if it == cfg.iterations - 1:
            break
        grads = tape.backward(out.total)
        params = adam_step(params, [grads[v] for v in out.leaves], state, cfg, names)
        net.set_parameters(params)
    seconds = time.perf_counter() - t0
    return TrainResult(trace, {c: fits[c] for c in counts}, net, len(trace), seconds)


def fit_network(
    ps: PointSet,
    lower: int,
    upper: int,
    cfg: TrainConfig,
    decrement: int = 1,
    degree: int = 3,
    pnetwork: bool = False,
    hidden: int | None = None,
    points: np.ndarray | None = None,
    du0: np.ndarray | None = None,
) -> TrainResult:
    """Build a fresh stack over ``[lower, upper]`` and train it."""
    config = NetworkConfig(upper, lower, decrement, hidden, degree, pnetwork)
    net = build_network(config, cfg.seed, len(ps))
    return train(net, ps, cfg, du0=du0, points=points)


def select_knot_count(final_losses: dict[int, float], delta: float = 0.05) -> int:
    """Smallest count whose loss is within a factor ``1 + delta`` of the best."""
    if not final_losses:
        raise ValueError("no candidate knot counts")
    finite = {c: l for c, l in final_losses.items() if np.isfinite(l)}
    if not finite:
        raise ValueError("no candidate has a finite loss")
    best = min(finite.values())
    return min(c for c, l in finite.items() if l <= (1.0 + delta) * best)


def bracket_from_losses(final_losses: dict[int, float], decrement: int, delta: float = 0.05) -> tuple[int, int]:
    """Adjacent pair ``(k - decrement, k)`` around the first acceptable count ``k``.

    ``k`` is the smallest count whose loss is within ``1 + delta`` of the
    best; when that is already the smallest count tried, the lowest pair is
    returned.
    """
    k = select_knot_count(final_losses, delta)
    lowest = min(final_losses)
    if k == lowest:
        return lowest, lowest + decrement
    return k - decrement, k


def rough_train(
    ps: PointSet,
    lower: int,
    upper: int,
    cfg: TrainConfig,
    decrement: int = 5,
    iterations: int = 500,
    degree: int = 3,
    points: np.ndarray | None = None,
) -> tuple[tuple[int, int], TrainResult]:
    """Coarse pass over a wide range, returning a tight bracket for the solve phase."""
    if upper - lower < decrement:
        raise ConfigError(f"range [{lower}, {upper}] too narrow for decrement {decrement}")
    if (upper - lower) % decrement:
        raise ConfigError(f"range [{lower}, {upper}] is not a multiple of decrement {decrement}")
    rough_cfg = TrainConfig(**{**asdict(cfg), "iterations": iterations})
    result = fit_network(ps, lower, upper, rough_cfg, decrement, degree, points=points)
    return bracket_from_losses(result.final_losses(), decrement, cfg.delta), result


def coalesce_knots(kv: KnotVector, tol: float) -> KnotVector:
    """Merge runs of interior knots closer than ``tol`` into one multiple knot.

    A run is replaced by its mean with multiplicity equal to the run length,
    capped at the degree.
    """
    inner = kv.interior
    if inner.size == 0 or tol <= 0:
        return kv
    merged: list[float] = []
    run = [inner[0]]
    for x in inner[1:]:
        if x - run[-1] < tol:
            run.append(x)
            continue
        merged += [float(np.mean(run))] * min(len(run), kv.degree)
        run = [x]
    merged += [float(np.mean(run))] * min(len(run), kv.degree)
    return KnotVector.from_interior(merged, kv.degree)


def refit(kv: KnotVector, ps: PointSet, ridge: float = 1e-8, points: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Control points for fixed knots, and the per-point squared residual."""
    pts = ps.points if points is None else np.asarray(points, dtype=float)
    a = build_design_matrix(kv, ps.params)
    c = solve_controls(a, pts, ridge)
    return c, float(np.sum((pts - a @ c) ** 2) / pts.shape[0])
