"""Stacked knot subnetworks.

Each subnetwork is a two-hidden-layer ReLU perceptron whose softmax output
is read as a vector of knot differences.  Subnetworks are chained: the
difference vector emitted by one is the input of the next, and each emits
``decrement`` fewer knots than its predecessor.  A running sum turns
differences into knots, the knots give a design matrix, and a ridge
least-squares layer gives control points and the fitting loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .spline import KnotVector, PointSet, design_matrix_tape, spacing_floor


class ConfigError(ValueError):
    """Inconsistent network or training configuration."""


@dataclass
class SubnetParams:
    """Weights of one perceptron: ``w1, b1, w2, b2, w3, b3``."""

    m_in: int
    m_out: int
    hidden: int
    arrays: list[np.ndarray]

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays)

    def copy(self) -> SubnetParams:
        return SubnetParams(self.m_in, self.m_out, self.hidden, [a.copy() for a in self.arrays])


@dataclass(frozen=True)
class NetworkConfig:
    """Interior-knot range ``[lower, upper]`` walked downward in steps of ``decrement``."""

    upper: int
    lower: int
    decrement: int = 1
    hidden: int | None = None
    degree: int = 3
    pnetwork: bool = False

    def __post_init__(self) -> None:
        if self.lower < 1 or self.upper < self.lower:
            raise ConfigError(f"need upper >= lower >= 1, got [{self.lower}, {self.upper}]")
        if self.decrement < 1:
            raise ConfigError("decrement must be >= 1")
        if (self.upper - self.lower) % self.decrement:
            raise ConfigError(
                f"range [{self.lower}, {self.upper}] is not a multiple of decrement {self.decrement}"
            )
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if self.hidden is not None and self.hidden < 1:
            raise ConfigError("hidden width must be >= 1")

    @property
    def n_subnets(self) -> int:
        return (self.upper - self.lower) // self.decrement + 1

    @property
    def counts(self) -> list[int]:
        """Interior-knot count of each subnetwork, in stack order."""
        return [self.upper - k * self.decrement for k in range(self.n_subnets)]

    def hidden_width(self, m_in: int) -> int:
        return self.hidden if self.hidden is not None else max(32, 4 * m_in)


@dataclass
class KnotNet:
    config: NetworkConfig
    subnets: list[SubnetParams]
    pnet: SubnetParams | None = None

    def parameters(self) -> list[np.ndarray]:
        arrays = [a for s in self.subnets for a in s.arrays]
        if self.pnet is not None:
            arrays += self.pnet.arrays
        return arrays

    def set_parameters(self, arrays: list[np.ndarray]) -> None:
        it = iter(arrays)
        for s in self.subnets + ([self.pnet] if self.pnet is not None else []):
            s.arrays = [next(it) for _ in s.arrays]

    def copy(self) -> KnotNet:
        return KnotNet(
            self.config,
            [s.copy() for s in self.subnets],
            self.pnet.copy() if self.pnet is not None else None,
        )


def init_subnet(m_in: int, m_out: int, hidden: int, seed) -> SubnetParams:
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` weights, zero biases."""
    if min(m_in, m_out, hidden) < 1:
        raise ConfigError(f"subnet dimensions must be >= 1, got ({m_in}, {hidden}, {m_out})")
    rng = np.random.default_rng(seed)
    arrays = []
    for fan_in, fan_out in ((m_in, hidden), (hidden, hidden), (hidden, m_out)):
        bound = 1.0 / np.sqrt(fan_in)
        arrays.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        arrays.append(np.zeros(fan_out))
    return SubnetParams(m_in, m_out, hidden, arrays)


def build_network(config: NetworkConfig, seed: int, n_points: int | None = None) -> KnotNet:
    """Fresh network; one child seed per subnetwork."""
    seeds = np.random.SeedSequence(seed).spawn(config.n_subnets + 1)
    subnets = []
    m_in = config.upper + 1
    for count, ss in zip(config.counts, seeds):
        subnets.append(init_subnet(m_in, count + 1, config.hidden_width(m_in), ss))
        m_in = count + 1
    pnet = None
    if config.pnetwork:
        if n_points is None:
            raise ConfigError("parametrization subnetwork needs the number of data points")
        n = n_points - 1
        pnet = init_subnet(n, n, config.hidden_width(n), seeds[-1])
    return KnotNet(config, subnets, pnet)


def register(tape: ad.Tape, params: SubnetParams) -> list[ad.Var]:
    return [tape.var(a) for a in params.arrays]


def subnet_forward(tape: ad.Tape, weights, du_in) -> ad.Var:
    """``softmax(W3 relu(W2 relu(W1 x + b1) + b2) + b3)``.

    ``weights`` is a :class:`SubnetParams` (registered as leaves) or the
    six Vars returned by :func:`register`.
    """
    if isinstance(weights, SubnetParams):
        weights = register(tape, weights)
    w1, b1, w2, b2, w3, b3 = weights
    x = du_in if isinstance(du_in, ad.Var) else tape.const(du_in)
    if x.shape != (w1.shape[1],):
        raise ad.ShapeError(f"subnet expects input of length {w1.shape[1]}, got {x.shape}")
    h = ad.relu(w1 @ x + b1)
    h = ad.relu(w2 @ h + b2)
    return ad.softmax(w3 @ h + b3)


def floor_projection(tape: ad.Tape, du: ad.Var, eps: float) -> ad.Var:
    """Clamp increments to a floor and renormalize to unit sum."""
    n = du.shape[0]
    clip = eps / (1.0 - n * eps)
    kept = ad.clip_min(du, clip)
    return kept / ad.sum_all(kept)


def du_to_knots(tape: ad.Tape, du: ad.Var, degree: int = 3) -> ad.Var:
    """Full clamped knot vector (taped) from ``m+1`` increments.

    The first ``m`` partial sums become interior knots; the last partial
    sum is the right endpoint and is replaced by the constant boundary.
    """
    du = du if isinstance(du, ad.Var) else tape.const(du)
    m = du.shape[0] - 1
    du = floor_projection(tape, du, spacing_floor(m))
    interior = ad.cumsum(du)[0:m]
    return ad.concat([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def pnetwork_forward(tape: ad.Tape, weights, ds0) -> ad.Var:
    """Parameter sequence ``(0, partial sums..., 1)`` produced by the parametrization subnetwork."""
    ds = subnet_forward(tape, weights, ds0)
    n = ds.shape[0]
    return ad.concat([np.zeros(1), ad.cumsum(ds)[0 : n - 1], np.ones(1)])


def uniform_difference(m: int) -> np.ndarray:
    """``m+1`` equal increments: ``m`` uniform interior knots."""
    return np.full(m + 1, 1.0 / (m + 1))


def knots_to_difference(kv: KnotVector) -> np.ndarray:
    return np.diff(np.concatenate([[0.0], kv.interior, [1.0]]))


@dataclass
class StackOutput:
    counts: list[int]
    losses: list[ad.Var]
    total: ad.Var
    knots: list[KnotVector]
    controls: list[np.ndarray]
    params: np.ndarray
    leaves: list[ad.Var] = field(default_factory=list)

    @property
    def loss_values(self) -> list[float]:
        return [float(l.value) for l in self.losses]


def check_chain(net: KnotNet, du0) -> None:
    m_in = len(du0)
    for k, s in enumerate(net.subnets):
        if s.m_in != m_in:
            raise ConfigError(f"subnet {k + 1} expects {s.m_in} inputs but receives {m_in}")
        if s.arrays[0].shape != (s.hidden, s.m_in) or s.arrays[4].shape != (s.m_out, s.hidden):
            raise ConfigError(f"subnet {k + 1} weight shapes are inconsistent")
        m_in = s.m_out


def stack_forward(
    tape: ad.Tape,
    net: KnotNet,
    du0,
    ps: PointSet,
    ridge: float = 1e-8,
    points: np.ndarray | None = None,
) -> StackOutput:
    """Forward pass of every subnetwork and the summed, point-normalized loss.

    ``points`` overrides ``ps.points`` (e.g. normalized coordinates).
    """
    check_chain(net, du0)
    degree = net.config.degree
    p = ps.points if points is None else np.asarray(points, dtype=float)
    n_pts = p.shape[0]
    leaves: list[ad.Var] = []

    if net.pnet is not None:
        pw = register(tape, net.pnet)
        params = pnetwork_forward(tape, pw, np.diff(ps.params))
    else:
        pw = []
        params = tape.const(ps.params)

    x = tape.const(np.asarray(du0, dtype=float))
    losses, knots, controls, counts = [], [], [], []
    for sub in net.subnets:
        w = register(tape, sub)
        leaves += w
        x = subnet_forward(tape, w, x)
        full = du_to_knots(tape, x, degree)
        a = design_matrix_tape(tape, full, params, degree)
        c = ad.ls_solve(a, p, ridge)
        resid = p - a @ c
        losses.append(ad.sum_all(ad.square(resid)) / n_pts)
        knots.append(KnotVector(degree, full.value))
        controls.append(c.value)
        counts.append(sub.m_out - 1)
    total = losses[0]
    for l in losses[1:]:
        total = total + l
    return StackOutput(counts, losses, total, knots, controls, params.value, leaves + pw)
