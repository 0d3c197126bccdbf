"""End-to-end fitting pipeline and run artifacts."""

from __future__ import annotations

import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import nktp_knots, uniform_knots
from .dataio import atomic_write, curve_csv, load_points, loss_csv
from .datasets import BUILTINS, gen_builtin
from .network import ConfigError
from .spline import KnotVector, PointSet, build_design_matrix, chord_length_params, hausdorff, sample_curve
from .trainer import LossTrace, TrainConfig, coalesce_knots, fit_network, refit, rough_train, select_knot_count

log = logging.getLogger(__name__)

CURVE_SAMPLES = 2000
PARAM_MODES = ("auto", "native", "chord", "network")


@dataclass(frozen=True)
class RunConfig:
    data: str = "peak_function"  # builtin name or path
    n_points: int | None = None
    noise: float | None = None
    data_seed: int = 0
    degree: int = 3
    knot_range: str = "5:9"
    rough: bool = False
    rough_range: str = "10:30"
    rough_decrement: int = 5
    rough_iterations: int = 500
    decrement: int = 1
    iterations: int = 2000
    lr: float = 1e-3
    seed: int = 0
    delta: float = 0.05
    ridge: float = 1e-8
    param_mode: str = "auto"
    coalesce: bool = False
    merge_tol: float = 0.01
    hidden: int | None = None
    outdir: str | None = None

    def __post_init__(self) -> None:
        lo, hi = parse_range(self.knot_range)
        if self.param_mode not in PARAM_MODES:
            raise ConfigError(f"param_mode must be one of {PARAM_MODES}")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if not self.rough and (hi - lo) % self.decrement:
            raise ConfigError(f"knot range {self.knot_range} is not a multiple of decrement {self.decrement}")
        if self.rough:
            rlo, rhi = parse_range(self.rough_range)
            if (rhi - rlo) % self.rough_decrement or rhi - rlo < self.rough_decrement:
                raise ConfigError(
                    f"rough range {self.rough_range} must span a positive multiple of {self.rough_decrement}"
                )

    def train_config(self, iterations: int | None = None) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            iterations=iterations or self.iterations,
            seed=self.seed,
            ridge=self.ridge,
            delta=self.delta,
            merge_tol=self.merge_tol,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in str(text).split(":"))
    except ValueError:
        raise ConfigError(f"knot range must look like 'lo:hi', got {text!r}") from None
    if lo < 1 or hi < lo:
        raise ConfigError(f"knot range needs 1 <= lo <= hi, got {text!r}")
    return lo, hi


@dataclass
class Report:
    selected_count: int
    degree: int
    knots: list[float]  # interior knots of the selected fit
    controls: list[list[float]]  # raw coordinates
    losses: dict[str, float]  # mean squared residual per point, normalized coordinates
    sse_raw: dict[str, float]  # squared Frobenius residual, raw coordinates
    hausdorff: float  # data vs fitted points at the data parameters, raw coordinates
    hausdorff_dense: float  # data vs 2000 uniform curve samples, raw coordinates
    iterations: int
    rough_bracket: list[int] | None
    coalesced: bool
    config: dict
    version: str = __version__
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> Report:
        return cls(**json.loads(text))

    def comparable(self) -> dict:
        """Everything except wall-clock time."""
        d = asdict(self)
        d.pop("seconds")
        return d


@dataclass
class FitRun:
    report: Report
    data: PointSet
    trace: LossTrace
    rough_trace: LossTrace | None
    knots: KnotVector
    controls: np.ndarray  # raw coordinates
    params: np.ndarray


@dataclass(frozen=True)
class Normalizer:
    """Isotropic affine map of points into a unit box around the origin."""

    center: np.ndarray
    scale: float

    @classmethod
    def fit(cls, pts: np.ndarray) -> Normalizer:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        half = float(np.max(hi - lo)) / 2.0
        return cls((lo + hi) / 2.0, half if half > 0 else 1.0)

    def forward(self, pts):
        return (np.asarray(pts) - self.center) / self.scale

    def inverse(self, pts):
        return np.asarray(pts) * self.scale + self.center


def load_data(cfg: RunConfig) -> PointSet:
    if cfg.data in BUILTINS:
        mode = "chord" if cfg.param_mode in ("chord", "network") else "native"
        return gen_builtin(cfg.data, cfg.n_points, cfg.noise, cfg.data_seed, params=mode)
    ps = load_points(cfg.data)
    if cfg.param_mode in ("chord", "network"):
        ps = PointSet(ps.points, chord_length_params(ps.points), ps.meta)
    return ps


def fit_errors(kv: KnotVector, controls_raw: np.ndarray, ps: PointSet, params=None) -> tuple[float, float]:
    """(Hausdorff at data parameters, Hausdorff against dense curve samples), raw coordinates."""
    s = ps.params if params is None else params
    fitted = build_design_matrix(kv, s) @ controls_raw
    _, dense = sample_curve(kv, controls_raw, CURVE_SAMPLES)
    return hausdorff(ps.points, fitted), hausdorff(ps.points, dense)


def run_fit(cfg: RunConfig) -> FitRun:
    """Generate or load data, train the knot network, select a count and evaluate it."""
    t0 = time.perf_counter()
    ps = load_data(cfg)
    norm = Normalizer.fit(ps.points)
    pts = norm.forward(ps.points)
    tcfg = cfg.train_config()
    bracket = None
    rough_trace = None
    if cfg.rough:
        rlo, rhi = parse_range(cfg.rough_range)
        bracket, rough = rough_train(
            ps, rlo, rhi, tcfg, cfg.rough_decrement, cfg.rough_iterations, cfg.degree, points=pts
        )
        rough_trace = rough.trace
        lo, hi, dec = bracket[0], bracket[1], 1
        log.info("rough phase bracket: %s", bracket)
    else:
        lo, hi = parse_range(cfg.knot_range)
        dec = cfg.decrement
    result = fit_network(
        ps, lo, hi, tcfg, dec, cfg.degree, pnetwork=cfg.param_mode == "network", hidden=cfg.hidden, points=pts
    )
    losses = result.final_losses()
    chosen = select_knot_count(losses, cfg.delta)
    fit = result.fits[chosen]
    kv, ctrl = fit.knots, fit.controls
    params = fit.params
    if cfg.coalesce:
        kv = coalesce_knots(kv, cfg.merge_tol)
        ctrl, _ = refit(kv, PointSet(ps.points, params), cfg.ridge, points=pts)
    ctrl_raw = norm.inverse(ctrl)
    h, h_dense = fit_errors(kv, ctrl_raw, ps, params)
    report = Report(
        selected_count=chosen,
        degree=cfg.degree,
        knots=[float(x) for x in kv.interior],
        controls=ctrl_raw.tolist(),
        losses={str(c): float(l) for c, l in sorted(losses.items())},
        sse_raw={str(c): float(f.sse * norm.scale**2) for c, f in sorted(result.fits.items())},
        hausdorff=h,
        hausdorff_dense=h_dense,
        iterations=result.iterations,
        rough_bracket=list(bracket) if bracket else None,
        coalesced=cfg.coalesce,
        config=cfg.to_dict(),
        seconds=time.perf_counter() - t0,
    )
    return FitRun(report, ps, result.trace, rough_trace, kv, ctrl_raw, params)


def baseline_fit(ps: PointSet, kv: KnotVector, ridge: float = 1e-8) -> dict:
    """Least-squares fit at fixed knots with the same metrics as :func:`run_fit`."""
    norm = Normalizer.fit(ps.points)
    ctrl, loss = refit(kv, ps, ridge, points=norm.forward(ps.points))
    h, h_dense = fit_errors(kv, norm.inverse(ctrl), ps)
    return {"knots": [float(x) for x in kv.interior], "loss": loss, "hausdorff": h, "hausdorff_dense": h_dense}


def run_baselines(ps: PointSet, counts: list[int], degree: int = 3, ridge: float = 1e-8) -> dict:
    out = {}
    for m in counts:
        out[str(m)] = {
            "uniform": baseline_fit(ps, uniform_knots(m, degree), ridge),
            "nktp": baseline_fit(ps, nktp_knots(ps.params, m + degree + 1, degree), ridge),
        }
    return out


def _svg(fig) -> str:
    import matplotlib.pyplot as plt

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def plot_losses(trace: LossTrace) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "deepknot", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for c in sorted(trace.counts):
            ax.semilogy(trace.per_count[c], label=f"{c} knots", lw=1)
        ax.semilogy(trace.total, "k--", label="total", lw=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.legend(fontsize=7)
        return _svg(fig)


def plot_fit(ps: PointSet, curve: np.ndarray, knots_on_curve: np.ndarray) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "deepknot", "svg.fonttype": "none"}):
        pts = ps.points
        if pts.shape[1] >= 3:
            fig = plt.figure(figsize=(6, 5))
            ax = fig.add_subplot(projection="3d")
            ax.plot(*pts[:, :3].T, ".", ms=2, color="0.6", label="data")
            ax.plot(*curve[:, :3].T, "r-", lw=1, label="fit")
            ax.plot(*knots_on_curve[:, :3].T, "b^", ms=5, label="knots")
        else:
            fig, ax = plt.subplots(figsize=(6, 4))
            if pts.shape[1] == 1:
                pts = np.column_stack([ps.params, pts])
                curve = np.column_stack([np.linspace(0, 1, len(curve)), curve])
                knots_on_curve = np.column_stack([np.zeros(len(knots_on_curve)), knots_on_curve])
            ax.plot(pts[:, 0], pts[:, 1], ".", ms=2, color="0.6", label="data")
            ax.plot(curve[:, 0], curve[:, 1], "r-", lw=1, label="fit")
            ax.plot(knots_on_curve[:, 0], knots_on_curve[:, 1], "b^", ms=5, label="knots")
        ax.legend(fontsize=7)
        return _svg(fig)


def emit_artifacts(run: FitRun, outdir) -> list[Path]:
    """Write report, loss table, curve samples and SVG plots into ``outdir``."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {outdir}: {e.strerror or e}") from e
    t, curve = sample_curve(run.knots, run.controls, CURVE_SAMPLES)
    knot_pts = build_design_matrix(run.knots, np.unique(run.knots.interior)) @ run.controls
    files = {
        "report.json": run.report.to_json(),
        "losses.csv": loss_csv(run.trace.counts, run.trace.per_count, run.trace.total),
        "curve.csv": curve_csv(t, curve),
        "losses.svg": plot_losses(run.trace),
        "fit.svg": plot_fit(run.data, curve, knot_pts),
    }
    if run.rough_trace is not None:
        files["rough_losses.csv"] = loss_csv(run.rough_trace.counts, run.rough_trace.per_count, run.rough_trace.total)
    written = []
    for name, text in files.items():
        path = outdir / name
        try:
            atomic_write(path, text)
        except OSError as e:
            raise OSError(f"cannot write {path}: {e.strerror or e}") from e
        written.append(path)
    return written
