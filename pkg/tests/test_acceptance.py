"""End-to-end acceptance checks; a pass/fail line per criterion is printed in the summary."""

import numpy as np
import pytest

from deepknot import autodiff as ad
from deepknot.datasets import random_spline, spline_samples
from deepknot.driver import Normalizer, RunConfig, fit_errors, run_baselines, run_fit
from deepknot.network import du_to_knots, knots_to_difference
from deepknot.spline import KnotVector, eval_basis
from deepknot.trainer import TrainConfig, fit_network, rough_train, select_knot_count

from netcheck import network_gradients, random_instance

pytestmark = pytest.mark.slow


@pytest.fixture
def measured(record_property):
    def note(text):
        print(text)
        record_property("measured", text)

    return note


@pytest.fixture(scope="module")
def peak_run():
    return run_fit(RunConfig(data="peak_function", knot_range="5:9", decrement=1, data_seed=0, seed=0))


@pytest.mark.criterion(1, "peak function selects 5 knots, Hausdorff <= 0.08, <= 120 s")
def test_peak_function_benchmark(peak_run, measured):
    r = peak_run.report
    assert len(peak_run.data) == 1001
    measured(f"count={r.selected_count} H={r.hausdorff:.4f} dense={r.hausdorff_dense:.4f} t={r.seconds:.1f}s")
    assert r.selected_count == 5
    assert r.hausdorff <= 0.08
    assert r.seconds <= 120


@pytest.mark.criterion(2, "space curve count in [13,17], Hausdorff <= 0.35, >= 3 knots in [0.45,0.55], <= 120 s")
def test_space_curve_benchmark(measured):
    r = run_fit(RunConfig(data="space_curve", knot_range="13:17")).report
    near_feature = sum(0.45 <= k <= 0.55 for k in r.knots)
    measured(
        f"count={r.selected_count} H={r.hausdorff:.4f} dense={r.hausdorff_dense:.4f} "
        f"knots_near_half={near_feature} t={r.seconds:.1f}s"
    )
    assert 13 <= r.selected_count <= 17
    assert r.hausdorff <= 0.35
    assert near_feature >= 3
    assert r.seconds <= 120


@pytest.mark.criterion(3, "rough bracket (C=5, n=6) contains k*=8, solve phase selects <= 9")
def test_rough_bracketing(measured):
    k_true = 8
    kv, ctrl = random_spline(k_true, seed=0, min_gap=0.08)
    ps = spline_samples(kv, ctrl, 1000, noise=0.03, seed=0)
    pts = Normalizer.fit(ps.points).forward(ps.points)
    cfg = TrainConfig(seed=0)
    (lo, hi), rough = rough_train(ps, 5, 30, cfg, decrement=5, iterations=500, points=pts)
    assert len(rough.fits) == 6
    solve = fit_network(ps, lo, hi, cfg, decrement=1, points=pts)
    chosen = select_knot_count(solve.final_losses(), cfg.delta)
    measured(f"bracket=[{lo},{hi}] selected={chosen}")
    assert lo <= k_true <= hi
    assert chosen <= k_true + 1


@pytest.mark.criterion(4, "exact recovery of a random cubic spline: loss < 1e-6, Hausdorff < 1e-3")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exact_recovery(seed, measured):
    m = 3
    kv, ctrl = random_spline(m, seed=seed)
    ps = spline_samples(kv, ctrl, 200)
    norm = Normalizer.fit(ps.points)
    fit = fit_network(ps, m, m, TrainConfig(seed=seed), points=norm.forward(ps.points)).fits[m]
    h, _ = fit_errors(fit.knots, norm.inverse(fit.controls), ps)
    measured(f"seed {seed}: loss={fit.loss:.2e} H={h:.2e} knot_err={np.abs(fit.knots.interior - kv.interior).max():.1e}")
    assert fit.loss < 1e-6
    assert h < 1e-3


@pytest.mark.criterion(5, "20 random networks: all weight gradients match central differences")
def test_gradient_check_suite(measured):
    worst = 0.0
    for seed in range(20):
        net, ps, du0 = random_instance(seed)
        assert len(ps) <= 15 and net.config.upper <= 4
        analytic, numeric = network_gradients(net, ps, du0)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
    measured(f"max |analytic - numeric| = {worst:.1e}")


@pytest.mark.criterion(6, "invariants: partition of unity, softmax, knot roundtrip, selector scaling, determinism")
def test_invariants(measured):
    rng = np.random.default_rng(0)
    pou = 0.0
    for _ in range(1000):
        inner = np.sort(rng.uniform(0.01, 0.99, rng.integers(0, 12)))
        kv = KnotVector.from_interior(inner, 3)
        pou = max(pou, abs(eval_basis(kv, rng.uniform()).sum() - 1.0))
    assert pou <= 1e-12

    tape = ad.Tape()
    logits = rng.normal(size=9)
    y = ad.softmax(tape.var(logits)).value
    y_shift = ad.softmax(tape.var(logits + 123.4)).value
    assert abs(y.sum() - 1.0) <= 1e-14
    np.testing.assert_allclose(y, y_shift, rtol=1e-12)

    roundtrip = 0.0
    for _ in range(100):
        kv = KnotVector.from_interior(np.sort(rng.uniform(0.02, 0.98, rng.integers(1, 10))), 3)
        back = du_to_knots(ad.Tape(), knots_to_difference(kv)).value
        roundtrip = max(roundtrip, float(np.abs(back - kv.knots).max()))
    assert roundtrip <= 1e-14

    for _ in range(100):
        losses = dict(zip(range(5, 10), rng.uniform(0.01, 1, 5)))
        scale = 10 ** rng.uniform(-6, 6)
        assert select_knot_count(losses) == select_knot_count({c: v * scale for c, v in losses.items()})

    cfg = RunConfig(n_points=201, knot_range="4:6", iterations=40, seed=3)
    assert run_fit(cfg).report.comparable() == run_fit(cfg).report.comparable()
    measured(f"partition={pou:.1e} roundtrip={roundtrip:.1e}")


@pytest.mark.criterion(7, "peak function: network knots beat uniform and NKTP knots at the selected count")
def test_beats_baselines(peak_run, measured):
    r = peak_run.report
    base = run_baselines(peak_run.data, [r.selected_count])[str(r.selected_count)]
    measured(
        f"H network={r.hausdorff:.4f} uniform={base['uniform']['hausdorff']:.4f} nktp={base['nktp']['hausdorff']:.4f}"
    )
    for name in ("uniform", "nktp"):
        assert r.hausdorff < base[name]["hausdorff"]
        assert r.losses[str(r.selected_count)] < base[name]["loss"]
