"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` or directly as a script.  The
lines are repeated in the pytest terminal summary.  Tolerances and time
budgets are pinned here rather than read from the config.
"""
import math
import time

import numpy as np
import pytest

from duffing_blowup.action_angle import ActionAngleChart, frequency, verify_chart_lemmas
from duffing_blowup.escape_analysis import (estimate_blowup_time, run_cycles, verify_cycle_scaling,
                                            verify_quarter_lemmas, verify_sigma_prefactor,
                                            verify_stage_growth)
from duffing_blowup.flow import IntegratorConfig, chart_consistency
from duffing_blowup.forcing_builder import ScheduleParams, build_cycle, build_profile, validate_profile
from duffing_blowup.origin_stability import exit_time, find_subharmonic, stability_scan
from duffing_blowup.profile import ForcingProfile

GRID = [1e3, 1e4, 1e5, 1e6]
SIGMA = 0.5


@pytest.fixture(scope="module")
def cycles(chart):
    return run_cycles(chart, GRID, SIGMA)


def test_criterion_01_chart_lemmas(model, record):
    t = time.time()
    chart = ActionAngleChart(model)
    rep = verify_chart_lemmas(chart, np.logspace(4, 14, 101), tolerance=0.02, strict=False)
    dt = time.time() - t
    slopes = " ".join(f"{f.name}={f.slope:+.4f}" for f in rep.fits)
    c2 = rep.second_derivative_constant
    ok = rep.passed and c2 > 0 and math.isfinite(c2) and dt <= 30
    assert record(1, ok, f"{slopes} |I''| c={c2:.3g} ({dt:.1f}s <= 30s)")


def test_criterion_02_chart_consistency(model, chart, record):
    t = time.time()
    period = 1 / frequency(chart, 1e4)
    flat = chart_consistency(1e4, period, 1.0, chart, strict=False)
    profile, clog = build_profile(model.params, ScheduleParams(I_0=1e4, K_max=1), chart)
    assert len(clog.cycles) >= 3
    span = clog.cycles[2].t_end
    built = chart_consistency(1e4, span, profile, chart, samples=30, strict=False)
    dt = time.time() - t
    ok = flat <= 1e-6 and built <= 1e-6 and dt <= 60
    assert record(2, ok, f"p=1: {flat:.2e}, 3 constructed cycles: {built:.2e} (<= 1e-6; "
                         f"{dt:.1f}s <= 60s)")


def test_criterion_03_sigma_zero_conservation(chart, record):
    worst = 0.0
    for I0 in GRID:
        rec, _ = build_cycle(I0, 0, 0.0, 0.0, 1.0, chart)
        worst = max(worst, abs(rec.I_end - I0) / I0)
    assert record(3, worst <= 1e-8, f"max |dI|/I over one cycle = {worst:.2e} (<= 1e-8)")


def test_criterion_04_cycle_scaling(model, chart, cycles, record):
    fits = verify_cycle_scaling(model.params, chart, SIGMA, GRID, time_tol=0.03, gain_tol=0.05,
                                records=cycles)
    detail = "; ".join(f"{f.name} slope {f.exponent_est:+.4f} (exp {f.expected:+.2f}) "
                       f"r2 {f.r_squared:.4f}" for f in fits)
    assert record(4, all(f.passed for f in fits), detail)


def test_criterion_05_quarter_scaling(model, chart, cycles, record):
    fits = verify_quarter_lemmas(model.params, chart, SIGMA, GRID, tolerance=0.05,
                                 records=cycles)
    dur = [f for f in fits if f.name.startswith("duration q")]
    sig = verify_sigma_prefactor(chart, 1e5, SIGMA, tolerance=0.1)
    ok = all(f.passed for f in dur) and all(s.passed for s in sig)
    detail = ("quarter slopes " + " ".join(f"{f.exponent_est:+.4f}" for f in dur)
              + " (-0.6 +- 0.05); loss ratio " + " ".join(f"q{s.quarter}={s.ratio:.4f}" for s in sig)
              + f" vs {sig[0].expected:.4f} (10%)")
    assert record(5, ok, detail)


def test_criterion_06_stage_growth(model, default_construction, record):
    profile, clog, seconds = default_construction
    rep = verify_stage_growth(clog, ScheduleParams(), model.params)
    est = estimate_blowup_time(clog, ScheduleParams())
    ok = (len(clog.stages) >= 3 and rep.passed and rep.floor_evaluable
          and math.isfinite(rep.c_time) and est.T_inf < 1 and seconds <= 600)
    assert record(6, ok, f"{len(clog.stages)} stages, c_floor={math.exp(rep.log_c_floor):.3g}, "
                         f"c'={rep.c_time:.4g}, T_inf={est.T_inf:.5f} ({seconds:.0f}s <= 600s)")


def test_criterion_07_profile_validity(default_construction, record):
    profile, clog, _ = default_construction
    rep = validate_profile(profile, ScheduleParams().tau, clog.stages)
    assert record(7, rep.ok, f"{profile.n_segments} segments, "
                             f"{len(rep.violations)} violations")


def test_criterion_08_escape_signal(default_construction, record):
    _, clog, _ = default_construction
    est = estimate_blowup_time(clog, ScheduleParams())
    ok = clog.escaped or est.bound < 1
    assert record(8, ok, f"escaped={clog.escaped}, bound sum c' tau'^-k = {est.bound:.4f} (< 1)")


def test_criterion_09_origin_stability(model, default_construction, record):
    profile, _, _ = default_construction
    t = time.time()
    amps = [1e-3, 1e-2, 1e-1]
    rep = stability_scan(profile, model, amps, 10_000, factor=5.0)
    ratios = [m / r for m, r in zip(rep.max_radius, amps)]
    te = exit_time(ForcingProfile.constant(-0.5), model, 0.1, 20.0 / 0.1 ** 2)
    dt = time.time() - t
    ok = rep.bounded and max(ratios) <= 5 and math.isfinite(te) and dt <= 300
    assert record(9, ok, f"mean p={rep.mean_forcing:.4f}, max radius/r "
                         + " ".join(f"{q:.3f}" for q in ratios)
                         + f"; p=-1/2 exits at t={te:.1f} ({dt:.0f}s <= 300s)")


def test_criterion_10_subharmonic(model, default_construction, record):
    profile, _, _ = default_construction
    sub = find_subharmonic(profile, model)
    ok = sub.found and sub.residual <= 1e-10 and sub.minimal_period
    assert record(10, ok, f"p/q={sub.p}/{sub.q} residual {sub.residual:.2e} (<= 1e-10), "
                          f"minimal={sub.minimal_period}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
