import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duffing_blowup.errors import DomainError, InsufficientData, LemmaViolation
from duffing_blowup.escape_analysis import (ScalingFit, estimate_blowup_time, fit_loglog,
                                            quarter_quantities, run_cycles, verify_cycle_scaling,
                                            verify_quarter_lemmas, verify_stage_growth,
                                            write_fits_csv)
from duffing_blowup.forcing_builder import ConstructionLog, ScheduleParams, StageRecord
from duffing_blowup.potential import EquationParams


@settings(max_examples=60, deadline=None)
@given(st.floats(-2.0, 2.0).filter(lambda e: abs(e) > 0.01), st.floats(1e-3, 1e3),
       st.integers(3, 8))
def test_fit_recovers_exact_power_law(expo, c, npts):
    x = np.geomspace(1e3, 1e7, npts)
    fit = fit_loglog("q", x, c * x ** expo, expo)
    assert fit.exponent_est == pytest.approx(expo, abs=1e-9)
    assert fit.r_squared > 1 - 1e-12
    assert np.max(np.abs(fit.residuals())) < 1e-9


def test_fit_tolerance_and_r2():
    x = np.geomspace(1e3, 1e6, 4)
    assert fit_loglog("q", x, x ** 0.63, 0.6, tolerance=0.05).passed
    assert not fit_loglog("q", x, x ** 0.63, 0.6, tolerance=0.02).passed
    noisy = x ** 0.6 * np.array([1.0, 3.0, 0.3, 1.0])
    assert not fit_loglog("q", x, noisy, 0.6).passed  # slope fine-ish, r^2 poor


def test_fit_errors():
    with pytest.raises(InsufficientData):
        fit_loglog("q", [1e3, 1e4], [1.0, 2.0], 0.6)
    with pytest.raises(LemmaViolation):
        fit_loglog("q", [1e3, 1e4, 1e5], [1.0, -2.0, 3.0], 0.6)


def test_grid_must_span_three_decades(model, chart):
    with pytest.raises(DomainError):
        verify_cycle_scaling(model.params, chart, 0.5, [1e3, 1e4, 1e5])


def synthetic_log(c_time, K, I_0=1e6, taup=16.0):
    """Stages whose durations are exactly c' tau'^-k, with actions on the growth floor."""
    stages = []
    T = 0.0
    for k in range(1, K + 1):
        T += c_time * taup ** -k
        stages.append(StageRecord(k, k, T, I_0 ** (1.1 ** k), 2.0 ** -k, 1))
    return ConstructionLog(I_0, [], stages)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 20.0), st.integers(2, 6))
def test_blowup_extrapolation_is_exact_for_geometric_stages(c_time, K):
    est = estimate_blowup_time(synthetic_log(c_time, K), ScheduleParams())
    assert est.c_time == pytest.approx(c_time, rel=1e-8)
    assert est.bound == pytest.approx(c_time / 15, rel=1e-8)
    # the geometric tail makes the extrapolation exact: T_inf = sum over all k = c'/15
    assert est.T_inf == pytest.approx(c_time / 15, rel=1e-8)
    assert est.passed == (c_time / 15 < 1)


def test_stage_growth_on_floor():
    clog = synthetic_log(10.0, 4)
    rep = verify_stage_growth(clog, ScheduleParams(), EquationParams())
    # actions sit exactly on I_0^(l^k), so the floor constant is 1
    assert rep.log_c_floor == pytest.approx(0.0, abs=1e-9)
    assert rep.c_time == pytest.approx(10.0)
    assert rep.c_growth > 0 and rep.passed
    assert rep.loglog_slope == pytest.approx(math.log(1.1), rel=1e-9)


def test_single_stage_and_empty_logs():
    rep = verify_stage_growth(synthetic_log(10.0, 1), ScheduleParams(), EquationParams())
    assert rep.time_evaluable and not rep.growth_evaluable and rep.passed
    est = estimate_blowup_time(synthetic_log(10.0, 1), ScheduleParams())
    assert est.infinite_tail
    with pytest.raises(InsufficientData):
        verify_stage_growth(ConstructionLog(1e6), ScheduleParams(), EquationParams())
    with pytest.raises(InsufficientData):
        estimate_blowup_time(ConstructionLog(1e6), ScheduleParams())


def test_quarter_fits_on_small_grid(model, chart, tmp_path):
    grid = [1e3, 1e4, 1e5, 1e6]
    recs = run_cycles(chart, grid, 0.5)
    for r in recs:
        dur, inc, span = quarter_quantities(r)
        assert sum(dur) == pytest.approx(r.t_end - r.t_start)
        assert 0 < span < dur[0]
    fits = verify_quarter_lemmas(model.params, chart, 0.5, grid, records=recs)
    assert len(fits) == 9 and all(f.passed for f in fits)
    path = tmp_path / "fits.csv"
    write_fits_csv(path, fits)
    assert len(path.read_text().splitlines()) == 1 + 9 * 4
    assert isinstance(fits[0], ScalingFit) and fits[0].to_dict()["passed"]
    # the ramp margin w / quarter duration shrinks along the sweep
    margins = [r.margin for r in recs]
    assert all(a > b for a, b in zip(margins[:-1], margins[1:]))
