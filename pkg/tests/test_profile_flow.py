import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from duffing_blowup.action_angle import AngleActionState, energy_of_action
from duffing_blowup.errors import ConfigError, DomainError, EscapeDetected, InfeasibleError
from duffing_blowup.flow import (IntegratorConfig, PhaseState, advance_to_angle,
                                 advance_to_quarter, angle_action_rate, chart_consistency,
                                 full_energy, integrate_angle_action, integrate_xy, phase_point,
                                 sample_trajectory, write_trajectory_csv)
from duffing_blowup.potential import eval_G
from duffing_blowup.profile import ForcingProfile


@st.composite
def knot_profiles(draw):
    n = draw(st.integers(1, 12))
    ts = sorted(draw(st.lists(st.floats(0.001, 0.999), min_size=n, max_size=n, unique=True)))
    vs = draw(st.lists(st.floats(0.5, 1.0), min_size=n, max_size=n))
    return ForcingProfile.from_knots([0.0] + ts + [1.0], [1.0] + vs + [1.0])


@settings(max_examples=60, deadline=None)
@given(knot_profiles())
def test_profile_continuity_and_integral(p):
    t, v0, v1 = p.arrays()
    assert np.array_equal(v1[:-1], v0[1:])
    # integral against a fine trapezoid rule on the same breakpoints plus midpoints
    fine = np.unique(np.concatenate([t, 0.5 * (t[:-1] + t[1:])]))
    assert p.integral() == pytest.approx(np.trapezoid(p(fine), fine), rel=1e-12)
    assert p(0.25) == pytest.approx(p(1.25), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(knot_profiles())
def test_profile_json_round_trip(p):
    q = ForcingProfile.from_json(p.to_json())
    assert q == p
    assert q.to_json() == p.to_json()


def test_profile_rejects_gaps():
    bad = {"segments": [{"t0": 0.0, "t1": 0.4, "v0": 1.0, "v1": 1.0},
                        {"t0": 0.5, "t1": 1.0, "v0": 1.0, "v1": 1.0}]}
    with pytest.raises(ConfigError):
        ForcingProfile.from_dict(bad)
    with pytest.raises(ConfigError):
        ForcingProfile.from_dict({"segments": []})


def test_integrator_config_validation():
    with pytest.raises(DomainError):
        IntegratorConfig(rel_tol=0)
    with pytest.raises(DomainError):
        IntegratorConfig(max_step=-1.0)
    with pytest.raises(DomainError):
        PhaseState(0.0, math.nan, 0.0)


@pytest.mark.parametrize("p", [1.0, 0.5, -0.3])
def test_xy_energy_conservation(model, p):
    k = 2 * model.params.m + 2
    energy = lambda s: 0.5 * s.y ** 2 + eval_G(model, s.x) + p * s.x ** k / k
    s0 = PhaseState(0.0, 1.3, 0.2)
    s1 = integrate_xy(s0, 0.7, p, model)
    assert energy(s1) == pytest.approx(energy(s0), rel=1e-9)
    back = integrate_xy(s1, 0.0, p, model)
    assert (back.x, back.y) == pytest.approx((s0.x, s0.y), rel=1e-8, abs=1e-9)


def test_angle_action_energy_conservation(chart):
    s0 = AngleActionState(0.3, 1e5)
    e0 = full_energy(chart, s0, 1.0)
    s1 = integrate_angle_action(s0, 0.0, 0.05, 1.0, chart)
    assert s1.theta > s0.theta + 1
    assert full_energy(chart, s1, 1.0) == pytest.approx(e0, rel=1e-9)


def test_unforced_rates(chart):
    # p = 0: the angle advances at h'(I) and the action is frozen
    th_dot, i_dot = angle_action_rate(chart, 0.37, 1e6, 0.0)
    assert i_dot == 0.0
    h = energy_of_action(chart, 1e6)
    d = 1e-6 * 1e6
    hp = (energy_of_action(chart, 1e6 + d) - energy_of_action(chart, 1e6 - d)) / (2 * d)
    assert th_dot == pytest.approx(hp, rel=1e-8)
    assert h > 0


def test_quarter_events_land(chart):
    s = AngleActionState(0.0, 1e4)
    t = 0.0
    for k in range(1, 9):
        t, s = advance_to_quarter(s, t, 1.0, chart)
        assert s.theta == pytest.approx(k / 4, abs=1e-12)
    # dI/dt = -p x^5 dx/dtheta: the action gains on the first quarter, loses on the second
    _, a = advance_to_angle(AngleActionState(0.0, 1e4), 0.0, 0.25, 1.0, chart)
    _, b = advance_to_angle(a, 0.0, 0.5, 1.0, chart)
    assert a.I > 1e4 and b.I < a.I


def test_advance_errors(chart):
    with pytest.raises(DomainError):
        advance_to_angle(AngleActionState(1.0, 1e4), 0.0, 0.5, 1.0, chart)
    with pytest.raises(InfeasibleError):
        advance_to_angle(AngleActionState(0.0, 1e4), 0.0, 50.0, 1.0, chart, t_max=0.01)


def test_escape_cap(chart):
    cfg = IntegratorConfig(I_cap=1.0001e4)
    # gain quarter pushes I over the cap
    with pytest.raises(EscapeDetected) as ei:
        integrate_angle_action(AngleActionState(0.0, 1e4), 0.0, 0.05, 1.0, chart, cfg)
    assert ei.value.action >= 1.0001e4 * (1 - 1e-12)


def test_chart_consistency_constant(chart):
    err = chart_consistency(1e4, 0.05, 1.0, chart)
    assert err < 1e-8


def test_trajectory_csv(chart, tmp_path):
    rows = sample_trajectory(AngleActionState(0.0, 1e4), 0.0, 0.01, 1.0, chart, n_samples=10)
    assert len(rows) == 11
    x, y = phase_point(chart, AngleActionState(rows[-1][1], rows[-1][2]))
    assert (rows[-1][3], rows[-1][4]) == (x, y)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, rows)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,theta,I,x,y,p_of_t" and len(lines) == 12
