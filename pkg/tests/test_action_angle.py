import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special

from duffing_blowup.action_angle import (ActionAngleChart, action_of_energy,
                                         angle_action_from_state, energy_of_action,
                                         estimate_bounds, frequency, period_of_energy,
                                         scaled_partials, state_from_angle_action,
                                         turning_points, verify_chart_lemmas)
from duffing_blowup.errors import ChartRangeError, DomainError
from duffing_blowup.kernels import chart as ck
from duffing_blowup.potential import eval_G


def flat_action(h, n=3):
    """Area inside y^2/2 + x^(2n+2)/(2n+2) = h."""
    k = 2 * n + 2
    xp = (k * h) ** (1 / k)
    return 4 * math.sqrt(2 * h) * xp * special.beta(1 / k, 1.5) / k


def quad_action(model, h):
    """4 * int_0^x+ sqrt(2 (h - G)) dx by adaptive quadrature (G is even)."""
    xp = optimize.brentq(lambda x: eval_G(model, x) - h, 0.0, 10 * (8 * h) ** 0.125 + 1,
                         xtol=1e-15, rtol=1e-15)
    f = lambda x: math.sqrt(max(0.0, 2 * (h - eval_G(model, x))))
    val, _ = integrate.quad(f, 0.0, xp, epsabs=0, epsrel=1e-12, limit=400)
    return 4 * val


@pytest.mark.parametrize("h", [1e-2, 1.0, 37.0, 1e4, 1e8, 1e12])
def test_flat_action_closed_form(flat_chart, h):
    assert action_of_energy(flat_chart, h) == pytest.approx(flat_action(h), rel=1e-12)
    # I'(h) = I(h) (1/2 + 1/(2n+2)) / h for a homogeneous potential
    assert period_of_energy(flat_chart, h) == pytest.approx(flat_action(h) * 0.625 / h, rel=1e-12)


@pytest.mark.parametrize("h", [0.3, 10.0, 1e3, 1e5])
def test_action_matches_quadrature(model, chart, h):
    assert action_of_energy(chart, h) == pytest.approx(quad_action(model, h), rel=1e-9)


@pytest.mark.parametrize("h", [2.0, 1e3, 1e6])
def test_period_is_derivative_of_action(chart, h):
    d = 1e-5 * h
    fd = (action_of_energy(chart, h + d) - action_of_energy(chart, h - d)) / (2 * d)
    assert period_of_energy(chart, h) == pytest.approx(fd, rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 12.0))
def test_energy_action_inverse(chart, log_i):
    action = 10 ** log_i
    h = energy_of_action(chart, action)
    assert action_of_energy(chart, h) == pytest.approx(action, rel=1e-13)
    assert frequency(chart, action) == pytest.approx(1 / period_of_energy(chart, h), rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.0, 1.0, exclude_max=True), st.floats(0.5, 11.5))
def test_chart_round_trip(chart, theta, log_i):
    action = 10 ** log_i
    x, y = state_from_angle_action(chart, theta, action)
    h = energy_of_action(chart, action)
    assert 0.5 * y * y + eval_G(chart.model, x) == pytest.approx(h, rel=1e-11)
    back = angle_action_from_state(chart, x, y)
    assert back.I == pytest.approx(action, rel=1e-11)
    d = abs(back.theta - theta)
    assert min(d, 1 - d) < 1e-9


def test_angle_conventions(chart):
    h = energy_of_action(chart, 1e4)
    xm, xp = turning_points(chart, h)
    x0, y0 = state_from_angle_action(chart, 0.0, 1e4)
    xh, yh = state_from_angle_action(chart, 0.5, 1e4)
    assert x0 == pytest.approx(xm, rel=1e-12) and abs(y0) < 1e-6 * xp ** 4
    assert xh == pytest.approx(xp, rel=1e-12)
    _, yq = state_from_angle_action(chart, 0.25, 1e4)
    assert yq > 0  # the first half-revolution runs through y >= 0
    # quarter angles sit at x = 0 for an even potential
    assert abs(state_from_angle_action(chart, 0.25, 1e4)[0]) < 1e-9 * xp


@pytest.mark.parametrize("action", [1e3, 1e6, 1e10])
@pytest.mark.parametrize("offset", [1e-12, 1e-9, 1e-7])
def test_velocity_next_to_turning_points(chart, action, offset):
    # leaving (x_-, 0) the speed grows linearly: |y| = |G'(x_-)| t to first order,
    # with t = offset * period; forming h - G(x) directly would leave ~sqrt(eps h)
    period = 1 / frequency(chart, action)
    for theta, sign in ((offset, 1), (1 - offset, -1), (0.5 - offset, 1), (0.5 + offset, -1)):
        x, y = state_from_angle_action(chart, theta, action)
        expected = abs(ck.g1_value(x, *chart._k[:3])) * offset * period
        assert sign * y == pytest.approx(expected, rel=1e-3)
        back = angle_action_from_state(chart, x, y).theta
        assert back == pytest.approx(theta, abs=1e-3 * offset)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(2.0, 11.0))
def test_analytic_dx_dI_matches_difference(chart, theta, log_i):
    action = 10 ** log_i
    ana = ck.chart_point_with_di(theta, action, *chart.tables, *chart._k)[4]
    # at large I, x(theta, I) ripples on a 1e-3 relative scale in I (the cos 2 pi x
    # term), so a plain central difference at 1e-5 is off by ~3e-4; Richardson
    # removes the d^2 term while keeping the step large enough to stay above round-off
    d1, d2 = (ck.dx_di_difference(theta, action, d, *chart.tables, *chart._k)
              for d in (1e-5, 2e-5))
    fd = (4 * d1 - d2) / 3
    x = state_from_angle_action(chart, theta, action)[0]
    assert ana == pytest.approx(fd, rel=1e-5, abs=1e-7 * abs(x) / action)


def test_dx_dI_ripple_point(chart):
    # a point where the x-ripple makes the plain difference quotient fail
    theta, action = 0.875, 10 ** 10.412109375
    ana = ck.chart_point_with_di(theta, action, *chart.tables, *chart._k)[4]
    fine = ck.dx_di_difference(theta, action, 1e-6, *chart.tables, *chart._k)
    assert ana == pytest.approx(fine, rel=2e-5)


def test_flat_dx_dI_closed_form(flat_chart):
    # homogeneous potential: x(theta, I) = I^(1/(n+2)) X(theta), so dx/dI = x / ((n+2) I)
    for theta in (0.1, 0.3, 0.62, 0.9):
        for action in (10.0, 1e5):
            x, _, _, _, dxdi = ck.chart_point_with_di(theta, action, *flat_chart.tables,
                                                      *flat_chart._k)
            assert dxdi == pytest.approx(x / (5 * action), rel=1e-9)


def test_scaled_partials_bounded(chart):
    b = estimate_bounds(chart, np.geomspace(1e2, 1e11, 5), np.linspace(0, 1, 17)[:-1])
    assert 0 < b.B1 < 10 and 0 < b.B2 < 10 and 0 < b.B3 < 100
    assert b.C1 > 0 and b.C2 > 0
    x1, x2, x3 = scaled_partials(chart, 0.125, 1e6)
    assert x1 < 0 and x3 > 0


def test_chart_range_errors(chart):
    with pytest.raises(ChartRangeError):
        energy_of_action(chart, chart.I_max * 2)
    with pytest.raises(ChartRangeError):
        scaled_partials(chart, 0.1, chart.I_min / 2)
    with pytest.raises(DomainError):
        angle_action_from_state(chart, 0.0, 0.0)
    with pytest.raises(DomainError):
        action_of_energy(chart, -1.0)
    with pytest.raises(DomainError):
        ActionAngleChart(chart.model, I_range=(10.0, 1.0))


def test_flat_control_exact_slopes(flat_chart):
    rep = verify_chart_lemmas(flat_chart, np.logspace(2, 12, 21), tolerance=1e-6)
    assert rep.passed
    for f in rep.fits:
        if f.kind == "equal":
            assert f.max_residual < 1e-6


def test_chart_csv(chart, tmp_path):
    path = tmp_path / "lemmas.csv"
    rep = verify_chart_lemmas(chart, np.logspace(4, 10, 13), csv_path=path)
    assert rep.period_crosscheck < 1e-6
    assert path.read_text().splitlines()[0] == "h,I,dIdh,d2Idh2"

