"""Quadrature kernels behind the action-angle chart.

All orbit integrals use the substitution x = x_+ sin(phi), which turns the
inverse square-root singularity of 1/sqrt(h - G) at the turning points into
a smooth integrand on [0, pi/2].  The phi interval is split into panels
whose count grows with the number of oscillations of a(x) under the orbit,
and each panel gets a 16-point Gauss-Legendre rule.

Naming: ``gp`` is G(x_+), the energy actually represented by a computed
turning point; ``Q`` is the quarter period, so the full period (= I'(h)) is
4Q and h'(I) = 1/(4Q).
"""
import math

import numpy as np

from .._accel import USE_NUMBA, jit
from .potential import g1_array, g_array, g_value, g1_value, turning_point

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)
_HALF_PI = 0.5 * math.pi
SQRT2 = math.sqrt(2.0)
# below this x-distance L from the turning point, gp - G(x) is integrated instead
# of subtracted: the subtraction loses about log10(G / (G' L)) digits, which is
# under 3 at L = 0.05 for any x_+ in the chart range
NEAR_TURN = 0.05


@jit
def gap_value(phi, xp, gp, coeffs, period, deg):
    """gp - G(x_+ sin phi) without cancellation next to the turning points."""
    aphi = abs(phi)
    u = 2.0 * math.sin(0.25 * math.pi - 0.5 * aphi) ** 2  # 1 - sin|phi|
    span = xp * u
    if span > NEAR_TURN:
        return gp - g_value(xp * math.sin(aphi), coeffs, period, deg)
    acc = 0.0
    for k in range(8):
        acc += _GL8_W[k] * g1_value(xp - 0.5 * span * (1.0 - _GL8_X[k]), coeffs, period, deg)
    return 0.5 * span * acc


@jit
def _gap_array_loop(phis, xp, gp, coeffs, period, deg):
    out = np.empty(phis.shape[0])
    for i in range(phis.shape[0]):
        out[i] = gap_value(phis[i], xp, gp, coeffs, period, deg)
    return out


def _gap_array_numpy(phis, xp, gp, coeffs, period, deg):
    aphi = np.abs(phis)
    u = 2.0 * np.sin(0.25 * np.pi - 0.5 * aphi) ** 2
    span = xp * u
    out = gp - g_array(xp * np.sin(aphi), coeffs, period, deg)
    near = span <= NEAR_TURN
    if np.any(near):
        L = span[near][:, None]
        v = xp - 0.5 * L * (1.0 - _GL8_X[None, :])
        g1 = g1_array(v.ravel(), coeffs, period, deg).reshape(v.shape)
        out[near] = 0.5 * L[:, 0] * (g1 @ _GL8_W)
    return out


gap_array = _gap_array_loop if USE_NUMBA else _gap_array_numpy


@jit
def panel_width(xp, period, nharm):
    m = 4 + int(math.ceil(nharm * xp / period))
    return _HALF_PI / m


@jit
def _nodes(a, b, width):
    npan = max(1, int(math.ceil(abs(b - a) / width)))
    hw = 0.5 * (b - a) / npan
    mids = a + (2.0 * np.arange(npan) + 1.0) * hw
    phis = (mids.reshape(npan, 1) + hw * _GL_X.reshape(1, 16)).ravel()
    wts = (np.ones((npan, 1)) * (hw * _GL_W).reshape(1, 16)).ravel()
    return phis, wts


@jit
def _time_density(phis, xp, gp, coeffs, period, deg):
    # dt/dphi = x_+ cos(phi) / sqrt(2 (gp - G(x_+ sin phi)))
    d = np.maximum(gap_array(phis, xp, gp, coeffs, period, deg), 1e-300 * gp)
    return xp * np.cos(phis) / np.sqrt(2.0 * d)


@jit
def time_integral(a, b, xp, gp, width, coeffs, period, deg):
    """int_a^b dt/dphi dphi (signed)."""
    if a == b:
        return 0.0
    phis, wts = _nodes(a, b, width)
    return np.sum(wts * _time_density(phis, xp, gp, coeffs, period, deg))


@jit
def time_density_at(phi, xp, gp, coeffs, period, deg):
    d = max(gap_value(phi, xp, gp, coeffs, period, deg), 1e-300 * gp)
    return xp * math.cos(phi) / math.sqrt(2.0 * d)


@jit
def orbit_integrals(xp, gp, coeffs, period, deg, nharm):
    """(action, quarter period) of the unforced orbit through (x_+, 0)."""
    width = panel_width(xp, period, nharm)
    phis, wts = _nodes(0.0, _HALF_PI, width)
    d = np.maximum(gap_array(phis, xp, gp, coeffs, period, deg), 1e-300 * gp)
    sd = np.sqrt(2.0 * d)
    c = xp * np.cos(phis)
    action = 4.0 * np.sum(wts * sd * c)
    quarter = np.sum(wts * c / sd)
    return action, quarter


@jit
def action_and_period(h, coeffs, period, deg, nharm, a_lo, a_hi):
    """I(h) and I'(h) (the period) by quadrature."""
    xp = turning_point(h, coeffs, period, deg, a_lo, a_hi)
    gp = g_value(xp, coeffs, period, deg)
    act, q = orbit_integrals(xp, gp, coeffs, period, deg, nharm)
    return act, 4.0 * q


@jit
def build_tables(hs, coeffs, period, deg, nharm, a_lo, a_hi):
    n = hs.shape[0]
    acts = np.empty(n)
    pers = np.empty(n)
    for i in range(n):
        acts[i], pers[i] = action_and_period(hs[i], coeffs, period, deg, nharm, a_lo, a_hi)
    return acts, pers


@jit
def _table_guess(action, log_i, log_h, slope):
    li = math.log(action)
    k = np.searchsorted(log_i, li) - 1
    k = min(max(k, 0), log_i.shape[0] - 2)
    dx = log_i[k + 1] - log_i[k]
    s = (li - log_i[k]) / dx
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return math.exp(h00 * log_h[k] + h10 * dx * slope[k]
                    + h01 * log_h[k + 1] + h11 * dx * slope[k + 1])


@jit
def energy_state(action, h_guess, coeffs, period, deg, nharm, a_lo, a_hi):
    """Newton-solve I(h) = action from h_guess.

    Returns (h, x_+, G(x_+), quarter period) all evaluated at the final h.
    """
    h = h_guess
    for _ in range(12):
        xp = turning_point(h, coeffs, period, deg, a_lo, a_hi)
        gp = g_value(xp, coeffs, period, deg)
        act, q = orbit_integrals(xp, gp, coeffs, period, deg, nharm)
        if abs(act - action) <= 1e-14 * action:
            break
        h = h + (action - act) / (4.0 * q)
    return h, xp, gp, q


@jit
def energy_of_action(action, log_i, log_h, slope, coeffs, period, deg, nharm, a_lo, a_hi):
    h0 = _table_guess(action, log_i, log_h, slope)
    return energy_state(action, h0, coeffs, period, deg, nharm, a_lo, a_hi)


@jit
def _solve_phi(theta_half, phi0, xp, gp, q, coeffs, period, deg, nharm):
    # theta_half in [0, 1/2]: find phi with (q + T(phi)) / (4 q) = theta_half
    if theta_half <= 0.0:
        return -_HALF_PI
    if theta_half >= 0.5:
        return _HALF_PI
    width = panel_width(xp, period, nharm)
    target = 4.0 * q * theta_half - q
    phi = phi0
    if not (-_HALF_PI < phi < _HALF_PI):
        phi = 2.0 * math.pi * theta_half - _HALF_PI
    tv = time_integral(0.0, phi, xp, gp, width, coeffs, period, deg)
    lo = -_HALF_PI
    hi = _HALF_PI
    for _ in range(60):
        f = tv - target
        if abs(f) <= 1e-15 * q:
            return phi
        if f > 0.0:
            hi = phi
        else:
            lo = phi
        g = time_density_at(phi, xp, gp, coeffs, period, deg)
        new = phi - f / g
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - phi) <= 1e-15:
            return new
        tv += time_integral(phi, new, xp, gp, width, coeffs, period, deg)
        phi = new
    return phi


@jit
def point_at(theta, phi0, xp, gp, q, coeffs, period, deg, nharm):
    """(x, y, dx/dtheta, phi) on the orbit of energy gp at angle theta (any real).

    phi0 warm-starts the angle solve; pass nan for a cold start.
    """
    th = theta - math.floor(theta)
    upper = th <= 0.5
    if not upper:
        th = 1.0 - th
    phi = _solve_phi(th, phi0, xp, gp, q, coeffs, period, deg, nharm)
    x = xp * math.sin(phi)
    d = gap_value(phi, xp, gp, coeffs, period, deg)
    y = math.sqrt(2.0 * d) if d > 0.0 else 0.0
    if not upper:
        y = -y
    # dx/dtheta = y / h'(I) = 4 q y
    return x, y, 4.0 * q * y, phi


@jit
def chart_point(theta, action, log_i, log_h, slope, coeffs, period, deg, nharm, a_lo, a_hi):
    """(x, y, dx/dtheta, h'(I)) for the chart point (theta, action)."""
    h, xp, gp, q = energy_of_action(action, log_i, log_h, slope, coeffs, period, deg,
                                    nharm, a_lo, a_hi)
    x, y, dxdth, phi = point_at(theta, np.nan, xp, gp, q, coeffs, period, deg, nharm)
    return x, y, dxdth, 0.25 / q


@jit
def _x_at_energy(theta, h, phi0, coeffs, period, deg, nharm, a_lo, a_hi):
    xp = turning_point(h, coeffs, period, deg, a_lo, a_hi)
    gp = g_value(xp, coeffs, period, deg)
    q = orbit_integrals(xp, gp, coeffs, period, deg, nharm)[1]
    return point_at(theta, phi0, xp, gp, q, coeffs, period, deg, nharm)[0]


@jit
def _turning_sensitivity(phis, xp, gp, g1p, coeffs, period, deg):
    # d/dx_+ of the time density at fixed phi, with gp = G(x_+):
    # cos(phi) / sqrt(2D) * (1 - x_+ (G'(x_+) - s G'(x_+ s)) / (2D)),  s = sin(phi)
    s = np.sin(phis)
    x = xp * s
    d = np.maximum(gap_array(phis, xp, gp, coeffs, period, deg), 1e-300 * gp)
    num = g1p - s * g1_array(x, coeffs, period, deg)
    return np.cos(phis) / np.sqrt(2.0 * d) * (1.0 - xp * num / (2.0 * d))


@jit
def dx_dturning(theta, phi, xp, gp, coeffs, period, deg, nharm):
    """dx/dx_+ at fixed angle theta, where x = x_+ sin(phi) is the chart point.

    On the upper half T(phi, x_+) = (4 theta - 1) Q(x_+), so
    dx/dx_+ = sin(phi) + y ((4 theta - 1) dQ/dx_+ - dT/dx_+).
    """
    th = theta - math.floor(theta)
    if th > 0.5:
        th = 1.0 - th
    width = panel_width(xp, period, nharm)
    g1p = g1_value(xp, coeffs, period, deg)
    phis, wts = _nodes(0.0, _HALF_PI, width)
    dq = np.sum(wts * _turning_sensitivity(phis, xp, gp, g1p, coeffs, period, deg))
    dt = 0.0
    if phi != 0.0:
        phis, wts = _nodes(0.0, phi, width)
        dt = np.sum(wts * _turning_sensitivity(phis, xp, gp, g1p, coeffs, period, deg))
    d = gap_value(phi, xp, gp, coeffs, period, deg)
    y = math.sqrt(2.0 * d) if d > 0.0 else 0.0
    return math.sin(phi) + y * ((4.0 * th - 1.0) * dq - dt)


@jit
def chart_point_with_di(theta, action, log_i, log_h, slope, coeffs, period, deg,
                        nharm, a_lo, a_hi):
    """Chart point plus dx/dI at fixed theta.

    dx/dI = h'(I) (dx/dx_+) / G'(x_+).  The x_+ derivative is differentiated
    under the integral sign instead of differenced, since differencing would
    amplify the stopping tolerances of the inner Newton solves.
    """
    h, xp, gp, q = energy_of_action(action, log_i, log_h, slope, coeffs, period, deg,
                                    nharm, a_lo, a_hi)
    x, y, dxdth, phi = point_at(theta, np.nan, xp, gp, q, coeffs, period, deg, nharm)
    hp = 0.25 / q
    dxp = dx_dturning(theta, phi, xp, gp, coeffs, period, deg, nharm)
    return x, y, dxdth, hp, hp * dxp / g1_value(xp, coeffs, period, deg)


@jit
def dx_di_difference(theta, action, fd_rel, log_i, log_h, slope, coeffs, period, deg,
                     nharm, a_lo, a_hi):
    """dx/dI by a central difference in h (relative step fd_rel in I); a cross-check."""
    h, xp, gp, q = energy_of_action(action, log_i, log_h, slope, coeffs, period, deg,
                                    nharm, a_lo, a_hi)
    phi = point_at(theta, np.nan, xp, gp, q, coeffs, period, deg, nharm)[3]
    hp = 0.25 / q
    dh = hp * fd_rel * action
    xr = _x_at_energy(theta, h + dh, phi, coeffs, period, deg, nharm, a_lo, a_hi)
    xl = _x_at_energy(theta, h - dh, phi, coeffs, period, deg, nharm, a_lo, a_hi)
    return hp * (xr - xl) / (2.0 * dh)


@jit
def angle_of_state(x, y, coeffs, period, deg, nharm, a_lo, a_hi):
    """(theta in [0, 1), action, energy) of a nonzero phase point."""
    h = 0.5 * y * y + g_value(x, coeffs, period, deg)
    xp = turning_point(h, coeffs, period, deg, a_lo, a_hi)
    gp = g_value(xp, coeffs, period, deg)
    act, q = orbit_integrals(xp, gp, coeffs, period, deg, nharm)
    s = min(1.0, max(-1.0, x / xp))
    c = math.sqrt(max(0.0, 1.0 - s * s))
    if c < 1e-4:
        # next to a turning point arcsin is ill-conditioned; use the time
        # needed to reach it, |y| / G'(x_+), instead
        tau = abs(y) / g1_value(xp, coeffs, period, deg)
        off = 0.25 * tau / q
        if x > 0.0:
            theta = 0.5 - off if y >= 0.0 else 0.5 + off
        else:
            theta = off if y >= 0.0 else 1.0 - off
    else:
        width = panel_width(xp, period, nharm)
        phi = math.asin(s)
        t = time_integral(0.0, phi, xp, gp, width, coeffs, period, deg)
        branch = (q + t) / (4.0 * q)
        theta = branch if y >= 0.0 else 1.0 - branch
    if theta >= 1.0:
        theta -= 1.0
    return theta, act, h
