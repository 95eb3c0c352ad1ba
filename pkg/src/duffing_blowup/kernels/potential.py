"""Scalar and array kernels for a(x) and G(x) = int_0^x a(s) s^deg ds.

``a`` is the even cosine series ``c[0] + sum_j c[j] cos(2 pi j x / period)``
and ``deg = 2n + 1`` is odd, so G is even and every routine works on |x|.
The harmonic pieces of G use the exact antiderivative of s^deg cos(k s)
(a finite sum) except near the origin, where that sum cancels badly and a
Taylor series is used instead.
"""
import math

import numpy as np

from .._accel import USE_NUMBA, jit

# below k|x| = _SERIES_SWITCH the closed form loses digits to cancellation
_SERIES_SWITCH = 4.0
_SERIES_TERMS = 30


@jit
def _ipow_loop(x, k):
    # x**k for an integer k >= 0 by squaring; numba's pow with a runtime
    # integer exponent goes through the generic (slow) path
    r = 1.0
    b = x
    while k > 0:
        if k & 1:
            r *= b
        b *= b
        k >>= 1
    return r


def _ipow_python(x, k):
    return x ** k


ipow = _ipow_loop if USE_NUMBA else _ipow_python

@jit
def a_value(x, coeffs, period):
    w = 2.0 * math.pi / period
    s = coeffs[0]
    for j in range(1, coeffs.shape[0]):
        s += coeffs[j] * math.cos(w * j * x)
    return s


@jit
def a_derivative(x, coeffs, period):
    w = 2.0 * math.pi / period
    s = 0.0
    for j in range(1, coeffs.shape[0]):
        s -= coeffs[j] * w * j * math.sin(w * j * x)
    return s


@jit
def g1_value(x, coeffs, period, deg):
    """G'(x) = a(x) x^deg."""
    return a_value(x, coeffs, period) * ipow(x, deg)


@jit
def g2_value(x, coeffs, period, deg):
    """G''(x) = a'(x) x^deg + deg a(x) x^(deg-1)."""
    xd = ipow(x, deg - 1)
    return (a_derivative(x, coeffs, period) * xd * x
            + deg * a_value(x, coeffs, period) * xd)


@jit
def _rot(q, c, s):
    # Re[e^{iu} (-i)^q] for cos u = c, sin u = s
    r = q % 4
    if r == 0:
        return c
    if r == 1:
        return s
    if r == 2:
        return -c
    return -s


@jit
def harmonic_integral(x, k, deg):
    """int_0^x s^deg cos(k s) ds for x >= 0, k > 0."""
    u = k * x
    if u <= _SERIES_SWITCH:
        term = 1.0
        acc = 0.0
        u2 = u * u
        for q in range(_SERIES_TERMS):
            acc += term / (deg + 2 * q + 1)
            term *= -u2 / ((2 * q + 1) * (2 * q + 2))
            if abs(term) < 1e-18 * abs(acc):
                break
        return ipow(x, deg + 1) * acc
    c = math.cos(u)
    s = math.sin(u)
    # term r is deg!/(deg-r)! x^(deg-r) / k^(r+1); build it by ratios
    term = ipow(x, deg) / k
    acc = 0.0
    sign = 1.0
    for r in range(deg + 1):
        acc += sign * term * _rot(r + 1, c, s)
        if r < deg:
            term *= (deg - r) / u
        sign = -sign
    # last term is deg!/k^(deg+1); subtract the value at s = 0
    acc -= (-1.0) ** deg * term * _rot(deg + 1, 1.0, 0.0)
    return acc


@jit
def g_value(x, coeffs, period, deg):
    ax = abs(x)
    out = coeffs[0] * ipow(ax, deg) * ax / (deg + 1)
    w = 2.0 * math.pi / period
    for j in range(1, coeffs.shape[0]):
        if coeffs[j] != 0.0:
            out += coeffs[j] * harmonic_integral(ax, w * j, deg)
    return out


@jit
def _g_array_loop(xs, coeffs, period, deg):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = g_value(xs[i], coeffs, period, deg)
    return out


def _g_array_numpy(xs, coeffs, period, deg):
    ax = np.abs(xs)
    out = coeffs[0] * ax ** (deg + 1) / (deg + 1)
    w = 2.0 * np.pi / period
    for j in range(1, coeffs.shape[0]):
        if coeffs[j] == 0.0:
            continue
        k = w * j
        u = k * ax
        us = np.minimum(u, _SERIES_SWITCH)
        u2 = us * us
        term = np.ones_like(ax)
        ser = np.zeros_like(ax)
        for q in range(_SERIES_TERMS):
            ser += term / (deg + 2 * q + 1)
            term = term * (-u2 / ((2 * q + 1) * (2 * q + 2)))
        ser *= ax ** (deg + 1)
        cu, su = np.cos(u), np.sin(u)
        rot = (cu, su, -cu, -su)
        acc = np.zeros_like(ax)
        coef, sign = 1.0, 1.0
        for r in range(deg + 1):
            acc += sign * coef * ax ** (deg - r) * k ** (-(r + 1)) * rot[(r + 1) % 4]
            if r < deg:
                coef *= deg - r
            sign = -sign
        acc -= (-1.0) ** deg * coef * k ** (-(deg + 1)) * (1.0 if (deg + 1) % 4 == 0 else -1.0)
        out = out + coeffs[j] * np.where(u <= _SERIES_SWITCH, ser, acc)
    return out


if USE_NUMBA:
    g_array = _g_array_loop
else:
    g_array = _g_array_numpy


@jit
def _g1_array_loop(xs, coeffs, period, deg):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = g1_value(xs[i], coeffs, period, deg)
    return out


def _g1_array_numpy(xs, coeffs, period, deg):
    w = 2.0 * np.pi / period
    a = np.full(xs.shape, coeffs[0])
    for j in range(1, coeffs.shape[0]):
        a = a + coeffs[j] * np.cos(w * j * xs)
    return a * xs ** deg


g1_array = _g1_array_loop if USE_NUMBA else _g1_array_numpy


@jit
def turning_point(h, coeffs, period, deg, a_lo, a_hi):
    """Positive root of G(x) = h, by Newton inside the bracket set by a_lo <= a <= a_hi."""
    p = deg + 1
    lo = (p * h / a_hi) ** (1.0 / p)
    hi = (p * h / a_lo) ** (1.0 / p)
    x = (p * h / coeffs[0]) ** (1.0 / p)
    if x <= lo or x >= hi:
        x = 0.5 * (lo + hi)
    for _ in range(100):
        f = g_value(x, coeffs, period, deg) - h
        if f > 0.0:
            hi = x
        else:
            lo = x
        d = g1_value(x, coeffs, period, deg)
        step = f / d
        xn = x - step
        if xn <= lo or xn >= hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= 4e-16 * x:
            return xn
        x = xn
        if hi - lo <= 4e-16 * x:
            return x
    return x
