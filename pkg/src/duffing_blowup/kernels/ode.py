"""Adaptive DOP853 stepping under piecewise-linear periodic forcing.

The forcing is given by segment boundaries kt on [0, 1] (kt[0] = 0,
kt[-1] = 1) and per-segment end values kv0, kv1, extended periodically.
Integration restarts at every boundary so no step straddles a kink of p(t).  One optional event (a component crossing an
offset in a chosen direction) stops the run; its time is located on the
cubic Hermite interpolant of the accepted step and then polished by Newton
iterations that re-take a single step from the step start, so the reported
state is an honest 8th-order solution rather than an interpolated one.

Coefficients come from scipy's own DOP853 tables.
"""
import math

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .._accel import jit
from .rhs import KIND_XY, P_DEG, P_MDEG, P_PERIOD, evaluate, xy_accel

_NS = _dop.N_STAGES
_A = np.ascontiguousarray(_dop.A[:_NS, :_NS])
_B = np.ascontiguousarray(_dop.B)
_C = np.ascontiguousarray(_dop.C[:_NS])
_E3 = np.ascontiguousarray(_dop.E3)
_E5 = np.ascontiguousarray(_dop.E5)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / 8.0
_EPS = 2.220446049250313e-16

OK, EVENT, CAP, UNDERFLOW, NONFINITE, MAX_STEPS, ESCAPED = range(7)
STATUS_NAMES = ("ok", "event", "cap", "step-underflow", "nonfinite", "max-steps", "escaped")

_EMPTY = np.zeros(2)


@jit
def _step(kind, t, z, f, h, pv, ps, ts, coeffs, li, lh, sl, prm, rtol, atol,
          K, tmp, znew, fnew):
    """One DOP853 step of size h; fills znew, fnew and returns the error norm."""
    n = z.shape[0]
    period = prm[P_PERIOD]
    deg = int(prm[P_DEG])
    mdeg = int(prm[P_MDEG])
    for i in range(n):
        K[0, i] = f[i]
    for s in range(1, _NS):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += _A[s, j] * K[j, i]
            tmp[i] = z[i] + h * acc
        tt = t + _C[s] * h
        if kind == KIND_XY:
            K[s, 0] = tmp[1]
            K[s, 1] = xy_accel(tmp[0], pv + ps * (tt - ts), coeffs, period, deg, mdeg)
        else:
            evaluate(kind, tt, tmp, pv + ps * (tt - ts), coeffs, li, lh, sl, prm, K[s])
    for i in range(n):
        acc = 0.0
        for j in range(_NS):
            acc += _B[j] * K[j, i]
        znew[i] = z[i] + h * acc
    if kind == KIND_XY:
        fnew[0] = znew[1]
        fnew[1] = xy_accel(znew[0], pv + ps * (t + h - ts), coeffs, period, deg, mdeg)
    else:
        evaluate(kind, t + h, znew, pv + ps * (t + h - ts), coeffs, li, lh, sl, prm, fnew)
    for i in range(n):
        K[_NS, i] = fnew[i]
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        sc = atol[i] + rtol * max(abs(z[i]), abs(znew[i]))
        a5 = 0.0
        a3 = 0.0
        for j in range(_NS + 1):
            a5 += _E5[j] * K[j, i]
            a3 += _E3[j] * K[j, i]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * n)


@jit
def _initial_step(kind, t, z, f, direction, pv, ps, ts, coeffs, li, lh, sl, prm,
                  rtol, atol, tmp, f1):
    # Hairer's starting-step heuristic, as in scipy's select_initial_step
    n = z.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol[i] + rtol * abs(z[i])
        d0 += (z[i] / sc) ** 2
        d1 += (f[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    for i in range(n):
        tmp[i] = z[i] + direction * h0 * f[i]
    tt = t + direction * h0
    evaluate(kind, tt, tmp, pv + ps * (tt - ts), coeffs, li, lh, sl, prm, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol[i] + rtol * abs(z[i])
        d2 += ((f1[i] - f[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h0
    if not math.isfinite(d2):
        return h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1)


@jit
def _hermite_root(y0, d0, y1, d1):
    # root in (0, 1] of the cubic Hermite with H(0) = y0 < 0 <= H(1) = y1
    lo = 0.0
    hi = 1.0
    s = y0 / (y0 - y1)
    for _ in range(80):
        a = (1 - s) ** 2
        v = (1 + 2 * s) * a * y0 + s * a * d0 + s * s * (3 - 2 * s) * y1 + s * s * (s - 1) * d1
        dv = 6 * s * (s - 1) * (y0 - y1) + (1 - s) * (1 - 3 * s) * d0 + s * (3 * s - 2) * d1
        if v < 0.0:
            lo = s
        else:
            hi = s
        new = s - v / dv if dv != 0.0 else 0.5 * (lo + hi)
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - s) <= 1e-16 or hi - lo <= 1e-16:
            return new
        s = new
    return s


@jit
def _locate(kind, t0, z0, f0, hs, znew, fnew, pv, ps, ts, coeffs, li, lh, sl, prm,
            rtol, atol, ev_idx, ev_off, ev_sign, K, tmp, zev, fev):
    """Event time inside the accepted step [t0, t0 + hs]; state left in zev, fev."""
    y0 = ev_sign * (z0[ev_idx] - ev_off)
    y1 = ev_sign * (znew[ev_idx] - ev_off)
    d0 = ev_sign * f0[ev_idx] * hs
    d1 = ev_sign * fnew[ev_idx] * hs
    s = _hermite_root(y0, d0, y1, d1)
    tau = t0 + s * hs
    etol = 4.0 * _EPS * max(1.0, abs(ev_off))
    for _ in range(12):
        _step(kind, t0, z0, f0, tau - t0, pv, ps, ts, coeffs, li, lh, sl, prm,
              rtol, atol, K, tmp, zev, fev)
        e = ev_sign * (zev[ev_idx] - ev_off)
        de = ev_sign * fev[ev_idx]
        if abs(e) <= etol or de == 0.0 or not math.isfinite(e):
            break
        new = tau - e / de
        lo = min(t0, t0 + hs)
        hi = max(t0, t0 + hs)
        new = min(max(new, lo), hi)
        if abs(new - tau) <= 2.0 * _EPS * max(1.0, abs(tau)):
            break
        tau = new
    return tau


@jit
def _segment(kind, t, z, f, t_end, h, pv, ps, ts, coeffs, li, lh, sl, prm, rtol, atol,
             max_step, ev_idx, ev_off, ev_sign, cap_idx, cap, max_steps, counters,
             K, tmp, znew, fnew, zev, fev):
    """Integrate inside one smooth piece of the forcing.

    Returns (status, t, h_next); z and f are updated in place.
    """
    direction = 1.0 if t_end >= t else -1.0
    while True:
        remaining = t_end - t
        hmin = 16.0 * _EPS * max(1.0, abs(t))
        if abs(remaining) <= hmin:
            return OK, t_end, h
        habs = min(abs(h), max_step)
        last = habs >= abs(remaining)
        hs = remaining if last else direction * habs
        err = _step(kind, t, z, f, hs, pv, ps, ts, coeffs, li, lh, sl, prm, rtol, atol,
                    K, tmp, znew, fnew)
        counters[0] += 1
        if not (err <= 1.0):
            if math.isnan(err):
                fac = _MIN_FACTOR
            else:
                fac = max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
            h = abs(hs) * fac
            if h < hmin:
                return (NONFINITE if math.isnan(err) else UNDERFLOW), t, h
            continue
        finite = True
        for i in range(z.shape[0]):
            if not math.isfinite(znew[i]):
                finite = False
        if not finite:
            return NONFINITE, t, h
        if err == 0.0:
            fac = _MAX_FACTOR
        else:
            fac = min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
        h_next = abs(hs) * fac
        if last:
            h_next = max(h_next, habs)
        if ev_idx >= 0:
            e0 = ev_sign * (z[ev_idx] - ev_off)
            e1 = ev_sign * (znew[ev_idx] - ev_off)
            if e0 < 0.0 and e1 >= 0.0:
                tau = _locate(kind, t, z, f, hs, znew, fnew, pv, ps, ts, coeffs, li, lh,
                              sl, prm, rtol, atol, ev_idx, ev_off, ev_sign, K, tmp, zev, fev)
                for i in range(z.shape[0]):
                    z[i] = zev[i]
                    f[i] = fev[i]
                counters[1] += 1
                return EVENT, tau, h_next
        for i in range(z.shape[0]):
            z[i] = znew[i]
            f[i] = fnew[i]
        t = t_end if last else t + hs
        h = h_next
        counters[1] += 1
        if cap_idx >= 0 and abs(z[cap_idx]) >= cap:
            return CAP, t, h
        if counters[1] >= max_steps:
            return MAX_STEPS, t, h
        if last:
            return OK, t, h


@jit
def integrate_profile(kind, t0, z0, t1, kt, kv0, kv1, coeffs, li, lh, sl, prm, rtol, atol,
                      max_step, h0, ev_idx, ev_off, ev_sign, cap_idx, cap, max_steps):
    """Integrate from t0 to t1 (either direction) under the periodic profile.

    Returns (status, t, z, h_next, counters) with counters = [attempted,
    accepted] step counts.  ev_idx < 0 disables the event, cap_idx < 0 the cap.
    """
    n = z0.shape[0]
    z = z0.copy()
    f = np.empty(n)
    K = np.empty((_NS + 1, n))
    tmp = np.empty(n)
    znew = np.empty(n)
    fnew = np.empty(n)
    zev = np.empty(n)
    fev = np.empty(n)
    counters = np.zeros(2, dtype=np.int64)
    t = t0
    if t1 == t0:
        return OK, t, z, h0, counters
    forward = t1 > t0
    nk = kt.shape[0]
    k = math.floor(t0)
    u = t0 - k
    if forward:
        i = np.searchsorted(kt, u, side="right") - 1
        if i >= nk - 1:
            i = 0
            k += 1
    else:
        i = np.searchsorted(kt, u, side="left") - 1
        if i < 0:
            i = nk - 2
            k -= 1
    h = h0
    while True:
        seg_lo = k + kt[i]
        seg_hi = k + kt[i + 1]
        if forward:
            target = min(seg_hi, t1)
        else:
            target = max(seg_lo, t1)
        if kt[i + 1] > kt[i] and target != t:
            pv = kv0[i]
            ps = (kv1[i] - kv0[i]) / (kt[i + 1] - kt[i])
            evaluate(kind, t, z, pv + ps * (t - seg_lo), coeffs, li, lh, sl, prm, f)
            for j in range(n):
                if not math.isfinite(f[j]):
                    return NONFINITE, t, z, h, counters
            if h <= 0.0:
                h = _initial_step(kind, t, z, f, 1.0 if forward else -1.0, pv, ps, seg_lo,
                                  coeffs, li, lh, sl, prm, rtol, atol, tmp, fnew)
            status, t, h = _segment(kind, t, z, f, target, h, pv, ps, seg_lo, coeffs, li, lh,
                                    sl, prm, rtol, atol, max_step, ev_idx, ev_off, ev_sign,
                                    cap_idx, cap, max_steps, counters, K, tmp, znew, fnew,
                                    zev, fev)
            if status != OK:
                return status, t, z, h, counters
        t = target
        if t == t1:
            return OK, t, z, h, counters
        if forward:
            i += 1
            if i == nk - 1:
                i = 0
                k += 1
        else:
            i -= 1
            if i < 0:
                i = nk - 2
                k -= 1


@jit
def iterate_map(z0, n_iter, kt, kv0, kv1, coeffs, prm, rtol, atol, max_step, esc_radius,
                max_steps, samples, backward):
    """Iterate the time-1 map n_iter times, writing samples[0..n_iter].

    Returns (status, iterations completed).  status is ESCAPED when the orbit
    leaves the disc of radius esc_radius.
    """
    z = z0.copy()
    samples[0, 0] = z[0]
    samples[0, 1] = z[1]
    h = 0.0
    t0 = 1.0 if backward else 0.0
    t1 = 0.0 if backward else 1.0
    for it in range(n_iter):
        status, t, z, h, cnt = integrate_profile(
            KIND_XY, t0, z, t1, kt, kv0, kv1, coeffs, _EMPTY, _EMPTY, _EMPTY, prm, rtol, atol,
            max_step, h, -1, 0.0, 1.0, -1, 0.0, max_steps)
        if status != OK:
            return status, it
        samples[it + 1, 0] = z[0]
        samples[it + 1, 1] = z[1]
        if math.hypot(z[0], z[1]) > esc_radius:
            return ESCAPED, it + 1
    return OK, n_iter
