"""Right-hand sides shared by the integrator kernel.

Both systems go through one entry point, ``evaluate``, selected by an
integer ``kind`` so that the stepper stays a plain module-level function
(numba can cache it, which it cannot do for functions passed as arguments).

``prm`` packs the scalar parameters:
    [period, deg, mdeg, nharm, a_lo, a_hi, i_min, i_max]
where deg = 2n+1 and mdeg = 2m+1.  The three table arrays are only read by
the angle-action system.
"""
import math

from .._accel import jit
from .chart import chart_point_with_di
from .potential import g1_value, ipow

KIND_XY = 0
KIND_ANGLE_ACTION = 1

P_PERIOD, P_DEG, P_MDEG, P_NHARM, P_ALO, P_AHI, P_IMIN, P_IMAX = range(8)
N_PRM = 8


@jit
def _angle_action(z, p, coeffs, log_i, log_h, slope, prm, out):
    theta = z[0]
    action = z[1]
    if not (prm[P_IMIN] <= action <= prm[P_IMAX]) or not math.isfinite(theta):
        out[0] = math.nan
        out[1] = math.nan
        return
    x, y, dxdth, hp, dxdi = chart_point_with_di(
        theta, action, log_i, log_h, slope, coeffs, prm[P_PERIOD], int(prm[P_DEG]),
        int(prm[P_NHARM]), prm[P_ALO], prm[P_AHI])
    f = p * ipow(x, int(prm[P_MDEG]))
    out[0] = hp + f * dxdi
    out[1] = -f * dxdth


@jit
def xy_accel(x, p, coeffs, period, deg, mdeg):
    """y' of the (x, y) system; scalar arguments keep the call cheap in the stepper."""
    return -g1_value(x, coeffs, period, deg) - p * ipow(x, mdeg)


@jit
def evaluate(kind, t, z, p, coeffs, log_i, log_h, slope, prm, out):
    if kind == KIND_XY:
        out[0] = z[1]
        out[1] = xy_accel(z[0], p, coeffs, prm[P_PERIOD], int(prm[P_DEG]), int(prm[P_MDEG]))
        return
    _angle_action(z, p, coeffs, log_i, log_h, slope, prm, out)
