"""Integration of the forced equation in (x, y) and in angle-action variables.

In angle-action form the forced system reads

    dtheta/dt = h'(I) + p(t) x^(2m+1) dx/dI,
    dI/dt     = -p(t) x^(2m+1) dx/dtheta,

with x = x(theta, I) from the chart.  Both systems are stepped by the DOP853
kernel in ``kernels.ode``, restarting at every breakpoint of p.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .action_angle import (AngleActionState, energy_of_action, frequency,
                           state_from_angle_action)
from .errors import (ChartInconsistency, ChartRangeError, DomainError, EscapeDetected,
                     InfeasibleError, IntegrationError)
from .kernels import ode as _ode
from .kernels.rhs import KIND_ANGLE_ACTION, KIND_XY, N_PRM, evaluate
from .profile import as_profile


@dataclass(frozen=True)
class PhaseState:
    t: float
    x: float
    y: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.t, self.x, self.y)):
            raise DomainError(f"phase state must be finite: {self}")


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    I_cap: float = 1e12
    max_steps: int = 10_000_000
    # step cap in revolutions of the unforced orbit, angle-action runs only.
    # DOP853's blended error estimate is occasionally near zero on a step
    # that is in fact inaccurate; without a cap the step then grows several-fold.
    max_angle_step: float = 1 / 96

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("tolerances must be positive")
        if not (self.max_step > 0 and self.max_angle_step > 0):
            raise DomainError("max_step and max_angle_step must be positive")


def xy_params(model):
    prm = np.zeros(N_PRM)
    prm[:3] = [model.period, model.params.deg, model.params.mdeg]
    return prm


def _fail(status, t, what):
    name = _ode.STATUS_NAMES[status]
    if status == _ode.UNDERFLOW:
        raise IntegrationError(f"{what}: step size underflow at t={t!r} (stiffness)", status, t)
    if status == _ode.NONFINITE:
        raise IntegrationError(f"{what}: non-finite state at t={t!r} (overflow)", status, t)
    raise IntegrationError(f"{what}: integrator stopped ({name}) at t={t!r}", status, t)


def integrate_xy(state, t_end, forcing, model, cfg=None, atol=None):
    """Advance x' = y, y' = -a(x) x^(2n+1) - p(t) x^(2m+1) to t_end (either direction)."""
    cfg = cfg or IntegratorConfig()
    kt, kv0, kv1 = as_profile(forcing).arrays()
    a = np.full(2, cfg.abs_tol) if atol is None else np.asarray(atol, dtype=float)
    status, t, z, _, _ = _ode.integrate_profile(
        KIND_XY, float(state.t), np.array([state.x, state.y]), float(t_end), kt, kv0, kv1,
        np.array(model.coeffs), _ode._EMPTY, _ode._EMPTY, _ode._EMPTY, xy_params(model),
        cfg.rel_tol, a, cfg.max_step, 0.0, -1, 0.0, 1.0, -1, 0.0, cfg.max_steps)
    if status != _ode.OK:
        _fail(status, t, "integrate_xy")
    return PhaseState(t, float(z[0]), float(z[1]))


def _run_angle_action(theta, action, t0, t1, forcing, chart, cfg, target=None):
    chart.check_action(action)
    kt, kv0, kv1 = as_profile(forcing).arrays()
    ev_idx, ev_off = (-1, 0.0) if target is None else (0, float(target))
    max_step = min(cfg.max_step, cfg.max_angle_step / frequency(chart, action))
    return _ode.integrate_profile(
        KIND_ANGLE_ACTION, float(t0), np.array([theta, action]), float(t1), kt, kv0, kv1,
        chart._k[0], *chart.tables, chart.prm, cfg.rel_tol, np.full(2, cfg.abs_tol),
        max_step, 0.0, ev_idx, ev_off, 1.0, 1, cfg.I_cap, cfg.max_steps)


def _check_status(status, t, z, chart, what):
    if status == _ode.CAP:
        raise EscapeDetected(t, float(z[0]), float(z[1]))
    if status == _ode.NONFINITE and not (chart.I_min <= z[1] <= chart.I_max):
        raise ChartRangeError(f"{what}: action {z[1]:.6g} left the chart at t={t!r}")
    if status not in (_ode.OK, _ode.EVENT):
        _fail(status, t, what)


def integrate_angle_action(state, t_start, t_end, forcing, chart, cfg=None):
    """Advance (theta, I) from t_start to t_end; theta stays unwrapped.

    Raises EscapeDetected when I reaches cfg.I_cap.
    """
    cfg = cfg or IntegratorConfig()
    status, t, z, _, _ = _run_angle_action(state.theta, state.I, t_start, t_end, forcing,
                                           chart, cfg)
    _check_status(status, t, z, chart, "integrate_angle_action")
    return AngleActionState(float(z[0]), float(z[1]))


def angle_action_rate(chart, theta, action, p):
    """(dtheta/dt, dI/dt) at one point for forcing value p."""
    out = np.empty(2)
    evaluate(KIND_ANGLE_ACTION, 0.0, np.array([theta, action]), float(p), chart._k[0],
             *chart.tables, chart.prm, out)
    return float(out[0]), float(out[1])


def advance_to_angle(state, t, target, forcing, chart, cfg=None, t_max=None):
    """Integrate until the unwrapped angle reaches ``target``.

    Returns (t_cross, state at the crossing).  Raises InfeasibleError when
    the crossing is not reached by t_max (default t + 1) or when the angle
    is not increasing there.
    """
    cfg = cfg or IntegratorConfig()
    if not state.theta < target:
        raise DomainError(f"angle {state.theta!r} is not below the target {target!r}")
    t_max = t + 1.0 if t_max is None else t_max
    profile = as_profile(forcing)
    status, tc, z, _, _ = _run_angle_action(state.theta, state.I, t, t_max, profile, chart, cfg,
                                            target=target)
    _check_status(status, tc, z, chart, "advance_to_angle")
    if status != _ode.EVENT:
        raise InfeasibleError(
            f"angle {target} not reached before t={t_max} (reached {z[0]:.6f}, I={z[1]:.6g})")
    rate = angle_action_rate(chart, z[0], z[1], profile(tc))[0]
    if not rate > 0:
        raise InfeasibleError(
            f"angle not increasing at its crossing of {target} (dtheta/dt={rate:.3g}); "
            "the frequency no longer dominates, use a larger action")
    return tc, AngleActionState(float(z[0]), float(z[1]))


def next_quarter(theta):
    # a state sitting on a quarter (up to rounding) moves on to the next one
    return (math.floor(4.0 * theta + 1e-9) + 1) / 4.0


def advance_to_quarter(state, t, forcing, chart, cfg=None, t_max=None):
    return advance_to_angle(state, t, next_quarter(state.theta), forcing, chart, cfg, t_max)


def phase_point(chart, state):
    return state_from_angle_action(chart, state.theta, state.I)


def full_energy(chart, state, p):
    """h(I) + p x^(2m+2)/(2m+2); conserved when p is constant."""
    x, _ = phase_point(chart, state)
    k = chart.params.mdeg + 1
    return energy_of_action(chart, state.I) + p * x ** k / k


def chart_consistency(I_0, duration, forcing, chart, cfg=None, t0=0.0, samples=10, tol=1e-6,
                      strict=True):
    """Max over sample times of |(x,y)_direct - Psi(theta, I)| / (1 + |x| + |y|).

    Both runs start at angle 0 (the point (x_-, 0)) with action I_0 at time t0.
    """
    cfg = cfg or IntegratorConfig()
    if not duration > 0:
        raise DomainError("duration must be positive")
    aa = AngleActionState(0.0, float(I_0))
    x0, y0 = phase_point(chart, aa)
    ps = PhaseState(float(t0), x0, y0)
    worst = 0.0
    times = t0 + duration * np.arange(1, samples + 1) / samples
    t_prev = t0
    for tk in times:
        aa = integrate_angle_action(aa, t_prev, tk, forcing, chart, cfg)
        ps = integrate_xy(ps, tk, forcing, chart.model, cfg)
        x, y = phase_point(chart, aa)
        d = math.hypot(x - ps.x, y - ps.y) / (1 + abs(ps.x) + abs(ps.y))
        worst = max(worst, d)
        t_prev = tk
    if strict and worst > tol:
        raise ChartInconsistency(f"(x,y) and angle-action runs diverge by {worst:.3g} > {tol}")
    return worst


def sample_trajectory(state, t_start, t_end, forcing, chart, cfg=None, n_samples=100):
    """Rows (t, theta, I, x, y, p(t)) at evenly spaced times."""
    cfg = cfg or IntegratorConfig()
    profile = as_profile(forcing)
    rows = []
    ts = np.linspace(t_start, t_end, n_samples + 1)
    cur = state
    for i, tk in enumerate(ts):
        if i:
            cur = integrate_angle_action(cur, ts[i - 1], tk, profile, chart, cfg)
        x, y = phase_point(chart, cur)
        rows.append((float(tk), cur.theta, cur.I, x, y, profile(tk)))
    return rows


def write_trajectory_csv(path, rows, stride=1):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "theta", "I", "x", "y", "p_of_t"])
        for row in rows[::stride]:
            w.writerow([repr(float(v)) for v in row])
