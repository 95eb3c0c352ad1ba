"""Scaling checks on single cycles and on staged construction logs.

The growth estimates being checked carry unspecified constants, so every
check is a log-log regression of a measured quantity against I_0 whose slope
is compared with the predicted exponent, or a fitted constant that must come
out positive and finite.
"""
import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, InsufficientData, LemmaViolation
from .flow import IntegratorConfig
from .forcing_builder import KnotEditor, build_cycle

DEFAULT_TOL = 0.05


@dataclass
class ScalingFit:
    name: str
    exponent_est: float
    expected: float
    tolerance: float
    r_squared: float
    stderr: float
    log_I0: list
    log_quantity: list
    min_r_squared: float = 0.99

    @property
    def passed(self):
        return (abs(self.exponent_est - self.expected) <= self.tolerance
                and self.r_squared >= self.min_r_squared)

    def residuals(self):
        x = np.array(self.log_I0)
        y = np.array(self.log_quantity)
        icpt = np.mean(y - self.exponent_est * x)
        return y - (self.exponent_est * x + icpt)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def fit_loglog(name, I0, quantity, expected, tolerance=DEFAULT_TOL, min_r_squared=0.99):
    x = np.log(np.asarray(I0, dtype=float))
    q = np.asarray(quantity, dtype=float)
    if x.size < 3:
        raise InsufficientData(f"{name}: need at least 3 points, got {x.size}")
    if not np.all(q > 0):
        raise LemmaViolation(f"{name}: quantity not positive ({q})", None)
    y = np.log(q)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    ss_res = float(res @ res)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    dof = x.size - 2
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 and sxx > 0 else math.inf
    return ScalingFit(name, float(coef[0]), float(expected), float(tolerance), r2, stderr,
                      x.tolist(), y.tolist(), min_r_squared)


def write_fits_csv(path, fits):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fit", "log_I0", "log_quantity", "residual"])
        for f in fits:
            for a, b, r in zip(f.log_I0, f.log_quantity, f.residuals()):
                w.writerow([f.name, repr(a), repr(b), repr(float(r))])


def run_single_cycle(chart, I_0, sigma, eta=1.0, cfg=None):
    """One construction cycle from (I_0, angle 0) at t = 0 on a fresh profile."""
    rec, _ = build_cycle(float(I_0), 0, 0.0, sigma, eta, chart, cfg or IntegratorConfig(),
                         KnotEditor())
    return rec


def _cycle_worker(args):
    chart, I0, sigma, eta, cfg = args
    return run_single_cycle(chart, I0, sigma, eta, cfg)


def run_cycles(chart, I0_grid, sigma, eta=1.0, cfg=None, workers=1):
    jobs = [(chart, float(v), sigma, eta, cfg) for v in I0_grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_cycle_worker, jobs))
    return [_cycle_worker(j) for j in jobs]


def quarter_quantities(rec):
    """Durations and |increments| of the four quarters plus the 1/16 -> 3/16 duration."""
    t = [rec.t_start] + list(rec.t_quarter)
    I = [rec.I_start] + list(rec.I_quarter)
    dur = [t[k + 1] - t[k] for k in range(4)]
    inc = [abs(I[k + 1] - I[k]) for k in range(4)]
    return dur, inc, rec.t_3_16th - rec.t_16th


def _check_grid(I0_grid):
    g = np.asarray(I0_grid, dtype=float)
    if g.size < 4 or not np.all(g > 0) or math.log10(g.max() / g.min()) < 3 - 1e-9:
        raise DomainError("I0_grid needs at least 4 positive points spanning 3 decades")
    return g


def verify_quarter_lemmas(params, chart, sigma, I0_grid, cfg=None, tolerance=DEFAULT_TOL,
                          records=None, workers=1):
    """Slope fits for the four quarter durations, the four |increments| and the 1/16-3/16 span."""
    g = _check_grid(I0_grid)
    recs = records if records is not None else run_cycles(chart, g, sigma, cfg=cfg, workers=workers)
    t_exp = -params.alpha
    i_exp = params.gamma
    q = [quarter_quantities(r) for r in recs]
    fits = []
    for k in range(4):
        fits.append(fit_loglog(f"duration q{k + 1}", g, [v[0][k] for v in q], t_exp, tolerance))
    for k in range(4):
        fits.append(fit_loglog(f"|dI| q{k + 1}", g, [v[1][k] for v in q], i_exp, tolerance))
    fits.append(fit_loglog("duration 1/16..3/16", g, [v[2] for v in q], t_exp, tolerance))
    return fits


def verify_cycle_scaling(params, chart, sigma, I0_grid, cfg=None, time_tol=0.03,
                         gain_tol=DEFAULT_TOL, records=None, workers=1):
    """Slopes of the cycle duration t_1 and the net gain I_1 - I_0 against I_0."""
    g = _check_grid(I0_grid)
    recs = records if records is not None else run_cycles(chart, g, sigma, cfg=cfg, workers=workers)
    return [fit_loglog("cycle duration", g, [r.t_end - r.t_start for r in recs], -params.alpha,
                       time_tol),
            fit_loglog("cycle gain", g, [r.gain for r in recs], params.gamma, gain_tol)]


@dataclass
class SigmaCheck:
    I_0: float
    sigma: float
    quarter: int
    loss_sigma: float
    loss_half_sigma: float
    ratio: float
    expected: float  # (1 - sigma) / (1 - sigma/2)
    rel_error: float
    tolerance: float = 0.1

    @property
    def passed(self):
        return self.rel_error <= self.tolerance

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def verify_sigma_prefactor(chart, I_0, sigma=0.5, eta=1.0, cfg=None, tolerance=0.1):
    """Loss-quarter drops at sigma and sigma/2 should scale like (1 - sigma).

    The drop over a loss quarter is the unmodified drop times the plateau
    value, so loss(sigma) / loss(sigma/2) is compared with
    (1 - sigma) / (1 - sigma/2).
    """
    a = run_single_cycle(chart, I_0, sigma, eta, cfg)
    b = run_single_cycle(chart, I_0, sigma / 2, eta, cfg)
    expected = (1 - sigma) / (1 - sigma / 2)
    out = []
    for k in (2, 4):
        la = quarter_quantities(a)[1][k - 1]
        lb = quarter_quantities(b)[1][k - 1]
        ratio = la / lb
        out.append(SigmaCheck(float(I_0), sigma, k, la, lb, ratio, expected,
                              abs(ratio / expected - 1), tolerance))
    return out


@dataclass
class StageReport:
    stages: int
    # (a) min over k of I_jk (tau tau')^k / I_j(k-1)^beta
    c_growth: float = math.nan
    # (b) max over k of (T_k - T_(k-1)) tau'^k
    c_time: float = math.nan
    # (c) min over k of log I_jk - l^k log I_0
    log_c_floor: float = math.nan
    growth_evaluable: bool = False
    time_evaluable: bool = False
    floor_evaluable: bool = False
    loglog_slope: float = math.nan  # slope of log(log I_jk / log I_0) in k, informational
    log_l: float = math.nan
    min_stage_ratio: float = math.nan  # min over stages of (min boundary action) / I at stage start
    min_quarter_ratio: float = math.nan  # same over quarter actions
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        ok = True
        if self.growth_evaluable:
            ok &= self.c_growth > 0 and math.isfinite(self.c_growth)
        if self.time_evaluable:
            ok &= self.c_time > 0 and math.isfinite(self.c_time)
        if self.floor_evaluable:
            ok &= math.isfinite(self.log_c_floor)
        return bool(ok and (self.growth_evaluable or self.time_evaluable))

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def verify_stage_growth(clog, schedule, params):
    stages = clog.stages
    if not stages:
        raise InsufficientData("construction log has no completed stages")
    rep = StageReport(len(stages))
    tau, taup = schedule.tau, schedule.tau_prime
    I_prev = clog.I_0
    T_prev = 0.0
    ca, cb, cc = [], [], []
    l = params.l
    for s in stages:
        ca.append(s.I_jk * (tau * taup) ** s.k / I_prev ** params.beta)
        cb.append((s.T_k - T_prev) * taup ** s.k)
        cc.append(math.log(s.I_jk) - l ** s.k * math.log(clog.I_0))
        I_prev, T_prev = s.I_jk, s.T_k
    rep.c_time = float(max(cb))
    rep.time_evaluable = True
    rep.log_l = math.log(l)
    if len(stages) >= 2:
        rep.c_growth = float(min(ca))
        rep.log_c_floor = float(min(cc))
        rep.growth_evaluable = rep.floor_evaluable = True
        ks = np.array([s.k for s in stages], dtype=float)
        ys = np.log(np.log([s.I_jk for s in stages]) / math.log(clog.I_0))
        rep.loglog_slope = float(np.polyfit(ks, ys, 1)[0])
        rep.notes.append("the log-log slope against k is informational: the floor I_0^(l^k) "
                         "is a lower bound, not a growth law")
    else:
        rep.notes.append("single stage: growth constant and double-exponential floor not evaluable")
    # minimum action per stage: over cycle boundaries, and over all quarter points
    ratios, qratios = [], []
    start = 0
    for s in stages:
        cyc = clog.cycles[start:s.j_k]
        if cyc:
            I0 = cyc[0].I_start
            ratios.append(min(min(c.I_start for c in cyc), cyc[-1].I_end) / I0)
            qratios.append(min(min(c.I_quarter) for c in cyc) / I0)
        start = s.j_k
    if ratios:
        rep.min_stage_ratio = float(min(ratios))
        rep.min_quarter_ratio = float(min(qratios))
    return rep


@dataclass
class BlowupEstimate:
    T_inf: float
    bound: float
    c_time: float
    infinite_tail: bool
    T_last: float
    escaped: bool
    escape_time: float
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.T_inf < 1 and self.bound < 1

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def estimate_blowup_time(clog, schedule):
    """Geometric-tail extrapolation of the stage end times and the bound c' / (tau' - 1).

    c' = max_k (T_k - T_(k-1)) tau'^k, so sum_k c' tau'^(-k) = c' / (tau' - 1).
    """
    stages = clog.stages
    if not stages:
        raise InsufficientData("construction log has no completed stages")
    taup = schedule.tau_prime
    Ts = [0.0] + [s.T_k for s in stages]
    c_time = max((Ts[i + 1] - Ts[i]) * taup ** stages[i].k for i in range(len(stages)))
    bound = c_time / (taup - 1)
    notes = []
    if len(stages) >= 2:
        T_inf = Ts[-1] + (Ts[-1] - Ts[-2]) / (taup - 1)
        tail = False
    else:
        T_inf = Ts[-1]
        tail = True
        notes.append("single stage: no tail to extrapolate")
    est = BlowupEstimate(float(T_inf), float(bound), float(c_time), tail, float(Ts[-1]),
                         clog.escaped, clog.escape_time, notes)
    if not bound < 1:
        est.notes.append(f"bound {bound:.3g} >= 1: schedule too slow; raise tau_prime or I_0")
    return est


def save_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
