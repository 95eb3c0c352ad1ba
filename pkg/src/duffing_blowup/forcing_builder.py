"""Cycle-by-cycle construction of a continuous forcing p(t) that drives I to infinity.

Each revolution of the angle is split into quarters.  Gain quarters (the
angle running from k to k+1/4 and from k+1/2 to k+3/4) run at p = 1.  In
each loss quarter p ramps down linearly from 1 to 1-sigma over a width
w = I^(-eta), stays at 1-sigma, and ramps back up to 1 so that it reaches 1
exactly when the angle crosses the end of the quarter.  The end time depends
on the ramp through the dynamics, so it is found as a fixed point.

Cycles are grouped into stages: stage k uses sigma = tau^(-k) and runs
floor(tau'^(-k) I^(n/(n+2))) cycles, I being the action at the stage start.
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import optimize

from .action_angle import AngleActionState
from .errors import (ConfigError, DomainError, EscapeDetected, InfeasibleError,
                     NumericalError, ScheduleExhausted)
from .flow import IntegratorConfig, advance_to_angle, integrate_angle_action
from .profile import ForcingProfile, as_profile  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

ANCHOR_TOL = 1e-12
ANCHOR_MAX_ITER = 20


@dataclass(frozen=True)
class ScheduleParams:
    tau: float = 2.0
    tau_prime: float = 16.0
    eta: float = 1.0
    K_max: int = 8
    I_0: float = 1e6
    sigma_override: float = None  # same jump in every stage; 0 gives the unmodified control

    def __post_init__(self):
        if not self.tau >= 2:
            raise ConfigError(f"tau must be >= 2, got {self.tau}")
        if not self.tau_prime > 1:
            raise ConfigError(f"tau_prime must exceed 1, got {self.tau_prime}")
        if not (isinstance(self.K_max, (int, np.integer)) and self.K_max >= 1):
            raise ConfigError(f"K_max must be a positive integer, got {self.K_max!r}")
        if not (self.I_0 > 0 and math.isfinite(self.I_0)):
            raise ConfigError(f"I_0 must be positive, got {self.I_0}")
        s = self.sigma_override
        if s is not None and not (0 <= s <= 1 / self.tau):
            raise ConfigError(f"sigma_override must lie in [0, 1/tau], got {s}")

    def check(self, params):
        alpha = params.n / (params.n + 2)
        if not self.eta > alpha:
            raise ConfigError(f"eta must exceed n/(n+2) = {alpha:.6g}, got {self.eta}")

    def sigma(self, k):
        return self.sigma_override if self.sigma_override is not None else self.tau ** (-k)

    def cycles_in_stage(self, k, action, alpha):
        return int(math.floor(self.tau_prime ** (-k) * action ** alpha))

    def to_dict(self):
        return asdict(self)


@dataclass
class CycleRecord:
    i: int
    sigma: float
    t_start: float
    I_start: float
    t_quarter: list  # t at angle i+1/4, i+1/2, i+3/4, i+1
    I_quarter: list
    t_16th: float  # angle i+1/16
    t_3_16th: float
    w: float
    margin: float  # w / (duration of the first quarter)
    anchor_iterations: list = field(default_factory=list)
    anchor_residuals: list = field(default_factory=list)

    @property
    def t_end(self):
        return self.t_quarter[3]

    @property
    def I_end(self):
        return self.I_quarter[3]

    @property
    def gain(self):
        return self.I_end - self.I_start


@dataclass
class StageRecord:
    k: int
    j_k: int  # cycles completed through the end of this stage
    T_k: float
    I_jk: float
    sigma_k: float
    cycles: int


CYCLE_COLUMNS = ("i", "t_i", "I_i", "sigma", "t_q1", "t_q2", "t_q3", "t_q4",
                 "I_q1", "I_q2", "I_q3", "I_q4", "t_1_16", "t_3_16", "w", "margin",
                 "anchor_iter_2", "anchor_iter_4", "anchor_res_2", "anchor_res_4")
STAGE_COLUMNS = ("k", "j_k", "T_k", "I_jk", "sigma_k", "cycles")


@dataclass
class ConstructionLog:
    I_0: float
    cycles: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    stop_reason: str = ""
    escaped: bool = False
    escape_time: float = math.nan
    escape_action: float = math.nan
    exhausted_stage: int = 0

    def actions(self):
        """I at the start of every cycle and at the end of the last one."""
        if not self.cycles:
            return np.array([self.I_0])
        return np.array([c.I_start for c in self.cycles] + [self.cycles[-1].I_end])

    def times(self):
        if not self.cycles:
            return np.array([0.0])
        return np.array([c.t_start for c in self.cycles] + [self.cycles[-1].t_end])

    def write_cycles_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CYCLE_COLUMNS)
            for c in self.cycles:
                it = (c.anchor_iterations + [0, 0])[:2]
                res = (c.anchor_residuals + [0.0, 0.0])[:2]
                w.writerow([c.i] + [repr(float(v)) for v in
                                    (c.t_start, c.I_start, c.sigma, *c.t_quarter, *c.I_quarter,
                                     c.t_16th, c.t_3_16th, c.w, c.margin)]
                           + it + [repr(float(v)) for v in res])

    def write_stages_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(STAGE_COLUMNS)
            for s in self.stages:
                w.writerow([s.k, s.j_k, repr(s.T_k), repr(s.I_jk), repr(s.sigma_k), s.cycles])

    def summary(self):
        return {"I_0": self.I_0, "cycles": len(self.cycles), "stages": len(self.stages),
                "stop_reason": self.stop_reason, "escaped": self.escaped,
                "escape_time": self.escape_time, "escape_action": self.escape_action,
                "exhausted_stage": self.exhausted_stage,
                "final_action": float(self.actions()[-1]), "final_time": float(self.times()[-1])}

    @classmethod
    def read_csv(cls, cycles_path, stages_path, I_0=None):
        cycles = []
        with open(cycles_path, newline="") as fh:
            for row in csv.DictReader(fh):
                f = {k: float(v) for k, v in row.items()}
                cycles.append(CycleRecord(
                    int(f["i"]), f["sigma"], f["t_i"], f["I_i"],
                    [f["t_q1"], f["t_q2"], f["t_q3"], f["t_q4"]],
                    [f["I_q1"], f["I_q2"], f["I_q3"], f["I_q4"]],
                    f["t_1_16"], f["t_3_16"], f["w"], f["margin"],
                    [int(f["anchor_iter_2"]), int(f["anchor_iter_4"])],
                    [f["anchor_res_2"], f["anchor_res_4"]]))
        stages = []
        with open(stages_path, newline="") as fh:
            for row in csv.DictReader(fh):
                stages.append(StageRecord(int(row["k"]), int(row["j_k"]), float(row["T_k"]),
                                          float(row["I_jk"]), float(row["sigma_k"]),
                                          int(row["cycles"])))
        if I_0 is None:
            if not cycles:
                raise ConfigError(f"construction log {cycles_path} is empty")
            I_0 = cycles[0].I_start
        return cls(float(I_0), cycles, stages)


class KnotEditor:
    """The committed part of the profile as one knot list, p = 1 after the last knot.

    Each junction value is stored once, so the profile built from the list is
    exactly continuous.
    """

    def __init__(self):
        self.kt = [0.0]
        self.kv = [1.0]

    @property
    def t_last(self):
        return self.kt[-1]

    def profile(self, extra=()):
        kt = list(self.kt)
        kv = list(self.kv)
        for t, v in extra:
            if not t > kt[-1]:
                raise InfeasibleError(f"forcing knots out of order at t={t!r} (previous {kt[-1]!r})")
            kt.append(t)
            kv.append(v)
        last_mod = kt[-1]
        if kt[-1] < 1.0:
            if kv[-1] != 1.0:
                raise InfeasibleError(f"profile does not return to 1 before t=1 (p={kv[-1]})")
            kt.append(1.0)
            kv.append(1.0)
        elif kt[-1] > 1.0:
            raise InfeasibleError(f"construction overran the forcing period (t={kt[-1]!r})")
        return ForcingProfile.from_knots(kt, kv, last_mod)

    def commit(self, knots):
        self.profile(knots)  # order and range checks
        for t, v in knots:
            self.kt.append(float(t))
            self.kv.append(float(v))


def _loss_quarter(state, t_a, target, sigma, w, editor, chart, cfg):
    """Install ramp-down / plateau / ramp-up on a loss quarter starting at t_a.

    Returns (T, state at the crossing, iterations, final |dT|).
    """
    low = 1.0 - sigma
    down = [(t_a, 1.0), (t_a + w, low)]
    plateau = editor.profile(down + [(1.0, low)]) if t_a + w < 1.0 else None
    if plateau is None:
        raise InfeasibleError(f"ramp at t={t_a} runs past the end of the period")
    T0, _ = advance_to_angle(state, t_a, target, plateau, chart, cfg, t_max=1.0)
    if T0 - w < t_a + w:
        raise InfeasibleError(
            f"quarter ends at t={T0!r} inside the ramp [{t_a!r}, {t_a + w!r}]; "
            "ramp width too large for this action")
    # the trial profiles agree with the plateau one up to T - w, so restart from a cached state
    def cache_at(tc):
        if tc <= t_a:
            return t_a, state
        return tc, integrate_angle_action(state, t_a, tc, plateau, chart, cfg)

    tc, sc = cache_at(max(t_a + w, T0 - 3 * w))

    def crossing(T):
        nonlocal tc, sc
        if T - w < tc:
            tc, sc = cache_at(max(t_a + w, T - 3 * w))
        trial = editor.profile(down + [(T - w, low), (T, 1.0)])
        return advance_to_angle(sc, tc, target, trial, chart, cfg, t_max=1.0)

    T = T0
    it = 0
    dT = math.inf
    while it < ANCHOR_MAX_ITER:
        it += 1
        Tn, s_new = crossing(T)
        dT = abs(Tn - T)
        if dT <= ANCHOR_TOL:
            return T, Tn, s_new, it, dT
        if Tn - w < t_a + w:
            break
        T = Tn
    # bracketed fallback on crossing(T) - T
    log.info("anchor fixed point slow at t=%r (|dT|=%.3g); using brentq", t_a, dT)
    g = lambda T: crossing(T)[0] - T
    lo, hi = T0 - 2 * w, T0 + 2 * w
    lo = max(lo, t_a + 2 * w)
    try:
        T = optimize.brentq(g, lo, hi, xtol=ANCHOR_TOL, rtol=4 * np.finfo(float).eps)
    except ValueError:
        raise NumericalError(f"ramp anchor near t={T0!r} not bracketed in [{lo!r}, {hi!r}]") from None
    Tn, s_new = crossing(T)
    return T, Tn, s_new, it, abs(Tn - T)


def build_cycle(I_start, cycle_index, t_start, sigma, eta, chart, cfg=None, editor=None):
    """Run one revolution from angle cycle_index at time t_start, modifying the loss quarters.

    ``editor`` holds the profile built so far (p = 1 after t_start) and receives
    the new knots.  Returns (CycleRecord, state at the end of the cycle).
    """
    cfg = cfg or IntegratorConfig()
    editor = editor if editor is not None else KnotEditor()
    # the previous anchor may sit a rounding step after the crossing that ended the last cycle
    if t_start < editor.t_last - 1e-9:
        raise DomainError(f"cycle start {t_start!r} precedes the last modification {editor.t_last!r}")
    i = int(cycle_index)
    state = I_start if isinstance(I_start, AngleActionState) else AngleActionState(float(i), float(I_start))
    I0 = state.I
    w = I0 ** (-eta)
    ones = editor.profile()

    t16, s = advance_to_angle(state, t_start, i + 1 / 16, ones, chart, cfg, t_max=1.0)
    t316, s = advance_to_angle(s, t16, i + 3 / 16, ones, chart, cfg, t_max=1.0)
    tq1, s1 = advance_to_angle(s, t316, i + 0.25, ones, chart, cfg, t_max=1.0)
    margin = w / (tq1 - t_start)
    if sigma > 0 and margin >= 0.5:
        raise InfeasibleError(
            f"ramp width {w:.3g} is not below half the quarter duration {tq1 - t_start:.3g} "
            f"at I={I0:.6g}; increase I_0 or eta")
    iters, resid = [], []

    def loss(s_in, t_in, target):
        if sigma == 0:
            t_out, s_out = advance_to_angle(s_in, t_in, target, editor.profile(), chart, cfg, t_max=1.0)
            iters.append(0)
            resid.append(0.0)
            return t_out, s_out
        T, t_out, s_out, it, dT = _loss_quarter(s_in, t_in, target, sigma, w, editor, chart, cfg)
        editor.commit([(t_in, 1.0), (t_in + w, 1.0 - sigma), (T - w, 1.0 - sigma), (T, 1.0)]
                      if t_in > editor.t_last else
                      [(t_in + w, 1.0 - sigma), (T - w, 1.0 - sigma), (T, 1.0)])
        iters.append(it)
        resid.append(dT)
        return t_out, s_out

    tq2, s2 = loss(s1, tq1, i + 0.5)
    tq3, s3 = advance_to_angle(s2, tq2, i + 0.75, editor.profile(), chart, cfg, t_max=1.0)
    tq4, s4 = loss(s3, tq3, i + 1.0)
    rec = CycleRecord(i, float(sigma), float(t_start), float(I0), [tq1, tq2, tq3, tq4],
                      [s1.I, s2.I, s3.I, s4.I], t16, t316, float(w), float(margin), iters, resid)
    return rec, s4


def build_profile(params, schedule, chart, cfg=None):
    """Run the staged construction from (I_0, angle 0) at t = 0.

    Returns (ForcingProfile, ConstructionLog).  Stops at K_max stages, when
    the action reaches cfg.I_cap, or when the next stage would have no cycles.
    """
    cfg = cfg or IntegratorConfig()
    if params != chart.params:
        raise ConfigError("equation parameters differ from the chart's")
    schedule.check(params)
    if schedule.I_0 < chart.I_chart_min:
        raise ConfigError(f"I_0={schedule.I_0} is below the certified chart threshold {chart.I_chart_min}")
    chart.check_action(schedule.I_0)
    alpha = params.alpha
    editor = KnotEditor()
    clog = ConstructionLog(float(schedule.I_0))
    state = AngleActionState(0.0, float(schedule.I_0))
    t = 0.0
    i = 0
    for k in range(1, schedule.K_max + 1):
        I_stage = state.I
        count = schedule.cycles_in_stage(k, I_stage, alpha)
        if count == 0:
            clog.exhausted_stage = k
            clog.stop_reason = f"stage {k} would have zero cycles"
            if k == 1:
                raise ScheduleExhausted(
                    f"stage 1 has floor({schedule.tau_prime}^-1 * {I_stage:.6g}^{alpha:.4g}) = 0 "
                    "cycles; lower tau_prime or raise I_0", clog)
            break
        sigma = schedule.sigma(k)
        log.info("stage %d: %d cycles, sigma=%g, I=%.6g, t=%.12g", k, count, sigma, I_stage, t)
        done = 0
        try:
            for _ in range(count):
                rec, state = build_cycle(state, i, t, sigma, schedule.eta, chart, cfg, editor)
                if not rec.I_end > rec.I_start and sigma > 0:
                    raise InfeasibleError(
                        f"cycle {i} did not gain action ({rec.I_start!r} -> {rec.I_end!r})", clog)
                clog.cycles.append(rec)
                t = rec.t_end
                i += 1
                done += 1
                if state.I >= cfg.I_cap:
                    raise EscapeDetected(t, state.theta, state.I)
        except EscapeDetected as esc:
            clog.escaped = True
            clog.escape_time = esc.t
            clog.escape_action = esc.action
            clog.stop_reason = f"action reached the cap {cfg.I_cap:g}"
        except InfeasibleError as exc:
            exc.log = clog
            raise
        if done:
            clog.stages.append(StageRecord(k, i, t, state.I, float(sigma), done))
        if clog.escaped:
            break
    else:
        clog.stop_reason = f"completed K_max={schedule.K_max} stages"
    profile = editor.profile()
    report = validate_profile(profile, schedule.tau, clog.stages)
    if not report.ok:
        raise NumericalError(f"built profile failed validation: {report.violations[:3]}")
    return profile, clog


@dataclass
class ValidationReport:
    ok: bool
    violations: list  # (kind, t, detail)
    oscillations: list  # (k, T_k, max - min of p on [T_k, 1], bound)
    mean: float

    def to_dict(self):
        return {"ok": self.ok, "mean": self.mean,
                "violations": [list(v) for v in self.violations],
                "oscillations": [list(v) for v in self.oscillations]}


def validate_profile(profile, tau=2.0, stages=None):
    """Check tiling, exact continuity, range, trailing 1 and the stagewise oscillation bound.

    All comparisons are exact float comparisons.
    """
    bad = []
    t, v0, v1 = profile.arrays()
    if t[0] != 0.0 or t[-1] != 1.0:
        bad.append(("tiling", float(t[0]), f"segments span [{t[0]!r}, {t[-1]!r}], not [0, 1]"))
    for j in np.nonzero(~(np.diff(t) >= 0))[0]:
        bad.append(("tiling", float(t[j]), "segment boundaries decrease"))
    for j in range(len(v0) - 1):
        if v1[j] != v0[j + 1]:
            bad.append(("continuity", float(t[j + 1]),
                        f"jump {v1[j]!r} -> {v0[j + 1]!r} ({v0[j + 1] - v1[j]:.3g})"))
    if v1[-1] != v0[0]:
        bad.append(("continuity", 1.0, f"periodic wrap {v1[-1]!r} -> {v0[0]!r}"))
    lo = 1.0 - 1.0 / tau
    for j in range(len(v0)):
        for v in (v0[j], v1[j]):
            if not (lo <= v <= 1.0):
                bad.append(("range", float(t[j]), f"p={v!r} outside [{lo!r}, 1]"))
    tl = profile.t_last_modified
    for j in range(len(v0)):
        if t[j] >= tl and not (v0[j] == 1.0 and v1[j] == 1.0):
            bad.append(("trailing", float(t[j]), f"p != 1 after last modification t={tl!r}"))
    osc = []
    for st in stages or ():
        T = st.T_k
        vals = [profile(T)]
        sel = t[:-1] >= T
        vals += list(v0[sel]) + list(v1[sel])
        spread = max(vals) - min(vals)
        bound = tau ** (-st.k)
        osc.append((st.k, T, spread, bound))
        if not spread <= bound:
            bad.append(("oscillation", T, f"stage {st.k}: spread {spread!r} > {bound!r}"))
    return ValidationReport(not bad, bad, osc, profile.integral())
