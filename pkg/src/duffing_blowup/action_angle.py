"""Action-angle chart of the unforced oscillator x' = y, y' = -G'(x).

The action I(h) is the area inside the level curve 1/2 y^2 + G(x) = h and
the angle is the normalised time along the orbit, measured from (x_-, 0)
through the y >= 0 half.  Both directions of the chart go through the
quadrature kernels in ``kernels.chart``; the h <-> I inversion starts from a
log-log cubic Hermite table and finishes with Newton's method.
"""
import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ChartRangeError, DomainError, InvariantViolation, LemmaViolation
from .kernels import chart as _ck
from .kernels import potential as _kp
from .kernels.rhs import N_PRM


@dataclass(frozen=True)
class AngleActionState:
    theta: float  # unwrapped, in revolutions
    I: float

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise DomainError(f"theta must be finite, got {self.theta}")
        if not (self.I > 0 and math.isfinite(self.I)):
            raise DomainError(f"action must be positive and finite, got {self.I}")


@dataclass
class ChartBounds:
    B1: float
    B2: float
    B3: float
    C1: float
    C2: float
    I_min: float
    I_max: float

    def to_dict(self):
        return asdict(self)


@dataclass
class SlopeFit:
    name: str
    slope: float
    expected: float
    tolerance: float
    max_residual: float
    passed: bool
    kind: str = "equal"  # "equal": |slope - expected| <= tol; "upper": slope <= expected + tol


@dataclass
class LemmaReport:
    h_min: float
    h_max: float
    fits: list = field(default_factory=list)
    second_derivative_constant: float = math.nan
    period_crosscheck: float = math.nan  # max rel. gap between FD and quadrature I'(h)

    @property
    def passed(self):
        return all(f.passed for f in self.fits) and self.second_derivative_constant > 0

    def to_dict(self):
        return {"h_min": self.h_min, "h_max": self.h_max, "passed": self.passed,
                "second_derivative_constant": self.second_derivative_constant,
                "period_crosscheck": self.period_crosscheck,
                "fits": [asdict(f) for f in self.fits]}


class ActionAngleChart:
    """Tables of I(h) on log-spaced energies plus the kernels' parameter block.

    ``I_range`` is the span of actions the chart must cover; queries outside
    it raise ChartRangeError.  ``I_chart_min`` is the action above which
    bound constants are reported as certified.
    """

    def __init__(self, model, I_range=(1.0, 2e12), nodes_per_decade=256, I_chart_min=1e2):
        self.model = model
        self.params = model.params
        self.I_chart_min = float(I_chart_min)
        self.nodes_per_decade = int(nodes_per_decade)
        # writable copy: numba compiles separate specialisations for read-only arrays
        self._k = (np.array(model.coeffs), model.period, model.params.deg, model.nharm,
                   model.a_min, model.a_max)
        lo, hi = float(I_range[0]), float(I_range[1])
        if not (0 < lo < hi):
            raise DomainError(f"bad action range {I_range}")
        h_lo, h_hi = self._bracket_energy(lo), self._bracket_energy(hi, above=True)
        ndec = math.log10(h_hi / h_lo)
        hs = np.logspace(math.log10(h_lo), math.log10(h_hi),
                         int(math.ceil(ndec * self.nodes_per_decade)) + 1)
        acts, pers = _ck.build_tables(hs, *self._k)
        if not np.all(np.diff(acts) > 0):
            raise InvariantViolation("tabulated I(h) is not strictly increasing")
        self.h_nodes = hs
        self.I_nodes = acts
        self.period_nodes = pers
        self.log_i = np.ascontiguousarray(np.log(acts))
        self.log_h = np.ascontiguousarray(np.log(hs))
        # d log h / d log I = I h'(I) / h = I / (h I'(h))
        self.slope = np.ascontiguousarray(acts / (hs * pers))
        self.I_min = float(acts[0])
        self.I_max = float(acts[-1])
        prm = np.zeros(N_PRM)
        prm[:] = [model.period, model.params.deg, model.params.mdeg, model.nharm,
                  model.a_min, model.a_max, self.I_min, self.I_max]
        self.prm = prm
        self.bounds = None

    def _bracket_energy(self, action, above=False):
        h = 1.0
        act = _ck.action_and_period(h, *self._k)[0]
        if above:
            while act < action:
                h *= 4.0
                act = _ck.action_and_period(h, *self._k)[0]
        else:
            while act > action:
                h /= 4.0
                act = _ck.action_and_period(h, *self._k)[0]
        return h

    @property
    def tables(self):
        return self.log_i, self.log_h, self.slope

    def check_action(self, action):
        if not (self.I_min <= action <= self.I_max):
            raise ChartRangeError(
                f"action {action:.6g} outside chart table [{self.I_min:.6g}, {self.I_max:.6g}];"
                " rebuild the chart with a wider I_range")

    def _state(self, action):
        self.check_action(action)
        return _ck.energy_of_action(action, self.log_i, self.log_h, self.slope, *self._k)

    def save(self, path):
        np.savez(path, h=self.h_nodes, I=self.I_nodes, period=self.period_nodes,
                 potential=np.array(self.model.to_json()))


def turning_points(chart, h):
    if not h > 0:
        raise DomainError(f"energy must be positive, got {h}")
    xp = _kp.turning_point(float(h), *chart._k[:3], chart._k[4], chart._k[5])
    return -xp, xp


def action_of_energy(chart, h):
    if not h > 0:
        raise DomainError(f"energy must be positive, got {h}")
    return _ck.action_and_period(float(h), *chart._k)[0]


def period_of_energy(chart, h):
    """I'(h), the period of the unforced orbit of energy h."""
    if not h > 0:
        raise DomainError(f"energy must be positive, got {h}")
    return _ck.action_and_period(float(h), *chart._k)[1]


def energy_of_action(chart, action):
    return chart._state(float(action))[0]


def frequency(chart, action):
    """h'(I) = 1 / I'(h(I))."""
    return 0.25 / chart._state(float(action))[3]


def state_from_angle_action(chart, theta, action):
    h, xp, gp, q = chart._state(float(action))
    x, y, _, _ = _ck.point_at(float(theta), np.nan, xp, gp, q, chart.model.coeffs,
                              chart.model.period, chart.params.deg, chart.model.nharm)
    return x, y


def angle_action_from_state(chart, x, y):
    if x == 0 and y == 0:
        raise DomainError("the origin has no angle")
    theta, act, _ = _ck.angle_of_state(float(x), float(y), *chart._k)
    return AngleActionState(theta, act)


def scaled_partials(chart, theta, action):
    """(x1, x2, x3) = (x I^(-1/(n+2)), dx/dI I^(n/(n+2)), dx/dtheta I^(-1/(n+2)))."""
    action = float(action)
    chart.check_action(action)
    n = chart.params.n
    x, _, dxdth, _, dxdi = _ck.chart_point_with_di(float(theta), action,
                                                   *chart.tables, *chart._k)
    s = action ** (-1.0 / (n + 2))
    return x * s, dxdi * action ** (n / (n + 2)), dxdth * s


def estimate_bounds(chart, I_grid, theta_grid):
    """Sup of |x1|, |x2|, |x3| over the grid and inf of -x1, x3 on [1/16, 3/16]."""
    I_grid = np.atleast_1d(np.asarray(I_grid, dtype=float))
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    if I_grid.size == 0 or theta_grid.size == 0:
        raise DomainError("bound grids must be nonempty")
    lower = theta_grid[(theta_grid % 1.0 >= 1 / 16) & (theta_grid % 1.0 <= 3 / 16)]
    if lower.size == 0:
        lower = np.linspace(1 / 16, 3 / 16, 9)
    B = np.zeros(3)
    C1 = C2 = math.inf
    for action in I_grid:
        for th in theta_grid:
            B = np.maximum(B, np.abs(scaled_partials(chart, th, action)))
        for th in lower:
            x1, _, x3 = scaled_partials(chart, th, action)
            C1 = min(C1, -x1)
            C2 = min(C2, x3)
    chart.bounds = ChartBounds(float(B[0]), float(B[1]), float(B[2]), float(C1), float(C2),
                               float(I_grid.min()), float(I_grid.max()))
    return chart.bounds


def loglog_slope(x, y):
    """Least-squares slope of log y against log x and the max abs residual."""
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(coef[0]), float(np.max(np.abs(ly - A @ coef)))


def verify_chart_lemmas(chart, h_grid=None, tolerance=0.02, csv_path=None, strict=True):
    """Fit the power laws of I(h), I'(h), |I''(h)|, h(I), h'(I) on a log-spaced grid.

    Derivatives of I are central differences (relative steps 1e-4 and 2e-3),
    cross-checked against the quadrature period.
    """
    if h_grid is None:
        h_grid = np.logspace(4, 14, 101)
    h = np.asarray(h_grid, dtype=float)
    if h.size < 3 or math.log10(h.max() / h.min()) < 3:
        raise DomainError("h_grid must span at least 3 decades")
    n = chart.params.n
    I = np.array([action_of_energy(chart, v) for v in h])
    d1 = 1e-4
    dI = np.array([(action_of_energy(chart, v * (1 + d1)) - action_of_energy(chart, v * (1 - d1)))
                   / (2 * d1 * v) for v in h])
    d2 = 2e-3
    d2I = np.array([(action_of_energy(chart, v * (1 + d2)) - 2 * action_of_energy(chart, v)
                     + action_of_energy(chart, v * (1 - d2))) / (d2 * v) ** 2 for v in h])
    per = np.array([period_of_energy(chart, v) for v in h])
    hp = 1.0 / dI

    rep = LemmaReport(float(h.min()), float(h.max()))
    rep.period_crosscheck = float(np.max(np.abs(dI - per) / per))

    def fit(name, x, y, expected, kind="equal"):
        s, r = loglog_slope(x, y)
        ok = abs(s - expected) <= tolerance if kind == "equal" else s <= expected + tolerance
        rep.fits.append(SlopeFit(name, s, expected, tolerance, r, bool(ok), kind))

    fit("I(h)", h, I, 0.5 + 1 / (2 * n + 2))
    fit("I'(h)", h, dI, -0.5 + 1 / (2 * n + 2))
    ups = -1.5 + 1 / (n + 1)
    fit("|I''(h)|", h, np.abs(d2I), ups, kind="upper")
    fit("h(I)", I, h, (2 * n + 2) / (n + 2))
    fit("h'(I)", I, hp, n / (n + 2))
    with np.errstate(divide="ignore"):
        c = np.abs(d2I) * h ** (-ups)
    rep.second_derivative_constant = float(np.max(c)) if np.all(np.isfinite(c)) else math.nan

    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "I", "dIdh", "d2Idh2"])
            for row in zip(h, I, dI, d2I):
                w.writerow([repr(float(v)) for v in row])
    if strict and not rep.passed:
        bad = [f.name for f in rep.fits if not f.passed]
        raise LemmaViolation(f"chart power laws out of tolerance: {bad}", rep)
    return rep
