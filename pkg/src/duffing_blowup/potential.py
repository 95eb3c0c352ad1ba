"""The coefficient a(x), the potential G and the equation's exponents."""
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, InvariantViolation, NumericalError
from .kernels import potential as _k


@dataclass(frozen=True)
class EquationParams:
    """x'' + a(x) x^(2n+1) + p(t) x^(2m+1) = 0 with n+2 <= 2m+1 < 2n+1."""
    n: int = 3
    m: int = 2

    def __post_init__(self):
        for name in ("n", "m"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.n < 3:
            raise ConfigError(f"n must be >= 3, got {self.n}")
        if not (self.n + 2 <= 2 * self.m + 1 < 2 * self.n + 1):
            raise ConfigError(
                f"need n+2 <= 2m+1 < 2n+1, got n={self.n}, m={self.m} "
                f"({self.n + 2} <= {2 * self.m + 1} < {2 * self.n + 1} fails)")

    @property
    def deg(self):
        return 2 * self.n + 1

    @property
    def mdeg(self):
        return 2 * self.m + 1

    # exponents as exact fractions; the float properties below derive from them
    def exact(self):
        n, m = self.n, self.m
        return {
            "alpha": Fraction(n, n + 2),
            "beta": Fraction(2 * m + 2, n + 2),
            "gamma": Fraction(2 * m + 2 - n, n + 2),
            "delta": Fraction(2 * m + 1 - n, n + 2),
            "l": Fraction(2 * m + 1, n + 2) + Fraction(1, 2 * (n + 2)),
        }

    @property
    def alpha(self):
        return self.n / (self.n + 2)

    @property
    def beta(self):
        return (2 * self.m + 2) / (self.n + 2)

    @property
    def gamma(self):
        return (2 * self.m + 2 - self.n) / (self.n + 2)

    @property
    def delta(self):
        return (2 * self.m + 1 - self.n) / (self.n + 2)

    @property
    def l(self):  # noqa: E743
        return float(self.exact()["l"])


@dataclass(frozen=True)
class BoundReport:
    x_min: float
    x_max: float
    sample_count: int
    # name -> (c_low, c_high)
    constants: dict = field(default_factory=dict)

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "sample_count": self.sample_count,
                "constants": {k: list(v) for k, v in self.constants.items()}}


class PotentialModel:
    """a(x) = c0 + sum_j c_j cos(2 pi j x / P) and G(x) = int_0^x a(s) s^(2n+1) ds."""

    def __init__(self, params=None, cos_coeffs=(1.5, 1.0), period=1.0):
        self.params = params if params is not None else EquationParams()
        coeffs = np.array(cos_coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size == 0 or not np.all(np.isfinite(coeffs)):
            raise ConfigError(f"cos_coeffs must be a nonempty list of finite floats, got {cos_coeffs!r}")
        period = float(period)
        if not (period > 0 and math.isfinite(period)):
            raise ConfigError(f"period must be positive, got {period}")
        spread = float(np.sum(np.abs(coeffs[1:])))
        if not coeffs[0] - spread > 0:
            raise ConfigError(
                f"a(x) is not certified positive: c0 - sum|c_j| = {coeffs[0] - spread:.6g} <= 0")
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.period = period
        self.a_min = float(coeffs[0] - spread)
        self.a_max = float(coeffs[0] + spread)

    @property
    def nharm(self):
        return self.coeffs.size - 1

    @property
    def is_constant(self):
        return not np.any(self.coeffs[1:])

    def to_dict(self):
        return {"n": self.params.n, "m": self.params.m, "period": self.period,
                "cos_coeffs": [float(c) for c in self.coeffs]}

    def to_json(self):
        # json writes floats with repr, the shortest round-trip form
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        try:
            params = EquationParams(int(d["n"]), int(d["m"]))
            return cls(params, d["cos_coeffs"], d.get("period", 1.0))
        except KeyError as exc:
            raise ConfigError(f"potential spec is missing {exc}") from None

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return (isinstance(other, PotentialModel) and self.params == other.params
                and self.period == other.period and np.array_equal(self.coeffs, other.coeffs))

    def __hash__(self):
        return hash((self.params, self.period, tuple(self.coeffs)))

    def __repr__(self):
        return f"PotentialModel(n={self.params.n}, m={self.params.m}, coeffs={list(self.coeffs)}, period={self.period})"


def _apply(fn, x):
    if np.ndim(x) == 0:
        return fn(float(x))
    xs = np.asarray(x, dtype=float)
    return np.array([fn(v) for v in xs.ravel()]).reshape(xs.shape)


def eval_a(model, x):
    w = 2.0 * np.pi / model.period
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, model.coeffs[0])
    for j in range(1, model.coeffs.size):
        out = out + model.coeffs[j] * np.cos(w * j * x)
    return float(out) if out.ndim == 0 else out


def eval_G(model, x):
    """G(x).  Exact antiderivative of each harmonic (see kernels.potential)."""
    deg = model.params.deg
    if np.ndim(x) == 0:
        return _k.g_value(float(x), model.coeffs, model.period, deg)
    xs = np.ascontiguousarray(x, dtype=float)
    return _k.g_array(xs.ravel(), model.coeffs, model.period, deg).reshape(xs.shape)


def eval_G_quadrature(model, x, rtol=1e-12):
    """G(x) by adaptive quadrature; an independent route used for cross-checks."""
    x = float(x)
    ax = abs(x)
    if ax == 0.0:
        return 0.0
    deg = model.params.deg
    if model.is_constant:
        return model.coeffs[0] * ax ** (deg + 1) / (deg + 1)
    f = lambda s: _k.g1_value(s, model.coeffs, model.period, deg)
    # split at period multiples so each piece has at most one oscillation per harmonic
    edges = np.linspace(0.0, ax, max(2, int(math.ceil(ax * model.nharm / model.period)) + 1))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=200)
        if not math.isfinite(val) or err > 10 * rtol * abs(val) + 1e-300:
            raise NumericalError(f"quadrature for G did not converge on [{a}, {b}] (x={x})")
        total += val
    return total


def eval_G1(model, x):
    return _apply(lambda v: _k.g1_value(v, model.coeffs, model.period, model.params.deg), x)


def eval_G2(model, x):
    return _apply(lambda v: _k.g2_value(v, model.coeffs, model.period, model.params.deg), x)


BOUND_NAMES = ("G/x^(2n+2)", "|G'|/|x|^(2n+1)", "|G''|/(|x|^(2n+1)+x^(2n))",
               "|G/G'|/|x|", "|G G''/G'^2|/(|x|+1)")


def growth_ratios(model, xs):
    """The five ratios the growth estimates bound (see TWO_SIDED below)."""
    n = model.params.n
    ax = np.abs(xs)
    g = eval_G(model, xs)
    g1 = eval_G1(model, xs)
    g2 = eval_G2(model, xs)
    return {
        BOUND_NAMES[0]: g / ax ** (2 * n + 2),
        BOUND_NAMES[1]: np.abs(g1) / ax ** (2 * n + 1),
        BOUND_NAMES[2]: np.abs(g2) / (ax ** (2 * n + 1) + ax ** (2 * n)),
        BOUND_NAMES[3]: np.abs(g / g1) / ax,
        BOUND_NAMES[4]: np.abs(g * g2 / g1 ** 2) / (ax + 1),
    }


# ratios bounded above and below; the other two are bounded above only
# (G'' changes sign where a'(x) x outweighs (2n+1) a(x))
TWO_SIDED = (BOUND_NAMES[0], BOUND_NAMES[1], BOUND_NAMES[3])


def check_growth_bounds(model, x_range=(1.0, 100.0), sample_count=400):
    lo, hi = (float(v) for v in x_range)
    if lo < 1.0 or hi <= lo:
        raise DomainError(f"x_range must lie in |x| >= 1 and be nonempty, got {x_range}")
    xs = np.geomspace(lo, hi, int(sample_count))
    xs = np.concatenate([-xs[::-1], xs])
    consts = {}
    for name, r in growth_ratios(model, xs).items():
        ok = np.isfinite(r)
        if name in TWO_SIDED:
            ok &= r > 0
        if not np.all(ok):
            raise InvariantViolation(
                f"growth bound {name} fails at x={xs[~ok][0]}: ratio not in (0, inf)")
        consts[name] = (float(r.min()), float(r.max()))
    return BoundReport(lo, hi, int(sample_count), consts)
