"""Small-amplitude behaviour of the time-1 map near the origin.

Near x = 0 the forcing term p(t) x^(2m+1) dominates a(x) x^(2n+1), and the
origin is stable exactly when the mean of p is positive.  This module
iterates the stroboscopic map to collect evidence for that (bounded orbits),
measures rotation numbers (twist) and locates periodic points of the
iterated map (subharmonics).
"""
import csv
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import optimize, special

from .errors import AmplitudeTooLarge, DomainError, IntegrationError, NumericalError
from .flow import IntegratorConfig, xy_params
from .kernels import ode as _ode
from .potential import eval_G
from .profile import as_profile

SMALL_AMPLITUDE = 1.0
ESCAPE_BOX = 10.0


def _atol(scale, m, rtol):
    # y runs ~ r^(m+1) for orbits of amplitude r, far below a fixed absolute tolerance
    r = max(float(scale), 1e-12)
    return 1e-2 * rtol * np.array([r, r ** (m + 1)])


class TimeOneMap:
    """The time-1 map of x'' + a(x) x^(2n+1) + p(t) x^(2m+1) = 0, started at t = 0."""

    def __init__(self, profile, model, cfg=None):
        self.profile = as_profile(profile)
        self.model = model
        self.cfg = cfg or IntegratorConfig()
        self._kt, self._kv0, self._kv1 = self.profile.arrays()
        self._coeffs = np.array(model.coeffs)
        self._prm = xy_params(model)

    def _run(self, z, t0, t1, scale):
        a = _atol(scale, self.model.params.m, self.cfg.rel_tol)
        st, t, out, _, _ = _ode.integrate_profile(
            0, t0, np.array(z, dtype=float), t1, self._kt, self._kv0, self._kv1, self._coeffs,
            _ode._EMPTY, _ode._EMPTY, _ode._EMPTY, self._prm, self.cfg.rel_tol, a,
            self.cfg.max_step, 0.0, -1, 0.0, 1.0, -1, 0.0, self.cfg.max_steps)
        if st != _ode.OK:
            raise IntegrationError(f"time-1 map stopped ({_ode.STATUS_NAMES[st]}) at t={t}", st, t)
        return out

    def __call__(self, z, scale=None):
        z = np.asarray(z, dtype=float)
        r = float(np.hypot(*z))
        if r == 0.0:
            return np.zeros(2)
        out = self._run(z, 0.0, 1.0, r if scale is None else scale)
        if not np.all(np.abs(out) <= ESCAPE_BOX):
            raise AmplitudeTooLarge(f"orbit from {tuple(z)} left |x|,|y| <= {ESCAPE_BOX} within one period")
        return out

    def power(self, z, q, scale=None):
        scale = float(np.hypot(*z)) if scale is None else scale
        pts = [np.asarray(z, dtype=float)]
        for _ in range(q):
            pts.append(self(pts[-1], scale))
        return pts

    def iterate(self, z0, n_iter, escape_radius=math.inf, scale=None, backward=False):
        """(status, samples) from the kernel loop; samples has n_completed + 1 rows."""
        z0 = np.asarray(z0, dtype=float)
        r = float(np.hypot(*z0)) if scale is None else scale
        samples = np.zeros((n_iter + 1, 2))
        a = _atol(r, self.model.params.m, self.cfg.rel_tol)
        st, k = _ode.iterate_map(z0, int(n_iter), self._kt, self._kv0, self._kv1, self._coeffs,
                                 self._prm, self.cfg.rel_tol, a, self.cfg.max_step,
                                 float(escape_radius), self.cfg.max_steps, samples, backward)
        if st not in (_ode.OK, _ode.ESCAPED):
            raise IntegrationError(f"map iteration stopped ({_ode.STATUS_NAMES[st]}) after {k} periods", st)
        return st, samples[:k + 1]


def poincare_map(state, profile, model, cfg=None):
    x, y = (float(v) for v in state)
    if abs(x) > SMALL_AMPLITUDE or abs(y) > SMALL_AMPLITUDE:
        raise DomainError(f"start ({x}, {y}) outside the small-amplitude box |x|,|y| <= 1")
    out = TimeOneMap(profile, model, cfg)((x, y))
    return float(out[0]), float(out[1])


@dataclass
class PoincareOrbit:
    samples: np.ndarray
    rotation_estimate: float = math.nan
    max_radius: float = math.nan
    escaped: bool = False
    extent: tuple = None  # (x, y) half-widths of the level curve; None: take them from the samples

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(self.samples)):
            raise NumericalError("orbit samples are not finite")
        self.max_radius = float(np.max(np.hypot(self.samples[:, 0], self.samples[:, 1])))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "x", "y"])
            for k, (x, y) in enumerate(self.samples):
                w.writerow([k, repr(float(x)), repr(float(y))])


def orbit_extent(model, r, mean_p):
    """Half-widths (r, y_max) of the level curve through (r, 0) of the mean-forcing system."""
    k = 2 * model.params.m + 2
    return r, math.sqrt(2.0 * (eval_G(model, r) + mean_p * r ** k / k))


def _advances(samples, extent=None):
    """Clockwise angular advance per iterate, in cycles, in coordinates scaled by the orbit's extent.

    Orbits turn clockwise and monotonically (x y' - y x' < 0 for a restoring
    force), so each advance is the clockwise difference mod one turn.  Short
    orbits do not reveal their extent, so pass it when known.
    """
    s = np.asarray(samples, dtype=float)
    ext = np.max(np.abs(s), axis=0) if extent is None else np.asarray(extent, dtype=float)
    if np.any(ext == 0) or np.any(np.hypot(s[:, 0], s[:, 1]) == 0):
        raise DomainError("orbit touches the origin; rotation number undefined")
    ang = np.arctan2(s[:, 1] / ext[1], s[:, 0] / ext[0])
    return np.mod(ang[:-1] - ang[1:], 2 * np.pi) / (2 * np.pi)


def rotation_number(orbit):
    """(rotation number in cycles per period, error estimate 1/N)."""
    samples, ext = (orbit.samples, orbit.extent) if isinstance(orbit, PoincareOrbit) else (orbit, None)
    adv = _advances(samples, ext)
    if adv.size == 0:
        raise DomainError("orbit has no iterates")
    rho = float(adv.sum() / adv.size)
    if isinstance(orbit, PoincareOrbit):
        orbit.rotation_estimate = rho
    return rho, 1.0 / adv.size


def rotation_halves(orbit):
    """Rotation numbers of the two halves of an orbit and the tolerance 2/N they should meet."""
    samples, ext = (orbit.samples, orbit.extent) if isinstance(orbit, PoincareOrbit) else (orbit, None)
    adv = _advances(samples, ext)
    h = adv.size // 2
    return float(adv[:h].mean()), float(adv[h:2 * h].mean()), 2.0 / adv.size


def averaged_rotation_number(r, mean_p, m):
    """Rotation number of x'' + mean_p x^(2m+1) = 0 at amplitude r (the small-amplitude oracle).

    The period is 4 sqrt((m+1)/mean_p) r^(-m) B(1/(2m+2), 1/2) / (2m+2).
    """
    k = 2 * m + 2
    integral = special.beta(1.0 / k, 0.5) / k
    period = 4.0 * math.sqrt((m + 1) / mean_p) * r ** (-m) * integral
    return 1.0 / period


@dataclass
class StabilityReport:
    mean_forcing: float
    n_iter: int
    factor: float
    amplitudes: list
    max_radius: list
    escaped: list
    rotation: list
    bounded: bool = False

    def to_dict(self):
        return asdict(self)


def stability_scan(profile, model, amplitude_grid, n_iter, cfg=None, factor=5.0,
                   require_positive_mean=True, keep_orbits=False):
    """Iterate the map from (r, 0) for each r; an orbit fails if it leaves radius factor * r."""
    profile = as_profile(profile)
    mean = profile.integral()
    if require_positive_mean and not mean > 0:
        raise DomainError(f"mean forcing {mean:.6g} is not positive")
    tm = TimeOneMap(profile, model, cfg)
    rep = StabilityReport(mean, int(n_iter), factor, [], [], [], [])
    orbits = []
    for r in amplitude_grid:
        r = float(r)
        if not 0 <= r <= SMALL_AMPLITUDE:
            raise DomainError(f"amplitude {r} outside [0, 1]")
        rep.amplitudes.append(r)
        if r == 0.0:
            rep.max_radius.append(0.0)
            rep.escaped.append(False)
            rep.rotation.append(0.0)
            continue
        st, samples = tm.iterate((r, 0.0), n_iter, escape_radius=factor * r)
        orb = PoincareOrbit(samples, extent=orbit_extent(model, r, mean))
        rep.max_radius.append(orb.max_radius)
        rep.escaped.append(st == _ode.ESCAPED)
        rep.rotation.append(rotation_number(orb)[0] if samples.shape[0] > 1 else math.nan)
        if keep_orbits:
            orbits.append(orb)
    rep.bounded = not any(rep.escaped) and all(
        mr <= factor * r for mr, r in zip(rep.max_radius, rep.amplitudes))
    return (rep, orbits) if keep_orbits else rep


def exit_time(profile, model, r, t_max, factor=5.0, cfg=None):
    """First time |x| reaches factor * r from (r, 0), or inf if not by t_max."""
    tm = TimeOneMap(profile, model, cfg)
    a = _atol(r, model.params.m, tm.cfg.rel_tol)
    st, t, z, _, _ = _ode.integrate_profile(
        0, 0.0, np.array([r, 0.0]), float(t_max), tm._kt, tm._kv0, tm._kv1, tm._coeffs,
        _ode._EMPTY, _ode._EMPTY, _ode._EMPTY, tm._prm, tm.cfg.rel_tol, a, tm.cfg.max_step,
        0.0, -1, 0.0, 1.0, 0, factor * r, 10 ** 9)
    if st == _ode.CAP:
        return t
    if st != _ode.OK:
        raise IntegrationError(f"exit-time run stopped ({_ode.STATUS_NAMES[st]})", st, t)
    return math.inf


def reversibility_error(profile, model, z0, n_iter, cfg=None):
    """Iterate forward n_iter periods, then back along the reversed flow; distance to the start."""
    tm = TimeOneMap(profile, model, cfg)
    z0 = np.asarray(z0, dtype=float)
    scale = float(np.hypot(*z0))
    st, fwd = tm.iterate(z0, n_iter, scale=scale)
    st, back = tm.iterate(fwd[-1], n_iter, scale=scale, backward=True)
    return float(np.hypot(*(back[-1] - z0)))


@dataclass
class SubharmonicResult:
    found: bool
    p: int = 0
    q: int = 0
    z: tuple = ()
    residual: float = math.inf
    minimal_period: bool = False
    rotation_range: tuple = ()
    orbit: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["orbit"] = [list(map(float, v)) for v in self.orbit]
        return d


def lowest_rational(lo, hi, q_max=1000, q=None):
    """The fraction p/q in the open interval (lo, hi) with the smallest q (smallest p on ties)."""
    qs = [q] if q is not None else range(1, q_max + 1)
    for qq in qs:
        p = math.floor(lo * qq) + 1
        if p / qq < hi and p >= 1:
            return Fraction(p, qq)
    return None


def _polar_advance(tm, z, q, scale):
    """Clockwise polar-angle advance (radians, unscaled coordinates) of z over q periods."""
    pts = tm.power(z, q, scale)
    ang = np.array([math.atan2(v[1], v[0]) for v in pts])
    return float(np.sum(np.mod(ang[:-1] - ang[1:], 2 * np.pi))), pts[-1]


def find_subharmonic(profile, model, q=None, seed_amplitude=None, cfg=None, amplitudes=None,
                     scan_iter=400, n_rays=24, newton_iter=50, tol=1e-10):
    """Locate a fixed point of the q-th iterate of the time-1 map with rotation p/q.

    The rotation-number scan over ``amplitudes`` fixes the rational (the one
    with the smallest denominator, or the smallest p for a given q).  On each
    ray from the origin, brentq finds the radius whose q-th image has turned
    by exactly p turns; the radial displacement along that curve changes sign
    at a fixed point, which Newton's method with a difference Jacobian then
    polishes.
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-12, abs_tol=1e-15)
    profile = as_profile(profile)
    tm = TimeOneMap(profile, model, cfg)
    if amplitudes is None:
        amplitudes = np.linspace(0.1, SMALL_AMPLITUDE, 10)
    amplitudes = np.sort(np.asarray(amplitudes, dtype=float))
    rhos = []
    for r in amplitudes:
        _, s = tm.iterate((r, 0.0), scan_iter)
        orb = PoincareOrbit(s, extent=orbit_extent(model, r, profile.integral()))
        rhos.append(rotation_number(orb)[0])
    diag = {"amplitudes": amplitudes.tolist(), "rotation": rhos}
    lo_rho, hi_rho = min(rhos), max(rhos)
    frac = lowest_rational(lo_rho, hi_rho, q=q)
    res = SubharmonicResult(False, rotation_range=(lo_rho, hi_rho), diagnostics=diag)
    if frac is None:
        diag["reason"] = f"no rational with denominator {q} in the rotation range"
        return res
    p, q = frac.numerator, frac.denominator
    res.p, res.q = p, q
    target = 2 * math.pi * p
    scale = float(amplitudes[-1])

    # bracket the amplitude on the x axis where the rotation crosses p/q
    j = next((k for k in range(len(rhos) - 1)
              if (rhos[k] - p / q) * (rhos[k + 1] - p / q) <= 0), None)
    if seed_amplitude is not None:
        r_lo, r_hi = 0.8 * seed_amplitude, min(1.2 * seed_amplitude, SMALL_AMPLITUDE)
    elif j is not None:
        r_lo, r_hi = amplitudes[j], amplitudes[j + 1]
    else:
        diag["reason"] = "rotation scan not monotone around the target"
        return res

    # rays are taken in coordinates scaled by the orbit's aspect ratio so that
    # they spread evenly around the flat invariant curves
    _, s0 = tm.iterate((0.5 * (r_lo + r_hi), 0.0), max(4 * q, 40))
    ext = np.max(np.abs(s0), axis=0)
    asp = float(ext[1] / ext[0])

    def on_ray(psi, lo, hi):
        c, s = math.cos(psi), asp * math.sin(psi)
        f = lambda r: _polar_advance(tm, (r * c, r * s), q, scale)[0] - target
        flo, fhi = f(lo), f(hi)
        k = 0
        while flo * fhi > 0 and k < 8:
            lo, hi = max(0.5 * lo, 1e-3), min(1.5 * hi, SMALL_AMPLITUDE)
            flo, fhi = f(lo), f(hi)
            k += 1
        if flo * fhi > 0:
            return None
        r = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14)
        z = np.array([r * c, r * s])
        img = tm.power(z, q, scale)[-1]
        return r, z, float(np.hypot(*img) - np.hypot(*z))

    psis = np.linspace(0.0, math.pi, n_rays + 1)
    rows = []
    for psi in psis:
        out = on_ray(psi, r_lo, r_hi)
        rows.append((psi, out))
        if out is not None:
            r_lo, r_hi = 0.95 * out[0], min(1.05 * out[0], SMALL_AMPLITUDE)
    diag["rays"] = [(float(psi), None if o is None else (float(o[0]), float(o[2]))) for psi, o in rows]
    seed = None
    for (pa, oa), (pb, ob) in zip(rows[:-1], rows[1:]):
        if oa is not None and ob is not None and oa[2] * ob[2] <= 0:
            def g(psi):
                o = on_ray(psi, 0.95 * min(oa[0], ob[0]), min(1.05 * max(oa[0], ob[0]), 1.0))
                if o is None:
                    raise NumericalError("lost the p/q curve between rays")
                return o[2]
            try:
                psi = optimize.brentq(g, pa, pb, xtol=1e-12)
                seed = on_ray(psi, 0.95 * min(oa[0], ob[0]), min(1.05 * max(oa[0], ob[0]), 1.0))[1]
            except (NumericalError, ValueError):
                continue
            break
    if seed is None:
        diag["reason"] = "no sign change of the radial displacement along the p/q curve"
        return res

    z = seed
    F = lambda v: tm.power(v, q, scale)[-1] - v
    fz = F(z)
    for it in range(newton_iter):
        if np.max(np.abs(fz)) <= tol:
            break
        J = np.empty((2, 2))
        for c in range(2):
            dz = np.zeros(2)
            dz[c] = 1e-7 * max(abs(z[c]), 1e-3 * scale)
            J[:, c] = (F(z + dz) - F(z - dz)) / (2 * dz[c])
        step = np.linalg.lstsq(J, -fz, rcond=None)[0]
        z = z + step
        fz = F(z)
    diag["newton_iterations"] = it
    res.residual = float(np.max(np.abs(fz)))
    res.z = (float(z[0]), float(z[1]))
    if not res.residual <= tol:
        diag["reason"] = f"Newton stalled at residual {res.residual:.3g}"
        return res
    pts = tm.power(z, q, scale)
    res.orbit = [tuple(map(float, v)) for v in pts]
    res.minimal_period = all(np.max(np.abs(pts[d] - pts[0])) > 1e-6 * np.hypot(*z)
                             for d in range(1, q) if q % d == 0)
    adv, _ = _polar_advance(tm, z, q, scale)
    diag["turns"] = adv / (2 * math.pi)
    res.found = res.minimal_period and abs(adv - target) < 1e-6
    if not res.found:
        diag["reason"] = "orbit failed the minimal-period or winding check"
    return res
