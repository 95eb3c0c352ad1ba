"""Piecewise-linear periodic forcing p(t) on [0, 1]."""
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError


class ForcingProfile:
    """Segments [t[i], t[i+1]] on which p runs linearly from v0[i] to v1[i].

    Profiles produced by the builder come from a single knot list, so the
    value at each junction is one float shared by both neighbours and
    continuity is exact.  Arbitrary segment values are still representable
    (from JSON, say) so that validation has something to catch.
    """

    def __init__(self, t, v0, v1, t_last_modified=0.0):
        t = np.array(t, dtype=float)
        v0 = np.array(v0, dtype=float)
        v1 = np.array(v1, dtype=float)
        if t.ndim != 1 or t.size < 2 or v0.shape != (t.size - 1,) or v1.shape != v0.shape:
            raise ConfigError("a profile needs n+1 boundaries and n start/end values")
        self.t = t
        self.v0 = v0
        self.v1 = v1
        self.t_last_modified = float(t_last_modified)

    @classmethod
    def constant(cls, value=1.0):
        return cls([0.0, 1.0], [value], [value])

    @classmethod
    def from_knots(cls, kt, kv, t_last_modified=0.0):
        kv = np.asarray(kv, dtype=float)
        return cls(kt, kv[:-1], kv[1:], t_last_modified)

    @property
    def breakpoints(self):
        return self.t

    @property
    def n_segments(self):
        return self.v0.size

    def arrays(self):
        return self.t, self.v0, self.v1

    def __call__(self, t):
        """p at time(s) t, periodic; at a boundary the later segment wins."""
        u = np.mod(np.asarray(t, dtype=float), 1.0)
        i = np.clip(np.searchsorted(self.t, u, side="right") - 1, 0, self.n_segments - 1)
        dt = self.t[i + 1] - self.t[i]
        frac = np.where(dt > 0, (u - self.t[i]) / np.where(dt > 0, dt, 1.0), 0.0)
        out = self.v0[i] + (self.v1[i] - self.v0[i]) * frac
        return float(out) if out.ndim == 0 else out

    def integral(self):
        """int_0^1 p dt, summed exactly segment by segment."""
        return float(np.sum(0.5 * (self.v0 + self.v1) * np.diff(self.t)))

    def segments(self):
        out = []
        for a, b, v0, v1 in zip(self.t[:-1], self.t[1:], self.v0, self.v1):
            out.append({"t0": float(a), "t1": float(b),
                        "kind": "const" if v0 == v1 else "linear",
                        "v0": float(v0), "v1": float(v1)})
        return out

    def to_dict(self):
        return {"segments": self.segments(), "t_last_modified": self.t_last_modified}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        segs = d.get("segments")
        if not segs:
            raise ConfigError("profile has no segments")
        t = [segs[0]["t0"]] + [s["t1"] for s in segs]
        for a, b in zip(segs[:-1], segs[1:]):
            if a["t1"] != b["t0"]:
                raise ConfigError(f"segments do not tile: gap or overlap at t={a['t1']}")
        v0, v1 = [], []
        for s in segs:
            kind = s.get("kind", "linear")
            if kind not in ("const", "linear"):
                raise ConfigError(f"unknown segment kind {kind!r}")
            v0.append(s["v0"])
            v1.append(s["v0"] if kind == "const" else s["v1"])
        return cls(t, v0, v1, d.get("t_last_modified", 0.0))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text())

    def __eq__(self, other):
        return (isinstance(other, ForcingProfile) and np.array_equal(self.t, other.t)
                and np.array_equal(self.v0, other.v0) and np.array_equal(self.v1, other.v1))

    def __repr__(self):
        return f"ForcingProfile({self.n_segments} segments, mean={self.integral():.6g})"


def as_profile(forcing):
    """Accept a profile or a constant."""
    if isinstance(forcing, ForcingProfile):
        return forcing
    return ForcingProfile.constant(float(forcing))
