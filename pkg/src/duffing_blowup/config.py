"""Run configuration: one JSON file, dotted-key overrides, validation before any work."""
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError
from .flow import IntegratorConfig
from .forcing_builder import ScheduleParams
from .potential import EquationParams, PotentialModel

OUTPUT_ENV = "DUFFING_BLOWUP_OUTPUT_DIR"


@dataclass
class PotentialSpec:
    n: int = 3
    m: int = 2
    cos_coeffs: list = field(default_factory=lambda: [1.5, 1.0])
    period: float = 1.0

    def build(self):
        return PotentialModel(EquationParams(self.n, self.m), self.cos_coeffs, self.period)


@dataclass
class ChartSpec:
    I_range: list = field(default_factory=lambda: [1.0, 2e12])
    nodes_per_decade: int = 256
    I_chart_min: float = 1e2
    h_min: float = 1e4
    h_max: float = 1e14
    h_count: int = 101
    slope_tolerance: float = 0.02


@dataclass
class VerifySpec:
    tolerance: float = 0.05
    time_tolerance: float = 0.03
    sigma: float = 0.5
    I0_grid: list = field(default_factory=lambda: [1e3, 1e4, 1e5, 1e6])
    sigma_check_I0: float = 1e5
    quarters: bool = True


@dataclass
class StabilitySpec:
    amplitudes: list = field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
    n_iter: int = 10_000
    factor: float = 5.0
    negative_control: float = -0.5
    subharmonic: bool = True
    subharmonic_q: int = None
    scan_amplitudes: list = field(default_factory=lambda: [0.1 * k for k in range(1, 11)])


@dataclass
class RunConfig:
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    chart: ChartSpec = field(default_factory=ChartSpec)
    verify: VerifySpec = field(default_factory=VerifySpec)
    stability: StabilitySpec = field(default_factory=StabilitySpec)
    output_dir: str = "runs/default"
    workers: int = 1

    def validate(self):
        """Cross-field checks; returns the potential model."""
        model = self.potential.build()
        self.schedule.check(model.params)
        if not self.integrator.I_cap > self.chart.I_chart_min:
            raise ConfigError("I_cap must exceed the chart's certified minimum action")
        lo, hi = self.chart.I_range
        if not (0 < lo <= self.schedule.I_0 and self.integrator.I_cap <= hi):
            raise ConfigError(f"chart range {self.chart.I_range} must contain [I_0, I_cap] = "
                              f"[{self.schedule.I_0}, {self.integrator.I_cap}]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return model

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_SECTIONS = {"potential": PotentialSpec, "schedule": ScheduleParams,
             "integrator": IntegratorConfig, "chart": ChartSpec, "verify": VerifySpec,
             "stability": StabilitySpec}


def _section(cls, data, name):
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad [{name}] section: {exc}") from None


def from_dict(d):
    d = dict(d or {})
    kw = {}
    for name, cls in _SECTIONS.items():
        sec = d.pop(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"section {name} must be an object")
        kw[name] = _section(cls, sec, name)
    for key in ("output_dir", "workers"):
        if key in d:
            kw[key] = d.pop(key)
    if d:
        raise ConfigError(f"unknown top-level keys: {sorted(d)}")
    return RunConfig(**kw)


def load(path=None, overrides=(), output_dir=None):
    """Config from a JSON file (or defaults), then ``section.key=value`` overrides.

    Override values are parsed as JSON when possible, else taken as strings.
    The output directory comes from ``output_dir``, then the environment
    variable, then the file.
    """
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-section")
        node[parts[-1]] = value
    cfg = from_dict(data)
    out = output_dir or os.environ.get(OUTPUT_ENV)
    if out:
        cfg = replace(cfg, output_dir=out)
    return cfg
