"""Run configuration: a single JSON document, unknown keys rejected.

Schema (all keys optional except ``case``)::

    {
      "case": "gravity" | "cylinder",
      "model": "d2q9", "lam": 4.0, "tau": 1e-3,
      "dt": 0.024, "t_max": 0.12, "scheme": "m2s",
      "mesh": {"lo": [0, 0], "hi": [1, 1], "macro_dims": [4, 4], "sub_dims": [8, 8], "degree": 3},
      "workers": 1, "scheduler": "eager", "deterministic": false, "cache_factorizations": true,
      "output": {"dir": "out", "every": 0, "trace": false, "profile": false},
      "gravity": {"g": 16.0, "rho0": 1.0},
      "cylinder": {"K_s": 300.0, "kappa": 40.0, "x_c": [-4, 0], "w_s": [1, 0, 0],
                   "inflow": [1.0, 0.03, 0.0]}
    }

Defaults depend on the case; see ``GRAVITY_DEFAULTS`` and ``CYLINDER_DEFAULTS``.
"""
import copy
import json
import math
from dataclasses import asdict, dataclass, field

from .integrator import SCHEME_NAMES
from .kinetic import MODEL_NAMES


class ConfigError(ValueError):
    pass


@dataclass
class MeshConfig:
    lo: list
    hi: list
    macro_dims: list
    sub_dims: list
    degree: int


@dataclass
class OutputConfig:
    dir: str = None
    every: int = 0          # output interval in steps, 0 = final state only
    trace: bool = False     # task trace CSV of the last step
    profile: bool = False   # per-substep timing CSV


@dataclass
class GravityConfig:
    g: float = 16.0
    rho0: float = 1.0


@dataclass
class CylinderConfig:
    K_s: float = 300.0
    kappa: float = 40.0
    x_c: list = field(default_factory=lambda: [-4.0, 0.0])
    w_s: list = field(default_factory=lambda: [1.0, 0.0, 0.0])
    inflow: list = field(default_factory=lambda: [1.0, 0.03, 0.0])


@dataclass
class RunConfig:
    case: str
    model: str
    lam: float
    tau: float
    dt: float
    t_max: float
    scheme: str
    mesh: MeshConfig
    workers: int = 1
    scheduler: str = "eager"
    deterministic: bool = False
    cache_factorizations: bool = True
    output: OutputConfig = field(default_factory=OutputConfig)
    gravity: GravityConfig = field(default_factory=GravityConfig)
    cylinder: CylinderConfig = field(default_factory=CylinderConfig)

    @property
    def n_steps(self):
        return max(1, int(round(self.t_max / self.dt)))

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        d = self.to_dict()
        for k, v in changes.items():
            if "." in k:
                sec, key = k.split(".", 1)
                d[sec][key] = v
            else:
                d[k] = v
        return RunConfig.from_dict(d)

    @classmethod
    def from_dict(cls, data):
        return _build(data)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return _build(data)


GRAVITY_DEFAULTS = {
    "model": "d2q9", "lam": 4.0, "tau": 1e-3, "dt": 0.024, "t_max": 0.12, "scheme": "m2s",
    "mesh": {"lo": [0.0, 0.0], "hi": [1.0, 1.0], "macro_dims": [4, 4], "sub_dims": [8, 8], "degree": 3},
}

# reduced resolution; the full run uses 16x16 macrocells of 15x3 subcells at degree 3
CYLINDER_DEFAULTS = {
    "model": "d2q9", "lam": 1.0, "tau": 1e-4, "dt": 0.02, "t_max": 5.0, "scheme": "m2s",
    "mesh": {"lo": [-5.0, -1.0], "hi": [5.0, 1.0], "macro_dims": [8, 8], "sub_dims": [2, 2], "degree": 2},
}

_CASES = {"gravity": GRAVITY_DEFAULTS, "cylinder": CYLINDER_DEFAULTS}
_SECTIONS = {"mesh": MeshConfig, "output": OutputConfig, "gravity": GravityConfig,
             "cylinder": CylinderConfig}


def _check_keys(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(data) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _finite(name, x, positive=False):
    try:
        x = float(x)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {x!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"{name} must be finite, got {x}")
    if positive and x <= 0:
        raise ConfigError(f"{name} must be > 0, got {x}")
    return x


def _build(data):
    top = {f for f in RunConfig.__dataclass_fields__}
    _check_keys(data, top, "config")
    case = data.get("case")
    if case not in _CASES:
        raise ConfigError(f"case must be one of {sorted(_CASES)}, got {case!r}")
    merged = copy.deepcopy(_CASES[case])
    for k, v in data.items():
        if k in _SECTIONS:
            fields = _SECTIONS[k].__dataclass_fields__
            _check_keys(v, fields, k)
            base = merged.get(k, {})
            merged[k] = {**base, **v}
        else:
            merged[k] = v
    kw = {}
    for k, v in merged.items():
        kw[k] = _SECTIONS[k](**v) if k in _SECTIONS else v
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.model not in MODEL_NAMES:
        raise ConfigError(f"model must be one of {MODEL_NAMES}, got {cfg.model!r}")
    if cfg.scheme not in SCHEME_NAMES:
        raise ConfigError(f"scheme must be one of {SCHEME_NAMES}, got {cfg.scheme!r}")
    cfg.lam = _finite("lam", cfg.lam, positive=True)
    cfg.tau = _finite("tau", cfg.tau)
    if cfg.tau < 0:
        raise ConfigError(f"tau must be >= 0, got {cfg.tau}")
    cfg.dt = _finite("dt", cfg.dt, positive=True)
    cfg.t_max = _finite("t_max", cfg.t_max)
    if cfg.t_max < cfg.dt:
        raise ConfigError(f"t_max ({cfg.t_max}) must be >= dt ({cfg.dt})")
    if not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {cfg.workers!r}")
    if cfg.scheduler not in ("eager", "priority"):
        raise ConfigError(f"scheduler must be 'eager' or 'priority', got {cfg.scheduler!r}")
    m = cfg.mesh
    D = len(m.lo)
    if len(m.hi) != D or len(m.macro_dims) != D or len(m.sub_dims) != D:
        raise ConfigError("mesh lo, hi, macro_dims and sub_dims must have equal length")
    for name, arr in (("mesh.lo", m.lo), ("mesh.hi", m.hi)):
        for x in arr:
            _finite(name, x)
    if not isinstance(m.degree, int) or not 1 <= m.degree <= 8:
        raise ConfigError(f"mesh.degree must be an integer in [1, 8], got {m.degree!r}")
    if cfg.output.every < 0:
        raise ConfigError("output.every must be >= 0")
    for name in ("g", "rho0"):
        _finite(f"gravity.{name}", getattr(cfg.gravity, name))
    if cfg.gravity.rho0 <= 0:
        raise ConfigError("gravity.rho0 must be > 0")
    c = cfg.cylinder
    _finite("cylinder.K_s", c.K_s)
    _finite("cylinder.kappa", c.kappa)
    for name, arr in (("cylinder.x_c", c.x_c), ("cylinder.w_s", c.w_s), ("cylinder.inflow", c.inflow)):
        for x in arr:
            _finite(name, x)
