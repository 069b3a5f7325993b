"""Experiment configuration: a single-section INI document with strict keys.

Example::

    [experiment]
    schema_version = 1
    experiment = standalone_sweep
    epsilon = 20
    k = 1
    tau_grid = linspace(2, 12, 41)
    adiabatic_tau_grid = arange(40, 140, 0.5)

Grids accept comma-separated numbers or ``linspace(a, b, n)``,
``logspace(a, b, n)`` (exponents of ten) and ``arange(a, b, step)``.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
SECTION = "experiment"

EXPERIMENTS = {
    "lzm_dynamics": "uncorrected LZM sweep: populations and infidelity along s",
    "ecd_dynamics": "LZM under the first-order E-CD field alone: populations and infidelity along s",
    "standalone_sweep": "final infidelity vs tau, H_E alone, omega set by the strength budget k",
    "ontop_sweep": "final infidelity vs tau, H + H_E, omega set by the strength budget k",
    "intnorm_sweep": "infidelity vs time-integrated Frobenius norm, adiabatic vs E-CD",
    "two_qubit": "Bell-state preparation, E-CD vs adiabatic",
    "three_level": "three-level chain at equal strength, E-CD vs adiabatic and speedup",
    "robustness": "relative fidelity error under amplitude and phase offsets",
    "scaling_order": "single-period stroboscopic infidelity vs period length",
}

DEFAULT_MODEL = {
    "two_qubit": "two_qubit",
    "three_level": "three_level",
}

# families whose construction only exists for the su(2) sweep
LZM_ONLY = ("robustness", "scaling_order")


_DELTAS = tuple(float(np.round(v, 15)) for v in np.logspace(-5, -1, 17))

# canonical parameters of each family; explicit keys override them
EXPERIMENT_DEFAULTS = {
    "lzm_dynamics": {"epsilon": 20.0, "tau": 20.0},
    "ecd_dynamics": {"epsilon": 20.0, "tau": 20.0, "n_periods": 40},
    "standalone_sweep": {"epsilon": 20.0, "k": (1.0, 0.5, 0.25),
                         "tau_grid": tuple(np.round(np.arange(1.0, 12.0001, 0.1), 10)),
                         "adiabatic_tau_grid": tuple(np.round(np.arange(40.0, 140.0001, 1.0), 10))},
    "ontop_sweep": {"epsilon": 20.0, "mode": "ontop", "k": (1.0, 0.5, 0.25),
                    "tau_grid": tuple(np.round(np.arange(2.0, 30.0001, 0.2), 10)),
                    "adiabatic_tau_grid": tuple(np.round(np.arange(40.0, 140.0001, 1.0), 10))},
    "intnorm_sweep": {"epsilon": 40.0, "tau": 4.0,
                      "n_periods_grid": (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256),
                      "adiabatic_tau_grid": tuple(np.round(np.geomspace(0.2, 300.0, 50), 6))},
    "two_qubit": {"epsilon": 5.0, "tau": 5.0, "n_periods": 10,
                  "adiabatic_tau_grid": tuple(np.round(np.arange(5.0, 100.0001, 2.5), 10))},
    "three_level": {"epsilon": 40.0, "tau": 25.0, "d": 2.5, "k": (1.0,),
                    "adiabatic_tau_grid": tuple(np.round(np.arange(10.0, 100.0001, 2.5), 10))},
    "robustness": {"epsilon": 20.0, "tau": 20.0, "n_periods": 40, "steps_per_period": 128,
                   "delta_grid": tuple(-d for d in reversed(_DELTAS)) + (0.0,) + _DELTAS},
    "scaling_order": {"epsilon": 20.0, "tau": 20.0,
                      "period_grid": tuple(float(np.round(v, 15)) for v in np.logspace(-3, -1, 9))},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    model: str = ""
    epsilon: float = 20.0
    tau: float = 20.0
    d: float = 0.0
    mode: str = "standalone"
    order: str = "first"
    k: tuple = (1.0,)
    n_periods: int = 0
    omega: float = 0.0
    tau_grid: tuple = ()
    adiabatic_tau_grid: tuple = ()
    n_periods_grid: tuple = ()
    delta_grid: tuple = ()
    period_grid: tuple = ()
    threshold: float = 1e-3
    norm_convention: str = "literal"
    lzm_strength_reference: str = "bracket"
    steps_per_period: int = 64
    outputs: int = 1001
    samples: int = 4001
    fit_min: float = 1e-4
    fit_max: float = 1e-2
    output_dir: str = ""
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; run `ecdlab list-experiments`")
        if not self.model:
            self.model = DEFAULT_MODEL.get(self.experiment, "lzm")
        self.validate()

    def validate(self):
        from .models import MODEL_NAMES

        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})")
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODEL_NAMES)}")
        if self.experiment in LZM_ONLY and self.model != "lzm":
            raise ConfigError(f"{self.experiment} is defined for the lzm model only")
        for name in ("epsilon", "tau", "threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.d < 0:
            raise ConfigError("d must be non-negative")
        if self.mode not in ("standalone", "ontop"):
            raise ConfigError("mode must be standalone or ontop")
        if self.order not in ("first", "third"):
            raise ConfigError("order must be first or third")
        if self.norm_convention not in ("literal", "sqrt"):
            raise ConfigError("norm_convention must be literal or sqrt")
        if self.lzm_strength_reference not in ("bracket", "half"):
            raise ConfigError("lzm_strength_reference must be bracket or half")
        if any(not v > 0 for v in self.k):
            raise ConfigError("every k must be positive")
        if self.n_periods < 0 or self.omega < 0:
            raise ConfigError("n_periods and omega must be non-negative")
        if self.steps_per_period < 32:
            raise ConfigError("steps_per_period must be at least 32")
        if self.outputs < 2 or self.samples < 1000:
            raise ConfigError("outputs must be >= 2 and samples >= 1000")
        for name in ("tau_grid", "adiabatic_tau_grid", "period_grid"):
            if any(not v > 0 for v in getattr(self, name)):
                raise ConfigError(f"{name} entries must be positive")
        if any(v < 1 for v in self.n_periods_grid):
            raise ConfigError("n_periods_grid entries must be >= 1")
        if any(abs(v) > 0.5 for v in self.delta_grid):
            raise ConfigError("delta offsets must lie in [-1/2, 1/2]")
        if not 0 < self.fit_min < self.fit_max:
            raise ConfigError("need 0 < fit_min < fit_max")

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        """Config with the family's canonical defaults, then ``overrides``."""
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}; run `ecdlab list-experiments`")
        values = dict(EXPERIMENT_DEFAULTS.get(experiment, {}))
        values.update(overrides)
        for key in _TUPLE_FIELDS & set(values):
            values[key] = tuple(float(v) for v in np.atleast_1d(values[key]))
        return cls(experiment=experiment, **values)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("extra")
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

    def digest(self) -> str:
        payload = {k: v for k, v in self.as_dict().items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


_GRID_FN = re.compile(r"^(linspace|logspace|arange)\(([^)]*)\)$")
_TUPLE_FIELDS = {"k", "tau_grid", "adiabatic_tau_grid", "n_periods_grid", "delta_grid", "period_grid"}
_INT_FIELDS = {"n_periods", "steps_per_period", "outputs", "samples", "schema_version"}
_STR_FIELDS = {"experiment", "model", "mode", "order", "norm_convention", "lzm_strength_reference", "output_dir"}


def parse_grid(text: str) -> tuple:
    text = text.strip().replace(" ", "")
    if not text:
        return ()
    m = _GRID_FN.match(text)
    if m:
        name, args = m.groups()
        try:
            vals = [float(a) for a in args.split(",")]
        except ValueError:
            raise ConfigError(f"bad grid arguments in {text!r}") from None
        if len(vals) != 3:
            raise ConfigError(f"{name} needs three arguments")
        a, b, c = vals
        if name == "arange":
            if c <= 0:
                raise ConfigError("arange step must be positive")
            n = int(np.floor((b - a) / c + 1e-9))
            grid = a + c * np.arange(n + 1)
            grid = grid[grid <= b + 1e-12 * max(1.0, abs(b))]
        else:
            if c < 1 or c != int(c):
                raise ConfigError(f"{name} count must be a positive integer")
            grid = np.linspace(a, b, int(c))
            if name == "logspace":
                grid = 10.0 ** grid
        return tuple(float(np.round(v, 12)) for v in grid)
    try:
        return tuple(float(v) for v in text.split(",") if v)
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


def _convert(key: str, raw: str):
    try:
        if key in _TUPLE_FIELDS:
            return parse_grid(raw)
        if key in _INT_FIELDS:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if key in _STR_FIELDS:
            return raw.strip()
        return float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def config_from_mapping(values: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)} - {"extra"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    if "experiment" not in values:
        raise ConfigError("missing required key: experiment")
    kwargs = {k: _convert(k, v) if isinstance(v, str) else v for k, v in values.items()}
    return ExperimentConfig.for_experiment(kwargs.pop("experiment"), **kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    sections = parser.sections()
    if sections != [SECTION]:
        raise ConfigError(f"config must contain exactly one [{SECTION}] section, found {sections}")
    return config_from_mapping(dict(parser[SECTION]))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = [f"[{SECTION}]"]
    for key, val in cfg.as_dict().items():
        if val is None:
            continue
        if isinstance(val, list):
            val = ", ".join(repr(float(v)) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
