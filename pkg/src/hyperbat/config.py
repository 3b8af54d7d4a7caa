"""Run configuration for the command-line harness.

A RunConfig is plain data: it round-trips through JSON and is the only
thing a command needs, so identical configs give identical output.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigInvalid, InvalidParams
from .params import BatteryParams, PulseKind, PulseSpec

SCHEMA = "hyperbat-v1"

CERT_G_RATIOS = (0.1, 0.25, 0.5, 1.0, 2.0, 5.0)
CERT_OMEGAS = (0.5, 1.0, 1.5)


class Mode(str, enum.Enum):
    TRACE = "trace"
    SWEEP_TE = "sweep_tE"
    SWEEP_EMAX = "sweep_Emax"
    VERIFY = "verify"
    FIG2A = "fig2a"
    FIG2B = "fig2b"
    FIG2C = "fig2c"


@dataclass(frozen=True)
class GridSpec:
    """``count`` points from ``start`` to ``stop``, linear or logarithmic."""

    start: float
    stop: float
    count: int
    log: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise ConfigInvalid("grid endpoints must be finite")
        if isinstance(self.count, bool) or int(self.count) != self.count or self.count < 2:
            raise ConfigInvalid(f"grid count must be an integer >= 2, got {self.count}")
        object.__setattr__(self, "count", int(self.count))
        if self.log and (self.start <= 0 or self.stop <= 0):
            raise ConfigInvalid("log grids need positive endpoints")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise ConfigInvalid(f"grid must be start:stop:count[:log], got {text!r}")
        log = False
        if len(parts) == 4:
            if parts[3] not in ("log", "lin", "linear"):
                raise ConfigInvalid(f"grid spacing must be 'log' or 'lin', got {parts[3]!r}")
            log = parts[3] == "log"
        try:
            start, stop = float(parts[0]), float(parts[1])
            count = int(parts[2])
        except ValueError as exc:
            raise ConfigInvalid(f"bad grid {text!r}: {exc}") from None
        return cls(start, stop, count, log)

    def values(self):
        import numpy as np

        if self.log:
            return np.logspace(math.log10(self.start), math.log10(self.stop), self.count)
        return np.linspace(self.start, self.stop, self.count)

    def __str__(self):
        return f"{self.start:g}:{self.stop:g}:{self.count}" + (":log" if self.log else "")


DEFAULT_TIME_GRID = GridSpec(0.0, 5.0, 101)
DEFAULT_VERIFY_GRID = GridSpec(0.0, 5.0, 51)
DEFAULT_COUPLING_GRID = GridSpec(0.01, 100.0, 81, log=True)


@dataclass(frozen=True)
class RunConfig:
    params: BatteryParams = field(default_factory=lambda: BatteryParams(omega_b=1.0, g=2.0, gamma=1.0, Omega=1.0))
    pulse: PulseSpec = field(default_factory=PulseSpec.delta)
    grid: GridSpec | None = None
    mode: Mode = Mode.TRACE
    oracle: bool = False
    n_max: int | None = None
    tol: float = 1e-9
    out: str | None = None
    format: str = "csv"
    jobs: int = 1
    g_values: tuple | None = None
    omega_values: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.format not in ("csv", "json"):
            raise ConfigInvalid(f"format must be csv or json, got {self.format!r}")
        if self.n_max is not None and (isinstance(self.n_max, bool) or int(self.n_max) != self.n_max or self.n_max < 1):
            raise ConfigInvalid(f"n_max must be a positive integer, got {self.n_max}")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ConfigInvalid(f"tol must be positive, got {self.tol}")
        if isinstance(self.jobs, bool) or int(self.jobs) != self.jobs or self.jobs < 1:
            raise ConfigInvalid(f"jobs must be a positive integer, got {self.jobs}")
        for name in ("g_values", "omega_values"):
            vals = getattr(self, name)
            if vals is not None:
                vals = tuple(float(v) for v in vals)
                if not vals or any(not (math.isfinite(v) and v >= 0) for v in vals):
                    raise ConfigInvalid(f"{name} must be nonnegative finite numbers")
                object.__setattr__(self, name, vals)

    @property
    def resolved_grid(self) -> GridSpec:
        if self.grid is not None:
            return self.grid
        if self.mode in (Mode.SWEEP_TE, Mode.SWEEP_EMAX, Mode.FIG2B, Mode.FIG2C):
            return DEFAULT_COUPLING_GRID
        if self.mode is Mode.VERIFY:
            return DEFAULT_VERIFY_GRID
        return DEFAULT_TIME_GRID

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        pulse = {"kind": self.pulse.kind.value, "tau": self.pulse.tau,
                 "shape": self.pulse.shape.value if self.pulse.shape else None}
        return {
            "schema": SCHEMA,
            "params": asdict(self.params),
            "pulse": pulse,
            "grid": None if self.grid is None else asdict(self.grid),
            "mode": self.mode.value,
            "oracle": self.oracle,
            "n_max": self.n_max,
            "tol": self.tol,
            "out": self.out,
            "format": self.format,
            "jobs": self.jobs,
            "g_values": None if self.g_values is None else list(self.g_values),
            "omega_values": None if self.omega_values is None else list(self.omega_values),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigInvalid("config must be a JSON object")
        schema = data.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigInvalid(f"unsupported config schema {schema!r}")
        known = set(cls.__dataclass_fields__) | {"schema"}
        unknown = set(data) - known
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {sorted(unknown)}")
        kwargs = {}
        try:
            if "params" in data:
                kwargs["params"] = BatteryParams(**data["params"])
            if data.get("pulse") is not None:
                p = data["pulse"]
                kwargs["pulse"] = PulseSpec(PulseKind(p.get("kind", "delta")), p.get("tau"), p.get("shape"))
            if data.get("grid") is not None:
                kwargs["grid"] = GridSpec(**data["grid"])
        except (TypeError, ValueError, InvalidParams) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(str(exc)) from None
        for key in ("mode", "oracle", "n_max", "tol", "out", "format", "jobs", "g_values", "omega_values"):
            if key in data:
                kwargs[key] = data[key]
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
