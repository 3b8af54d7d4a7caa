"""Battery parameters, pulse description and exceptional-point classification.

All rates are angular (rad/time) except ``gamma`` which is a population
decay rate (1/time); ``Omega`` is the dimensionless pulse area.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParams

#: Relative band |g - gamma/4| <= EP_TOL * gamma classified as the exceptional point.
EP_TOL = 1e-9
#: Relative band in which closed forms are replaced by power series in (G t)^2.
SERIES_BAND = 1e-4
#: omega_b * tau above which a finite pulse no longer counts as short.
SHORT_PULSE_LIMIT = 0.1


class Regime(str, enum.Enum):
    UNDERDAMPED = "underdamped"
    EXCEPTIONAL_POINT = "exceptional_point"
    OVERDAMPED = "overdamped"


def _check_finite(name, value, lower, strict=False):
    if not isinstance(value, (int, float, np.integer, np.floating)) or isinstance(value, bool):
        raise InvalidParams(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParams(f"{name} must be finite, got {value}")
    if value < lower or (strict and value == lower):
        op = ">" if strict else ">="
        raise InvalidParams(f"{name} must be {op} {lower}, got {value}")
    return value


@dataclass(frozen=True)
class BatteryParams:
    """Physical inputs of one pulsed quadratic battery.

    Charger and holder share the level spacing ``omega_b``; ``g`` couples
    them, ``gamma`` drains the charger and ``Omega`` is the strength of the
    two-photon pulse applied to the charger at t = 0.
    """

    omega_b: float = 1.0
    g: float = 1.0
    gamma: float = 1.0
    Omega: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "omega_b", _check_finite("omega_b", self.omega_b, 0.0, strict=True))
        object.__setattr__(self, "g", _check_finite("g", self.g, 0.0))
        object.__setattr__(self, "gamma", _check_finite("gamma", self.gamma, 0.0))
        object.__setattr__(self, "Omega", _check_finite("Omega", self.Omega, 0.0))

    @property
    def g_ep(self) -> float:
        return self.gamma / 4.0

    def with_(self, **changes) -> "BatteryParams":
        return replace(self, **changes)

    def rescaled(self, lam: float) -> "BatteryParams":
        """Multiply every rate by ``lam`` (time measured in units 1/lam)."""
        lam = _check_finite("lam", lam, 0.0, strict=True)
        return replace(self, omega_b=self.omega_b * lam, g=self.g * lam, gamma=self.gamma * lam)


@dataclass(frozen=True)
class RegimeRates:
    """Regime tag with the renormalized rate.

    ``rate`` is G above the exceptional point, Gamma below it and 0 at it.
    """

    regime: Regime
    rate: float
    g_ep: float


def classify_regime(params: BatteryParams) -> RegimeRates:
    g, gamma = params.g, params.gamma
    g_ep = gamma / 4.0
    if gamma == 0.0:
        # lossless limit: G = g, including the static g = 0 case
        return RegimeRates(Regime.UNDERDAMPED, g, 0.0)
    if abs(g - g_ep) <= EP_TOL * gamma:
        return RegimeRates(Regime.EXCEPTIONAL_POINT, 0.0, g_ep)
    # factored difference of squares keeps full relative precision near g_ep
    sq = (g - g_ep) * (g + g_ep)
    if sq > 0:
        return RegimeRates(Regime.UNDERDAMPED, math.sqrt(sq), g_ep)
    return RegimeRates(Regime.OVERDAMPED, math.sqrt(-sq), g_ep)


def enhancement_factor(params: BatteryParams | float) -> float:
    """Hyperbolic enhancement sinh^2(Omega) of every stored energy."""
    Omega = params.Omega if isinstance(params, BatteryParams) else _check_finite("Omega", params, 0.0)
    return math.sinh(Omega) ** 2


def in_series_band(params: BatteryParams) -> bool:
    return params.gamma > 0 and abs(params.g - params.gamma / 4.0) <= SERIES_BAND * params.gamma


class PulseKind(str, enum.Enum):
    DELTA = "delta"
    FINITE_WIDTH = "finite_width"


class PulseShape(str, enum.Enum):
    GAUSSIAN = "gaussian"
    RECTANGULAR = "rectangular"


# Gaussian pulses are cut at +-GAUSS_HALF_WINDOW standard deviations.
GAUSS_HALF_WINDOW = 5.0


@dataclass(frozen=True)
class PulseSpec:
    """Temporal profile of the two-photon drive.

    Finite pulses have unit time integral. ``tau`` is the width of the
    rectangular pulse; a Gaussian pulse of the same ``tau`` has the same
    peak height 1/tau (standard deviation tau/sqrt(2 pi)).
    """

    kind: PulseKind = PulseKind.DELTA
    tau: float | None = None
    shape: PulseShape | None = None

    def __post_init__(self):
        kind = PulseKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is PulseKind.DELTA:
            if self.tau is not None:
                raise InvalidParams("a delta pulse carries no width")
            object.__setattr__(self, "shape", None)
            return
        if self.tau is None:
            raise InvalidParams("a finite-width pulse needs tau")
        object.__setattr__(self, "tau", _check_finite("tau", self.tau, 0.0, strict=True))
        object.__setattr__(self, "shape", PulseShape(self.shape or PulseShape.GAUSSIAN))

    @classmethod
    def delta(cls) -> "PulseSpec":
        return cls(PulseKind.DELTA)

    @classmethod
    def finite(cls, tau: float, shape: PulseShape | str = PulseShape.GAUSSIAN) -> "PulseSpec":
        return cls(PulseKind.FINITE_WIDTH, tau, PulseShape(shape))

    def is_short(self, omega_b: float) -> bool:
        return self.kind is PulseKind.DELTA or omega_b * self.tau <= SHORT_PULSE_LIMIT

    def check_validity(self, omega_b: float) -> bool:
        """Warn (never raise) when omega_b * tau is not small."""
        ok = self.is_short(omega_b)
        if not ok:
            warnings.warn(
                f"omega_b*tau = {omega_b * self.tau:.3g} exceeds {SHORT_PULSE_LIMIT}; "
                "delta-pulse analytics may not apply",
                stacklevel=2,
            )
        return ok

    @property
    def duration(self) -> float:
        """Length of the window [0, duration] outside which the drive vanishes."""
        if self.kind is PulseKind.DELTA:
            return 0.0
        if self.shape is PulseShape.RECTANGULAR:
            return self.tau
        return 2.0 * GAUSS_HALF_WINDOW * self._sigma

    @property
    def _sigma(self) -> float:
        return self.tau / math.sqrt(2.0 * math.pi)

    def envelope(self, t):
        """Drive profile f(t) on [0, duration], normalized to unit area."""
        if self.kind is PulseKind.DELTA:
            raise InvalidParams("a delta pulse has no sampled envelope")
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t <= self.duration)
        if self.shape is PulseShape.RECTANGULAR:
            return np.where(inside, 1.0 / self.tau, 0.0)
        sigma = self._sigma
        # renormalize for the mass cut off outside the window
        mass = math.erf(GAUSS_HALF_WINDOW / math.sqrt(2.0))
        x = (t - GAUSS_HALF_WINDOW * sigma) / sigma
        return np.where(inside, np.exp(-0.5 * x * x) / (math.sqrt(2.0 * math.pi) * sigma * mass), 0.0)
