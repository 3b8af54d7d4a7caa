"""Closed-form energetics of the pulsed quadratic battery.

Every time-dependent quantity here follows from two real amplitudes,

    alpha(t) = e^{-gamma t/4} [cos(G t) - (gamma/4) sin(G t)/G]
    beta(t)  = -i g e^{-gamma t/4} sin(G t)/G

which describe where a single charger excitation created at t = 0 has
gone by time t. Below the exceptional point the trigonometric functions
continue to hyperbolic ones with G -> i Gamma; at it, sin(G t)/G -> t.
Functions accept a scalar or an array of times.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, InvalidTime, NoCharging
from .params import BatteryParams, Regime, classify_regime, enhancement_factor, in_series_band

# Series in u = (G t)^2 are used only while |u| stays below this.
_SERIES_MAX_U = 1.0
_SERIES_TERMS = 24


class Limit(str, enum.Enum):
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class EnergyRecord:
    """Stored energy, passive energy and ergotropy at time(s) ``t``.

    Fields hold floats for a single instant or equal-length arrays for a trace.
    """

    t: float | np.ndarray
    E: float | np.ndarray
    E_beta: float | np.ndarray
    ergotropy: float | np.ndarray
    D: float | np.ndarray
    P: float | np.ndarray


@dataclass(frozen=True)
class OptimalPoint:
    t_E: float
    E_max: float
    regime: Regime


def _as_times(t):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidTime("times must be finite")
    if np.any(arr < 0):
        raise InvalidTime(f"times must be >= 0, got min {arr.min()}")
    return arr, arr.ndim == 0


def _out(x, scalar):
    return float(x) if scalar else x


def _even_odd_series(u):
    """Return (sum (-u)^k/(2k)!, sum (-u)^k/(2k+1)!) by Horner's rule."""
    c = np.ones_like(u)
    s = np.ones_like(u)
    for k in range(_SERIES_TERMS, 0, -1):
        c = 1.0 - u * c / ((2 * k - 1) * (2 * k))
        s = 1.0 - u * s / ((2 * k) * (2 * k + 1))
    return c, s


def _damped_cos_sinc(params: BatteryParams, t: np.ndarray):
    """Return e^{-gamma t/4} * (cos(Gt), sin(Gt)/G) continued to every regime."""
    gamma, g = params.gamma, params.g
    env = np.exp(-0.25 * gamma * t)
    rates = classify_regime(params)
    if rates.regime is Regime.EXCEPTIONAL_POINT:
        return env, t * env
    big = None
    if rates.regime is Regime.UNDERDAMPED:
        G = rates.rate
        if G == 0.0:
            c, s = np.ones_like(t), t.copy()
        else:
            c, s = np.cos(G * t), np.sin(G * t) / G
    else:
        Gam = rates.rate
        x = Gam * t
        big = x > 300.0
        xs = np.where(big, 0.0, x)
        c = np.cosh(xs)
        s = np.sinh(xs) / Gam
    if in_series_band(params):
        u = (g - 0.25 * gamma) * (g + 0.25 * gamma) * t * t
        near = np.abs(u) <= _SERIES_MAX_U
        if np.any(near):
            cs, ss = _even_odd_series(u[near])
            c = np.array(c, dtype=float)
            s = np.array(s, dtype=float)
            c[near] = cs
            s[near] = t[near] * ss
    ce, se = c * env, s * env
    if big is not None and np.any(big):
        # cosh and the envelope overflow/underflow separately long before
        # their product does, so fold both into a single exponent
        tail = 0.5 * np.exp((Gam - 0.25 * gamma) * t[big])
        ce = np.array(ce, dtype=float)
        se = np.array(se, dtype=float)
        ce[big] = tail
        se[big] = tail / Gam
    return ce, se


def mode_amplitudes(params: BatteryParams, t):
    """Charger and holder amplitudes (alpha, beta) of one pulse-created excitation."""
    t, scalar = _as_times(t)
    ce, se = _damped_cos_sinc(params, t)
    alpha = ce - 0.25 * params.gamma * se
    beta = -1j * params.g * se
    if scalar:
        return float(alpha), complex(beta)
    return alpha, beta


def excitation_fraction_P(params: BatteryParams, t):
    """Fraction of the pulse-injected excitations sitting in the holder."""
    t, scalar = _as_times(t)
    _, se = _damped_cos_sinc(params, t)
    return _out((params.g * se) ** 2, scalar)


def population_charger(params: BatteryParams, t):
    t, scalar = _as_times(t)
    ce, se = _damped_cos_sinc(params, t)
    alpha = ce - 0.25 * params.gamma * se
    return _out(enhancement_factor(params) * alpha * alpha, scalar)


def population_holder(params: BatteryParams, t):
    t, scalar = _as_times(t)
    _, se = _damped_cos_sinc(params, t)
    return _out(enhancement_factor(params) * (params.g * se) ** 2, scalar)


def stored_energy(params: BatteryParams, t):
    return params.omega_b * population_holder(params, t)


def passive_discriminant_D(params: BatteryParams, t):
    P = excitation_fraction_P(params, t)
    return 1.0 + 4.0 * enhancement_factor(params) * P * (1.0 - P)


def ergotropy(params: BatteryParams, t) -> EnergyRecord:
    tt, scalar = _as_times(t)
    C = enhancement_factor(params)
    P = excitation_fraction_P(params, tt)
    D = 1.0 + 4.0 * C * P * (1.0 - P)
    root = np.sqrt(D)
    # sqrt(D) - 1 rewritten without cancellation
    excess = 4.0 * C * P * (1.0 - P) / (root + 1.0)
    E = params.omega_b * C * P
    E_beta = 0.5 * params.omega_b * excess
    erg = params.omega_b * C * P * (excess + 2.0 * P) / (root + 1.0)
    if scalar:
        return EnergyRecord(float(tt), float(E), float(E_beta), float(erg), float(D), float(P))
    return EnergyRecord(tt, E, E_beta, erg, D, P)


def _require_charging(params: BatteryParams):
    if params.g == 0.0:
        raise NoCharging("g = 0: the holder never charges")


def _series_tE(params: BatteryParams) -> float:
    gamma, g = params.gamma, params.g
    w = 16.0 * (g - 0.25 * gamma) * (g + 0.25 * gamma) / (gamma * gamma)
    # arctan(sqrt w)/sqrt w, valid for either sign of w
    total = 1.0 / (2 * _SERIES_TERMS + 1)
    for k in range(_SERIES_TERMS - 1, -1, -1):
        total = 1.0 / (2 * k + 1) - w * total
    return 4.0 / gamma * total


def optimal_time(params: BatteryParams) -> float:
    """First (and global) maximum of the stored energy."""
    _require_charging(params)
    gamma = params.gamma
    if gamma == 0.0:
        return math.pi / (2.0 * params.g)
    rates = classify_regime(params)
    if rates.regime is Regime.EXCEPTIONAL_POINT:
        return 1.0 / rates.g_ep
    if in_series_band(params):
        return _series_tE(params)
    if rates.regime is Regime.UNDERDAMPED:
        G = rates.rate
        return math.atan(4.0 * G / gamma) / G
    Gam = rates.rate
    x = 4.0 * Gam / gamma
    if not x < 1.0:
        raise InvalidParams(f"4*Gamma/gamma = {x} >= 1; regime misclassified")
    return math.atanh(x) / Gam


def optimal_energy_fraction(params: BatteryParams) -> float:
    """E_max / (omega_b sinh^2 Omega), which does not depend on Omega or omega_b."""
    _require_charging(params)
    gamma = params.gamma
    rates = classify_regime(params)
    if gamma == 0.0:
        return 1.0
    if rates.regime is Regime.EXCEPTIONAL_POINT:
        return math.exp(-2.0)
    if in_series_band(params):
        return math.exp(-0.5 * gamma * optimal_time(params))
    if rates.regime is Regime.UNDERDAMPED:
        G = rates.rate
        arccot = math.atan(4.0 * G / gamma)  # arccot(gamma/4G) for positive argument
        return math.exp(-gamma / (2.0 * G) * arccot)
    Gam = rates.rate
    x = gamma / (4.0 * Gam)
    arccoth = 0.5 * math.log((x + 1.0) / (x - 1.0))
    return math.exp(-gamma / (2.0 * Gam) * arccoth)


def optimal_energy(params: BatteryParams) -> OptimalPoint:
    t_E = optimal_time(params)
    scale = params.omega_b * enhancement_factor(params)
    return OptimalPoint(t_E, scale * optimal_energy_fraction(params), classify_regime(params).regime)


def asymptotic_optimal_time(params: BatteryParams, limit: Limit | str) -> float:
    _require_charging(params)
    limit = Limit(limit)
    g, gamma = params.g, params.gamma
    if limit is Limit.WEAK:
        if gamma == 0.0:
            raise InvalidParams("the weak-coupling asymptote needs gamma > 0")
        return 4.0 / gamma * math.log(gamma / (2.0 * g))
    return math.pi / (2.0 * g) - gamma / (4.0 * g * g)


def asymptotic_energy_fraction(params: BatteryParams, limit: Limit | str) -> float:
    _require_charging(params)
    limit = Limit(limit)
    g, gamma = params.g, params.gamma
    if limit is Limit.WEAK:
        if gamma == 0.0:
            raise InvalidParams("the weak-coupling asymptote needs gamma > 0")
        return (2.0 * g / gamma) ** 2
    return 1.0 - math.pi * gamma / (4.0 * g)


def asymptotic_optimal_energy(params: BatteryParams, limit: Limit | str) -> float:
    return params.omega_b * enhancement_factor(params) * asymptotic_energy_fraction(params, limit)
