"""Closed second-moment dynamics after the pulse.

For t > 0 the Heisenberg equations generated by the master equation close
on two independent linear blocks, both written as i d/dt v = H v:

* populations  v = (<a+a>, <b+b>, <a+b>, <b+a>), frame-free (no omega_b);
* squeezing    v = (<aa>, <bb>, <ab>), lab frame, rotating at 2 omega_b.

The delta pulse is folded into the initial condition (squeezed vacuum in
the charger), so only undriven evolution is integrated here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .analytic import EnergyRecord
from .errors import IntegrationFailure, InvalidTime, UnphysicalMoments
from .params import BatteryParams, Regime, classify_regime

#: D below 1 - PHYSICAL_TOL is rejected as unphysical.
PHYSICAL_TOL = 1e-6
#: Negative ergotropy down to -ERGOTROPY_CLAMP * omega_b is rounding and clamps to 0.
ERGOTROPY_CLAMP = 1e-10


@dataclass(frozen=True)
class SecondMoments:
    """Second moments of a two-mode Gaussian state with zero means.

    Conjugate partners (<b+a>, <a+a+>, ...) are implied, not stored.
    """

    n_a: float = 0.0
    n_b: float = 0.0
    coh_ab: complex = 0j
    sq_aa: complex = 0j
    sq_bb: complex = 0j
    sq_ab: complex = 0j

    def population_vector(self) -> np.ndarray:
        return np.array([self.n_a, self.n_b, self.coh_ab, np.conj(self.coh_ab)], dtype=complex)

    def squeeze_vector(self) -> np.ndarray:
        return np.array([self.sq_aa, self.sq_bb, self.sq_ab], dtype=complex)

    def expanded(self) -> np.ndarray:
        """All ten moments: <a+a>, <b+b>, <a+b>, <b+a>, <aa>, <bb>, <ab> and the conjugates of the last three."""
        sq = self.squeeze_vector()
        return np.concatenate([self.population_vector(), sq, np.conj(sq)])

    def scaled(self, factor: float) -> "SecondMoments":
        return SecondMoments(
            self.n_a * factor, self.n_b * factor, self.coh_ab * factor,
            self.sq_aa * factor, self.sq_bb * factor, self.sq_ab * factor,
        )

    @classmethod
    def from_vectors(cls, pop, sq) -> "SecondMoments":
        return cls(float(np.real(pop[0])), float(np.real(pop[1])), complex(pop[2]),
                   complex(sq[0]), complex(sq[1]), complex(sq[2]))

    @property
    def holder_discriminant(self) -> float:
        return (1.0 + 2.0 * self.n_b) ** 2 - 4.0 * abs(self.sq_bb) ** 2


@dataclass(frozen=True)
class DynamicalMatrix:
    """Generators of both moment blocks for one parameter set."""

    entries: np.ndarray
    extended_entries: np.ndarray
    regime: Regime


def _population_block(params: BatteryParams) -> np.ndarray:
    g, gamma = params.g, params.gamma
    return np.array(
        [
            [-1j * gamma, 0, g, -g],
            [0, 0, -g, g],
            [g, -g, -0.5j * gamma, 0],
            [-g, g, 0, -0.5j * gamma],
        ],
        dtype=complex,
    )


def derive_squeeze_block(params: BatteryParams) -> np.ndarray:
    """Generator H of i d/dt (<aa>, <bb>, <ab>) = H (<aa>, <bb>, <ab>).

    From the adjoint master equation: i[H, aa] gives -2i w aa - 2i g ab, the
    dissipator gives -gamma aa; for ab the dissipator gives -gamma/2 ab and
    the coupling mixes in aa and bb with rate g each.
    """
    w, g, gamma = params.omega_b, params.g, params.gamma
    return np.array(
        [
            [2 * w - 1j * gamma, 0, 2 * g],
            [0, 2 * w, 2 * g],
            [g, g, 2 * w - 0.5j * gamma],
        ],
        dtype=complex,
    )


def build_population_matrix(params: BatteryParams) -> DynamicalMatrix:
    return DynamicalMatrix(_population_block(params), derive_squeeze_block(params),
                           classify_regime(params).regime)


def post_pulse_moments(Omega: float) -> SecondMoments:
    """Moments right after the delta pulse acts on two-mode vacuum.

    The pulse is the unitary exp(-i Omega (a+^2 + a^2)/2), which maps
    a -> a cosh(Omega) - i a+ sinh(Omega).
    """
    if not Omega >= 0:
        raise ValueError(f"Omega must be >= 0, got {Omega}")
    s, c = math.sinh(Omega), math.cosh(Omega)
    return SecondMoments(n_a=s * s, sq_aa=-1j * s * c)


def _check_grid(t_grid) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.ndim != 1 or not np.all(np.isfinite(t)):
        raise InvalidTime("t_grid must be a finite 1-D sequence")
    if t.size and (t[0] < 0 or np.any(np.diff(t) < 0)):
        raise InvalidTime("t_grid must be ascending and nonnegative")
    return t


def propagate_moment_vectors(initial: SecondMoments, params: BatteryParams, t_grid):
    """Raw complex trajectories, shapes (len(t_grid), 4) and (len(t_grid), 3)."""
    t = _check_grid(t_grid)
    dyn = build_population_matrix(params)
    pop = initial.population_vector()
    sq = initial.squeeze_vector()
    pops = np.empty((t.size, 4), dtype=complex)
    sqs = np.empty((t.size, 3), dtype=complex)
    cache = {}
    prev = 0.0
    for i, ti in enumerate(t):
        dt = ti - prev
        if dt > 0:
            if dt not in cache:
                cache[dt] = (expm(-1j * dt * dyn.entries), expm(-1j * dt * dyn.extended_entries))
            up, us = cache[dt]
            pop = up @ pop
            sq = us @ sq
        pops[i], sqs[i] = pop, sq
        prev = ti
    if not (np.all(np.isfinite(pops)) and np.all(np.isfinite(sqs))):
        raise IntegrationFailure("moment propagation produced non-finite values")
    return pops, sqs


def propagate_moments(initial: SecondMoments, params: BatteryParams, t_grid) -> list[SecondMoments]:
    pops, sqs = propagate_moment_vectors(initial, params, t_grid)
    return [SecondMoments.from_vectors(p, s) for p, s in zip(pops, sqs)]


def gaussian_ergotropy_from_moments(m: SecondMoments, omega_b: float, enhancement: float | None = None,
                                    t: float = 0.0) -> EnergyRecord:
    """Ergotropy of the holder from its second moments.

    ``enhancement`` (sinh^2 Omega) is only needed to report the excitation
    fraction P; it is NaN otherwise.
    """
    D = m.holder_discriminant
    if D < 1.0 - PHYSICAL_TOL:
        raise UnphysicalMoments(f"holder discriminant D = {D} < 1")
    E = omega_b * m.n_b
    E_beta = 0.5 * omega_b * (math.sqrt(max(D, 1.0)) - 1.0)
    erg = E - E_beta
    if erg < 0.0:
        if erg < -ERGOTROPY_CLAMP * omega_b:
            raise UnphysicalMoments(f"negative ergotropy {erg}")
        erg = 0.0
    if enhancement:
        P = m.n_b / enhancement
    else:
        P = float("nan")
    return EnergyRecord(float(t), E, E_beta, erg, D, P)
