"""Pulsed quadratic quantum battery: closed-form energetics, moment dynamics and a Fock-space oracle."""

from .analytic import (EnergyRecord, Limit, OptimalPoint, asymptotic_energy_fraction, asymptotic_optimal_energy,
                       asymptotic_optimal_time, ergotropy, excitation_fraction_P, mode_amplitudes,
                       optimal_energy, optimal_energy_fraction, optimal_time, passive_discriminant_D,
                       population_charger, population_holder, stored_energy)
from .errors import (ConfigInvalid, HyperbatError, IntegrationFailure, InvalidCutoff, InvalidParams, InvalidTime,
                     NoCharging, TruncationInsufficient, UnphysicalMoments)
from .fock import (OracleReport, TruncatedState, build_mode_operators, default_cutoff, extract_report,
                   finite_width_pulse_run, integrate, oracle_trace, squeeze_vacuum)
from .moments import (DynamicalMatrix, SecondMoments, build_population_matrix, derive_squeeze_block,
                      gaussian_ergotropy_from_moments, post_pulse_moments, propagate_moments)
from .params import (BatteryParams, PulseKind, PulseShape, PulseSpec, Regime, RegimeRates, classify_regime,
                     enhancement_factor)

__version__ = "0.1.0"
