"""Brute-force Fock-space oracle for the full master equation.

The two modes share one cutoff on the total excitation number,
n_a + n_b <= n_max. After the pulse the dynamics never raise that number,
so the truncation is exact for t > 0 and the only approximation is the
projection of the squeezed vacuum onto the retained levels; its discarded
tail is what ``truncation_weight`` certifies.

Density matrices use the global basis ordered by shell N = n_a + n_b and
then by n_a. Long runs never build the full matrix: they propagate only
the coherence chains that carry the requested moments (see ``_liouville``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.linalg import eigvalsh, expm
from scipy.special import gammaln

from . import _liouville as lv
from .analytic import EnergyRecord
from .errors import IntegrationFailure, InvalidCutoff, InvalidParams, InvalidTime, TruncationInsufficient
from .moments import SecondMoments, gaussian_ergotropy_from_moments
from .params import BatteryParams, PulseKind, PulseSpec, enhancement_factor

#: A run is certified when the two highest retained levels hold less than this.
CERTIFIED_WEIGHT = 1e-6
#: Default per-step bound on the trace drift, the integrator's error indicator.
DEFAULT_TOL = 1e-9
TRACE_TOL = 1e-8
HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = 1e-8
MIN_CUTOFF = 20


@dataclass(frozen=True)
class ModeOperators:
    a: np.ndarray
    adag: np.ndarray
    n: np.ndarray


def build_mode_operators(n_max: int) -> ModeOperators:
    """Single-mode ladder operators on levels 0..n_max."""
    if isinstance(n_max, bool) or not isinstance(n_max, (int, np.integer)) or n_max < 1:
        raise InvalidCutoff(f"n_max must be an integer >= 1, got {n_max!r}")
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    return ModeOperators(a, a.T.copy(), np.diag(np.arange(n_max + 1, dtype=float)))


class TwoModeBasis:
    """States |n_a, n_b> with n_a + n_b <= n_max, ordered by shell then n_a."""

    def __init__(self, n_max: int):
        if n_max < 1:
            raise InvalidCutoff(f"n_max must be >= 1, got {n_max}")
        self.n_max = n_max
        self.offsets = lv.shell_offsets(n_max)
        self.dim = int(self.offsets[n_max + 1])
        shells = np.repeat(np.arange(n_max + 1), np.arange(1, n_max + 2))
        self.n_a = np.arange(self.dim) - self.offsets[shells]
        self.n_b = shells - self.n_a

    def index(self, n_a: int, n_b: int) -> int:
        return int(self.offsets[n_a + n_b] + n_a)

    def _lowering(self, which):
        rows, cols, vals = [], [], []
        for col in range(self.dim):
            na, nb = self.n_a[col], self.n_b[col]
            if which == "a" and na > 0:
                rows.append(self.index(na - 1, nb))
                vals.append(math.sqrt(na))
                cols.append(col)
            elif which == "b" and nb > 0:
                rows.append(self.index(na, nb - 1))
                vals.append(math.sqrt(nb))
                cols.append(col)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    @property
    def a(self) -> sp.csr_matrix:
        if not hasattr(self, "_a"):
            self._a = self._lowering("a")
        return self._a

    @property
    def b(self) -> sp.csr_matrix:
        if not hasattr(self, "_b"):
            self._b = self._lowering("b")
        return self._b


class TruncatedState:
    """Two-mode state on the truncated space at time ``t``.

    Exactly one representation is stored: a pure ket, a full density
    matrix, or a complete set of coherence chains (absent chains are zero).
    The density matrix is materialized on first access.
    """

    def __init__(self, n_max: int, t: float = 0.0, *, rho=None, ket=None, chains=None):
        if sum(x is not None for x in (rho, ket, chains)) != 1:
            raise ValueError("give exactly one of rho, ket, chains")
        self.basis = TwoModeBasis(n_max)
        self.n_max = n_max
        self.t = float(t)
        self._rho = None if rho is None else np.asarray(rho, dtype=complex)
        self._ket = None if ket is None else np.asarray(ket, dtype=complex)
        self._chains = chains
        dim = self.basis.dim
        if self._rho is not None and self._rho.shape != (dim, dim):
            raise ValueError(f"rho must be {dim}x{dim}")
        if self._ket is not None and self._ket.shape != (dim,):
            raise ValueError(f"ket must have length {dim}")

    @property
    def n_max_a(self) -> int:
        return self.n_max

    @property
    def n_max_b(self) -> int:
        return self.n_max

    @property
    def ket(self) -> np.ndarray | None:
        """State vector for a pure state, None otherwise."""
        return self._ket

    @property
    def is_pure(self) -> bool:
        return self._ket is not None

    @property
    def rho(self) -> np.ndarray:
        if self._rho is None:
            if self._ket is not None:
                self._rho = np.outer(self._ket, self._ket.conj())
            else:
                self._rho = lv.chains_to_rho(self._chains, self.n_max)
        return self._rho

    def _shell_kets(self):
        off = self.basis.offsets
        return [lv.basis_change(N).T @ self._ket[off[N]:off[N + 1]] for N in range(self.n_max + 1)]

    def chain(self, k: int) -> np.ndarray:
        """Chain k (blocks rho_{N'+k, N'}) in the normal-mode basis."""
        if self._chains is not None:
            vec = self._chains.get(k)
            return np.zeros(lv.ChainLayout(k, self.n_max).size, complex) if vec is None else vec
        if self._ket is not None:
            return lv.ket_to_chain(self._shell_kets(), k, self.n_max)
        return lv.rho_to_chain(self._rho, k, self.n_max)

    def expect(self, op) -> complex:
        """Tr(op rho) for an operator on the global basis."""
        if self._ket is not None:
            return complex(np.vdot(self._ket, op @ self._ket))
        rho = self.rho
        if sp.issparse(op):
            return complex((op.multiply(rho.T)).sum())
        return complex(np.sum(op * rho.T))

    def shell_populations(self) -> np.ndarray:
        off = self.basis.offsets
        if self._ket is not None:
            p = np.abs(self._ket) ** 2
        elif self._rho is not None:
            p = np.real(np.diag(self._rho))
        else:
            return np.array([
                np.real(np.trace(block))
                for _, _, block in lv.ChainLayout(0, self.n_max).blocks(self.chain(0))
            ])
        return np.array([p[off[N]:off[N + 1]].sum() for N in range(self.n_max + 1)])

    def trace(self) -> float:
        return float(self.shell_populations().sum())

    def truncation_weight(self) -> float:
        """Population of the two highest retained shells."""
        return float(self.shell_populations()[-2:].sum())

    def hermiticity_error(self) -> float:
        if self._ket is not None or self._chains is not None:
            return 0.0  # Hermitian by construction
        return float(np.max(np.abs(self._rho - self._rho.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def check_invariants(self, trace_tol=TRACE_TOL, positivity=False) -> None:
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise IntegrationFailure(f"trace {tr!r} deviates from 1 by more than {trace_tol}")
        herm = self.hermiticity_error()
        if herm > HERMITICITY_TOL:
            raise IntegrationFailure(f"density matrix not Hermitian (max deviation {herm:.2e})")
        if positivity:
            lam = self.min_eigenvalue()
            if lam < -POSITIVITY_TOL:
                raise IntegrationFailure(f"density matrix has eigenvalue {lam:.2e}")


# -- the pulse ------------------------------------------------------------------


def squeezed_vacuum_amplitudes(Omega: float, n_max: int) -> np.ndarray:
    """Exact Fock amplitudes of exp(-i Omega (a+^2 + a^2)/2)|0> on levels 0..n_max (not renormalized)."""
    amp = np.zeros(n_max + 1, dtype=complex)
    if Omega == 0:
        amp[0] = 1.0
        return amp
    th = math.tanh(Omega)
    m = np.arange(n_max // 2 + 1)
    log_mag = 0.5 * gammaln(2 * m + 1) - gammaln(m + 1) - m * math.log(2.0) + m * math.log(th)
    amp[2 * m] = (-1j) ** (m % 4) * np.exp(log_mag) / math.sqrt(math.cosh(Omega))
    return amp


def squeezed_tail_weight(Omega: float, n_max: int) -> float:
    """Population the exact squeezed vacuum puts on levels n_max-1 and n_max."""
    amp = squeezed_vacuum_amplitudes(Omega, n_max)
    return float(np.sum(np.abs(amp[-2:]) ** 2))


def heuristic_cutoff(Omega: float) -> int:
    s, c = math.sinh(Omega), math.cosh(Omega)
    return max(MIN_CUTOFF, math.ceil(10 * s * s + 6 * s * c))


def default_cutoff(Omega: float, weight: float = 0.9 * CERTIFIED_WEIGHT, limit: int = 400) -> int:
    """Smallest cutoff >= 20 whose squeezed-vacuum tail weight is below ``weight``."""
    if not Omega >= 0:
        raise InvalidParams(f"Omega must be >= 0, got {Omega}")
    n = MIN_CUTOFF
    while squeezed_tail_weight(Omega, n) >= weight:
        n += 1
        if n > limit:
            raise TruncationInsufficient(
                f"Omega={Omega}: no cutoff up to {limit} certifies the squeezed vacuum",
                weight=squeezed_tail_weight(Omega, limit),
            )
    return n


def squeeze_generator_exp(Omega: float, n_max: int) -> np.ndarray:
    """exp(-i Omega (a+^2 + a^2)/2) of the single-mode generator truncated at n_max."""
    ops = build_mode_operators(n_max)
    return expm(-0.5j * Omega * (ops.adag @ ops.adag + ops.a @ ops.a))


def squeeze_vacuum(Omega: float, n_max: int | None = None, check: bool = True, pad: int | None = None) -> TruncatedState:
    """Charger squeezed from two-mode vacuum by the instantaneous pulse.

    The unitary is the matrix exponential of the generator truncated
    ``pad`` levels above ``n_max``, so that the reflection at the
    generator's own cutoff stays out of the retained levels; the result is
    projected onto n_a <= n_max and renormalized.
    """
    if not Omega >= 0 or not math.isfinite(Omega):
        raise InvalidParams(f"Omega must be finite and >= 0, got {Omega}")
    if n_max is None:
        n_max = default_cutoff(Omega)
    build_mode_operators(n_max)  # validates the cutoff
    if pad is None:
        pad = max(16, n_max // 2)
    column = squeeze_generator_exp(Omega, n_max + pad)[: n_max + 1, 0]
    column = column / np.linalg.norm(column)
    basis = TwoModeBasis(n_max)
    ket = np.zeros(basis.dim, dtype=complex)
    for n in range(n_max + 1):
        ket[basis.index(n, 0)] = column[n]
    state = TruncatedState(n_max, 0.0, ket=ket)
    if check:
        w = state.truncation_weight()
        if w > CERTIFIED_WEIGHT:
            raise TruncationInsufficient(
                f"Omega={Omega}, n_max={n_max}: top-level population {w:.3e} exceeds {CERTIFIED_WEIGHT}",
                weight=w,
            )
    return state


# -- reports ---------------------------------------------------------------------


@dataclass(frozen=True)
class OracleReport:
    t: float
    moments: SecondMoments
    first_moments: tuple
    energy: EnergyRecord
    truncation_weight: float
    trace: float = 1.0

    @property
    def certified(self) -> bool:
        return self.truncation_weight < CERTIFIED_WEIGHT

    @property
    def first_moment_size(self) -> float:
        return abs(self.first_moments[0]) + abs(self.first_moments[1])


def _energy(moments: SecondMoments, omega_b: float, enhancement, t: float, squeezing: bool) -> EnergyRecord:
    if squeezing:
        return gaussian_ergotropy_from_moments(moments, omega_b, enhancement, t)
    nan = float("nan")
    P = moments.n_b / enhancement if enhancement else nan
    return EnergyRecord(float(t), omega_b * moments.n_b, nan, nan, nan, P)


def extract_report(state: TruncatedState, omega_b: float, enhancement: float | None = None) -> OracleReport:
    """All first and second moments by trace formulas on the global basis."""
    a, b = state.basis.a, state.basis.b
    ad, bd = a.T.tocsr(), b.T.tocsr()
    m = SecondMoments(
        n_a=float(np.real(state.expect(ad @ a))),
        n_b=float(np.real(state.expect(bd @ b))),
        coh_ab=state.expect(ad @ b),
        sq_aa=state.expect(a @ a),
        sq_bb=state.expect(b @ b),
        sq_ab=state.expect(a @ b),
    )
    first = (state.expect(a), state.expect(b))
    energy = _energy(m, omega_b, enhancement, state.t, True)
    return OracleReport(state.t, m, first, energy, state.truncation_weight(), state.trace())


@dataclass
class _ChainObserver:
    n_max: int
    omega_b: float
    enhancement: float | None
    squeezing: bool
    slices: dict
    reports: list = field(default_factory=list)

    def __post_init__(self):
        self.w0 = lv.chain0_weights(self.n_max)
        self.w1 = lv.chain1_weights(self.n_max)
        self.w2 = lv.chain2_weights(self.n_max) if self.squeezing else None

    def __call__(self, t, y):
        c0 = y[self.slices[0]]
        nan = complex("nan")
        if 1 in self.slices:
            c1 = y[self.slices[1]]
            first = (complex(self.w1["a"] @ c1), complex(self.w1["b"] @ c1))
        else:
            first = (0j, 0j)  # chain 1 is identically zero for this state
        if self.squeezing and 2 in self.slices:
            c2 = y[self.slices[2]]
            sq = [complex(self.w2[key] @ c2) for key in ("aa", "bb", "ab")]
        elif self.squeezing:
            sq = [0j, 0j, 0j]
        else:
            sq = [nan, nan, nan]
        m = SecondMoments(
            n_a=float(np.real(self.w0["n_a"] @ c0)),
            n_b=float(np.real(self.w0["n_b"] @ c0)),
            coh_ab=complex(self.w0["coh_ab"] @ c0),
            sq_aa=sq[0], sq_bb=sq[1], sq_ab=sq[2],
        )
        energy = _energy(m, self.omega_b, self.enhancement, t, self.squeezing)
        self.reports.append(OracleReport(
            float(t), m, first, energy,
            float(np.real(self.w0["top"] @ c0)), float(np.real(self.w0["trace"] @ c0)),
        ))


def _check_times(times, t0):
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if t.ndim != 1 or not np.all(np.isfinite(t)):
        raise InvalidTime("times must be a finite 1-D sequence")
    if t.size and (t[0] < t0 or np.any(np.diff(t) < 0)):
        raise InvalidTime(f"times must be ascending and >= {t0}")
    return t


def evolve_reports(state: TruncatedState, params: BatteryParams, times, tol: float = DEFAULT_TOL,
                   squeezing: bool = True) -> list[OracleReport]:
    """Reports at each of ``times`` for the undriven evolution of ``state``.

    Only the chains holding populations, first moments and (optionally)
    the squeezing moments are propagated. Chains that start exactly at
    zero stay zero and are skipped.
    """
    times = _check_times(times, state.t)
    wanted = (0, 1, 2) if squeezing else (0, 1)
    initial = {k: state.chain(k) for k in wanted if k <= state.n_max}
    ks = [k for k in wanted if k in initial and (k == 0 or np.any(initial[k]))]
    prop = lv.ChainPropagator(ks, state.n_max, params.omega_b, params.g, params.gamma, tol=tol)
    y0 = np.concatenate([initial[k] for k in ks])
    observer = _ChainObserver(state.n_max, params.omega_b, enhancement_factor(params) or None,
                              squeezing, prop.slices)
    prop.propagate(y0, state.t, times, observer)
    return observer.reports


def oracle_trace(params: BatteryParams, times, n_max: int | None = None, tol: float = DEFAULT_TOL,
                 squeezing: bool = True, check: bool = True) -> list[OracleReport]:
    """Delta pulse at t = 0 on vacuum, then reports at ``times``."""
    state = squeeze_vacuum(params.Omega, n_max, check=check)
    return evolve_reports(state, params, times, tol, squeezing)


def integrate(state: TruncatedState, params: BatteryParams, t_final: float, tol: float = DEFAULT_TOL,
              check: bool = True) -> TruncatedState:
    """Full density matrix at ``t_final`` (every nonzero chain is propagated)."""
    if not math.isfinite(t_final) or t_final < state.t:
        raise InvalidTime(f"t_final must be >= state time {state.t}, got {t_final}")
    initial = {k: state.chain(k) for k in range(state.n_max + 1)}
    ks = [k for k, v in initial.items() if k == 0 or np.any(v)]
    prop = lv.ChainPropagator(ks, state.n_max, params.omega_b, params.g, params.gamma, tol=tol)
    y = prop.propagate(np.concatenate([initial[k] for k in ks]), state.t, [t_final])
    out = TruncatedState(state.n_max, t_final, chains=prop.split(y))
    if check:
        w = out.truncation_weight()
        if w > CERTIFIED_WEIGHT:
            raise TruncationInsufficient(f"truncation weight {w:.3e} exceeds {CERTIFIED_WEIGHT}", weight=w)
    return out


# -- finite-width pulse -----------------------------------------------------------


def _pulse_rhs(basis: TwoModeBasis, params: BatteryParams, pulse: PulseSpec):
    a, b = basis.a, basis.b
    ad, bd = a.T.tocsr(), b.T.tocsr()
    w, g, gamma = params.omega_b, params.g, params.gamma
    h_eff = (w * (ad @ a + bd @ b) + g * (ad @ b + bd @ a) - 0.5j * gamma * (ad @ a)).tocsr()
    drive = (0.5 * params.Omega * (ad @ ad + a @ a)).tocsr()
    dim = basis.dim

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        z = h_eff @ rho
        f = float(pulse.envelope(t))
        if f:
            z = z + f * (drive @ rho)
        z *= -1j
        ar = a @ rho
        out = z + z.conj().T + gamma * (a @ ar.conj().T)
        return out.ravel()

    return rhs


def finite_width_pulse_run(params: BatteryParams, pulse: PulseSpec, t_final: float | None = None,
                           times=None, n_max: int | None = None, tol: float = DEFAULT_TOL,
                           rtol: float = 1e-8, atol: float = 1e-10, check: bool = True) -> list[OracleReport]:
    """Drive two-mode vacuum with a finite pulse, then evolve undriven.

    The drive acts on [0, pulse.duration]; the first report is taken at
    the end of that window and the rest at ``times`` (absolute clock) or
    at ``t_final``.
    """
    if pulse.kind is not PulseKind.FINITE_WIDTH:
        raise InvalidParams("finite_width_pulse_run needs a finite-width pulse")
    pulse.check_validity(params.omega_b)
    if n_max is None:
        # free rotation during the drive shapes the state differently from the ideal squeeze
        n_max = default_cutoff(params.Omega, weight=0.1 * CERTIFIED_WEIGHT)
    basis = TwoModeBasis(n_max)
    rho0 = np.zeros((basis.dim, basis.dim), dtype=complex)
    rho0[0, 0] = 1.0
    t_end = pulse.duration
    if params.Omega == 0:
        rho_end = rho0  # nothing drives the vacuum away
    else:
        sol = solve_ivp(_pulse_rhs(basis, params, pulse), (0.0, t_end), rho0.ravel(),
                        method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegrationFailure(f"pulse integration failed: {sol.message}")
        rho_end = sol.y[:, -1].reshape(basis.dim, basis.dim)
        rho_end = 0.5 * (rho_end + rho_end.conj().T)
    state = TruncatedState(n_max, t_end, rho=rho_end)
    if check:
        wgt = state.truncation_weight()
        if wgt > CERTIFIED_WEIGHT:
            raise TruncationInsufficient(f"post-pulse truncation weight {wgt:.3e} exceeds {CERTIFIED_WEIGHT}",
                                         weight=wgt)
    first = extract_report(state, params.omega_b, enhancement_factor(params) or None)
    if times is None:
        times = [] if t_final is None else [t_final]
    times = [t for t in _check_times(times, t_end) if t > t_end]
    if not times:
        return [first]
    return [first] + evolve_reports(state, params, times, tol)
