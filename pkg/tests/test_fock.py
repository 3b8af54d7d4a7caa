import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from hyperbat import _liouville as lv
from hyperbat.analytic import excitation_fraction_P, optimal_time
from hyperbat.errors import IntegrationFailure, InvalidCutoff, InvalidParams, InvalidTime, TruncationInsufficient
from hyperbat.fock import (CERTIFIED_WEIGHT, TruncatedState, TwoModeBasis, build_mode_operators, default_cutoff,
                           evolve_reports, extract_report, finite_width_pulse_run, heuristic_cutoff, integrate,
                           oracle_trace, squeeze_generator_exp, squeeze_vacuum, squeezed_tail_weight,
                           squeezed_vacuum_amplitudes)
from hyperbat.moments import post_pulse_moments, propagate_moment_vectors
from hyperbat.params import BatteryParams, PulseSpec

from reference import ProductModel, random_low_shell_state


def to_product(state_rho, basis, model):
    idx = np.array([model.index(na, nb) for na, nb in zip(basis.n_a, basis.n_b)])
    out = np.zeros((model.dim, model.dim), dtype=complex)
    out[np.ix_(idx, idx)] = state_rho
    return out, idx


def from_product(rho, basis, model):
    idx = np.array([model.index(na, nb) for na, nb in zip(basis.n_a, basis.n_b)])
    return rho[np.ix_(idx, idx)]


# -- operators and basis ------------------------------------------------------------


def test_mode_operators_small():
    ops = build_mode_operators(2)
    np.testing.assert_array_equal(ops.a, [[0, 1, 0], [0, 0, math.sqrt(2)], [0, 0, 0]])
    np.testing.assert_array_equal(ops.adag, ops.a.T)
    np.testing.assert_array_equal(np.diag(ops.n), [0, 1, 2])
    comm = ops.a @ ops.adag - ops.adag @ ops.a
    np.testing.assert_allclose(np.diag(comm), [1, 1, -2])


@pytest.mark.parametrize("bad", [0, -3, 2.5, True, "4"])
def test_mode_operators_reject_bad_cutoffs(bad):
    with pytest.raises(InvalidCutoff):
        build_mode_operators(bad)


@pytest.mark.parametrize("n_max", [1, 4, 9])
def test_two_mode_basis_matches_product_operators(n_max):
    basis = TwoModeBasis(n_max)
    assert basis.dim == (n_max + 1) * (n_max + 2) // 2
    assert [basis.index(na, nb) for na, nb in zip(basis.n_a, basis.n_b)] == list(range(basis.dim))
    model = ProductModel(n_max, 1.0, 0.0, 0.0)
    np.testing.assert_allclose(basis.a.toarray(), from_product(model.a, basis, model))
    np.testing.assert_allclose(basis.b.toarray(), from_product(model.b, basis, model))


@pytest.mark.parametrize("N", range(0, 14))
def test_normal_mode_basis_change_is_orthogonal(N):
    W = lv.basis_change(N)
    np.testing.assert_allclose(W @ W.T, np.eye(N + 1), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=7), st.integers(min_value=0, max_value=2 ** 31))
def test_chain_roundtrip(n_max, seed):
    model = ProductModel(n_max, 1.0, 0.0, 0.0)
    basis = TwoModeBasis(n_max)
    rho = from_product(random_low_shell_state(model, n_max, seed), basis, model)
    state = TruncatedState(n_max, rho=rho)
    chains = {k: state.chain(k) for k in range(n_max + 1)}
    np.testing.assert_allclose(TruncatedState(n_max, chains=chains).rho, rho, atol=1e-14)


# -- propagation against the dense reference -------------------------------------------


@pytest.mark.parametrize("omega_b,g,gamma", [(1.0, 0.7, 0.9), (2.5, 0.25, 1.0), (0.3, 2.0, 0.0), (1.0, 0.1, 3.0)])
def test_propagation_matches_dense_lindbladian(omega_b, g, gamma):
    n_max = 5
    model = ProductModel(n_max, omega_b, g, gamma)
    basis = TwoModeBasis(n_max)
    rho0 = random_low_shell_state(model, n_max, seed=7)
    state = TruncatedState(n_max, rho=from_product(rho0, basis, model))
    out = integrate(state, BatteryParams(omega_b=omega_b, g=g, gamma=gamma), 1.3, tol=1e-12, check=False)
    ref = from_product(model.evolve(rho0, 1.3), basis, model)
    np.testing.assert_allclose(out.rho, ref, atol=1e-9)


def test_reports_match_dense_lindbladian():
    n_max = 4
    params = BatteryParams(omega_b=1.1, g=0.6, gamma=0.8, Omega=0.4)
    model = ProductModel(n_max, params.omega_b, params.g, params.gamma)
    basis = TwoModeBasis(n_max)
    state = squeeze_vacuum(0.4, n_max, check=False)
    rho0, _ = to_product(state.rho, basis, model)
    reports = evolve_reports(state, params, [0.0, 0.5, 2.0], tol=1e-12)
    L = model.superoperator()
    for rep in reports:
        ref = model.moments((expm(rep.t * L) @ rho0.ravel()).reshape(rho0.shape))
        assert rep.moments.n_a == pytest.approx(ref["n_a"].real, abs=1e-10)
        assert rep.moments.n_b == pytest.approx(ref["n_b"].real, abs=1e-10)
        assert rep.moments.coh_ab == pytest.approx(ref["coh_ab"], abs=1e-10)
        assert rep.moments.sq_bb == pytest.approx(ref["bb"], abs=1e-10)
        assert rep.moments.sq_ab == pytest.approx(ref["ab"], abs=1e-10)


# -- the pulse ------------------------------------------------------------------------------


def test_vacuum_when_undriven():
    state = squeeze_vacuum(0.0, 20)
    assert state.ket[0] == 1.0 and np.count_nonzero(state.ket) == 1
    rep = extract_report(state, 1.0)
    assert rep.moments.n_a == 0 and rep.energy.D == 1.0 and rep.energy.ergotropy == 0.0


@pytest.mark.parametrize("Omega", [0.3, 1.0, 1.5])
def test_squeezed_vacuum_has_even_parity(Omega):
    state = squeeze_vacuum(Omega)
    odd = sum(abs(state.ket[state.basis.index(n, 0)]) ** 2 for n in range(1, state.n_max + 1, 2))
    assert odd < 1e-12
    assert np.all(state.basis.n_b[np.abs(state.ket) > 0] == 0)


def test_truncated_expm_matches_closed_form_amplitudes():
    n_max = 60
    state = squeeze_vacuum(1.0, n_max)
    column = np.array([state.ket[state.basis.index(n, 0)] for n in range(n_max + 1)])
    exact = squeezed_vacuum_amplitudes(1.0, n_max)
    exact /= np.linalg.norm(exact)
    np.testing.assert_allclose(column, exact, atol=1e-8)


def test_squeeze_coherence_matches_direct_exponential():
    column = squeeze_generator_exp(1.0, 60)[:, 0]
    a = build_mode_operators(60).a
    direct = np.vdot(column, a @ a @ column)
    rep = extract_report(squeeze_vacuum(1.0, 60), 1.0)
    assert abs(rep.moments.sq_aa - direct) < 1e-6


def test_unpadded_generator_is_unitary_on_its_space():
    U = squeeze_generator_exp(0.8, 30)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(31), atol=1e-12)


def test_squeezed_moments_at_generous_cutoff():
    state = squeeze_vacuum(1.0, 80)
    rep = extract_report(state, 1.0)
    s, c = math.sinh(1.0), math.cosh(1.0)
    assert rep.moments.n_a == pytest.approx(s * s, abs=1e-8)
    assert rep.moments.sq_aa == pytest.approx(-1j * s * c, abs=1e-8)


def test_squeezed_moments_at_certified_cutoff():
    # at n_max = 60 the cut tail costs a few 1e-7 of <a+a>
    rep = extract_report(squeeze_vacuum(1.0, 60), 1.0)
    assert rep.moments.n_a == pytest.approx(math.sinh(1.0) ** 2, abs=1e-6)
    assert rep.certified


def test_insufficient_cutoff_raises_with_weight():
    with pytest.raises(TruncationInsufficient) as info:
        squeeze_vacuum(1.5, 10)
    assert info.value.weight > CERTIFIED_WEIGHT


@pytest.mark.parametrize("Omega,expected", [(0.0, 20), (0.5, 20), (1.0, 42), (1.5, 106)])
def test_default_cutoff(Omega, expected):
    assert default_cutoff(Omega) == expected
    assert squeezed_tail_weight(Omega, expected) < CERTIFIED_WEIGHT
    assert squeeze_vacuum(Omega).truncation_weight() < CERTIFIED_WEIGHT


def test_heuristic_cutoff_alone_does_not_certify():
    assert heuristic_cutoff(1.0) == 25
    assert squeezed_tail_weight(1.0, heuristic_cutoff(1.0)) > CERTIFIED_WEIGHT
    with pytest.raises(InvalidParams):
        default_cutoff(-1.0)


# -- dynamics ---------------------------------------------------------------------------------


def test_charger_decay_without_coupling():
    params = BatteryParams(g=0.0, gamma=1.0, Omega=1.0)
    t = np.linspace(0, 5, 11)
    reports = oracle_trace(params, t, n_max=60)
    n_a = np.array([r.moments.n_a for r in reports])
    np.testing.assert_allclose(n_a, math.sinh(1.0) ** 2 * np.exp(-t), atol=1e-6)
    sq_aa = np.array([abs(r.moments.sq_aa) for r in reports])
    np.testing.assert_allclose(sq_aa, math.sinh(1.0) * math.cosh(1.0) * np.exp(-t), atol=1e-6)
    assert all(abs(r.moments.n_b) < 1e-12 for r in reports)


def test_lossless_uncoupled_populations_are_frozen():
    params = BatteryParams(omega_b=1.7, g=0.0, gamma=0.0, Omega=0.7)
    state = squeeze_vacuum(0.7)
    out = integrate(state, params, 3.0)
    np.testing.assert_allclose(np.diag(out.rho).real, np.abs(state.ket) ** 2, atol=1e-13)


@pytest.mark.parametrize("Omega", [0.5, 1.0])
def test_squeezing_moments_match_moment_propagation(Omega):
    params = BatteryParams(omega_b=1.0, g=2.0, gamma=1.0, Omega=Omega)
    t = np.linspace(0, 5, 26)
    reports = oracle_trace(params, t, n_max=60, tol=1e-10)
    _, sqs = propagate_moment_vectors(post_pulse_moments(Omega), params, t)
    oracle = np.array([r.moments.sq_bb for r in reports])
    scale = np.max(np.abs(sqs[:, 1]))
    assert np.max(np.abs(oracle - sqs[:, 1])) < 1e-6
    assert np.max(np.abs(oracle - sqs[:, 1])) / scale < 1e-6


@pytest.mark.slow
def test_doubling_the_cutoff_is_converged():
    params = BatteryParams(g=2.0, gamma=1.0, Omega=1.0)
    t_E = optimal_time(params)
    lo = oracle_trace(params, [t_E], n_max=60, squeezing=False)[-1].moments.n_b
    hi = oracle_trace(params, [t_E], n_max=120, squeezing=False)[-1].moments.n_b
    assert abs(hi - lo) / hi < 1e-6


def test_invariants_after_integration():
    params = BatteryParams(omega_b=1.0, g=0.5, gamma=1.0, Omega=0.5)
    out = integrate(squeeze_vacuum(0.5), params, 2.0)
    assert abs(out.trace() - 1.0) < 1e-8
    assert out.min_eigenvalue() > -1e-8
    out.check_invariants(positivity=True)
    assert out.truncation_weight() < CERTIFIED_WEIGHT


def test_check_invariants_catches_bad_states():
    rho = np.zeros((3, 3), dtype=complex)
    rho[0, 0] = 0.9
    with pytest.raises(IntegrationFailure):
        TruncatedState(1, rho=rho).check_invariants()
    rho[0, 0], rho[1, 1], rho[0, 1] = 0.5, 0.5, 0.1
    with pytest.raises(IntegrationFailure):
        TruncatedState(1, rho=rho).check_invariants()
    rho[1, 0], rho[0, 1] = 0.9, 0.9
    with pytest.raises(IntegrationFailure):
        TruncatedState(1, rho=rho).check_invariants(positivity=True)


def test_state_constructor_validation():
    with pytest.raises(ValueError):
        TruncatedState(2)
    with pytest.raises(ValueError):
        TruncatedState(2, ket=np.ones(3))


def test_reports_agree_between_routes():
    params = BatteryParams(omega_b=1.0, g=1.0, gamma=1.0, Omega=0.5)
    state = squeeze_vacuum(0.5)
    via_chains = evolve_reports(state, params, [0.0])[0]
    direct = extract_report(state, 1.0, math.sinh(0.5) ** 2)
    assert via_chains.moments.n_a == pytest.approx(direct.moments.n_a, rel=1e-14)
    assert via_chains.moments.sq_aa == pytest.approx(direct.moments.sq_aa, rel=1e-14)
    assert via_chains.truncation_weight == pytest.approx(direct.truncation_weight, rel=1e-10)


def test_first_moments_vanish_and_trace_holds():
    params = BatteryParams(g=0.5, gamma=1.0, Omega=1.0)
    for rep in oracle_trace(params, np.linspace(0, 5, 11)):
        assert rep.first_moment_size < 1e-8
        assert abs(rep.trace - 1.0) < 1e-7


def test_oracle_tracks_closed_form():
    params = BatteryParams(g=1.0, gamma=1.0, Omega=0.5)
    t = np.linspace(0, 5, 11)
    n_b = np.array([r.moments.n_b for r in oracle_trace(params, t, squeezing=False)])
    ref = math.sinh(0.5) ** 2 * excitation_fraction_P(params, t)
    assert np.max(np.abs(n_b - ref) / np.maximum(ref, 1e-12 * ref.max())) < 1e-3


def test_time_validation():
    state = squeeze_vacuum(0.5)
    with pytest.raises(InvalidTime):
        evolve_reports(state, BatteryParams(), [1.0, 0.5])
    with pytest.raises(InvalidTime):
        integrate(state, BatteryParams(), -1.0)


def test_step_control_failure_is_reported():
    with pytest.raises(IntegrationFailure):
        oracle_trace(BatteryParams(g=1.0, gamma=1.0, Omega=0.5), [1.0], tol=1e-30)


# -- finite-width pulse ---------------------------------------------------------------------------


def test_finite_pulse_needs_finite_kind():
    with pytest.raises(InvalidParams):
        finite_width_pulse_run(BatteryParams(), PulseSpec.delta(), t_final=1.0)


def test_undriven_finite_pulse_is_vacuum():
    params = BatteryParams(omega_b=20.0, g=2.0, gamma=1.0, Omega=0.0)
    reports = finite_width_pulse_run(params, PulseSpec.finite(0.001, "rectangular"), t_final=0.5)
    assert all(r.moments.n_a == 0 and r.moments.n_b == 0 for r in reports)


def test_short_pulse_approaches_the_ideal_squeeze():
    params = BatteryParams(omega_b=20.0, g=2.0, gamma=1.0, Omega=0.5)
    pulse = PulseSpec.finite(0.0005, "rectangular")
    reports = finite_width_pulse_run(params, pulse, times=[pulse.duration, 0.5], n_max=20)
    n_a = reports[0].moments.n_a
    assert reports[0].t == pulse.duration
    assert abs(n_a / math.sinh(0.5) ** 2 - 1) < 1e-2
    assert reports[-1].t == 0.5 and reports[-1].moments.n_b > 0
