import numpy as np
import pytest
from scipy import linalg

from errors import MultipleSteadyStates, NegativeTime, NonHermitianInput, NonPositiveTime, NotTracePreserving
from liouvillian import (
    DissipatorSpec,
    a_super_apply,
    a_super_matrix,
    build_liouvillian,
    gprime_apply_freq,
    gprime_apply_time,
    isotropic_spin_dissipator,
    lindblad_dissipator,
    propagate,
    steady_state,
    thermal_state,
)
from models import SingleSpinParams, bloch_form_check, build_model_liouvillian, single_spin_model
from operators import devectorize, pauli, trace_functional, vectorize


def test_single_spin_steady_state(single_spin):
    np.testing.assert_allclose(single_spin.rho0, np.eye(2) / 2, atol=1e-12)
    np.testing.assert_allclose(steady_state(single_spin), single_spin.rho0, atol=1e-12)
    assert single_spin.a_mean == pytest.approx(0.0, abs=1e-12)
    assert np.linalg.norm(trace_functional(2) @ single_spin.matrix) < 1e-12


def test_random_model_has_one_steady_mode(random_liouvillian):
    l = random_liouvillian(3)
    assert abs(l.eigenvalues[l.steady_index]) < 1e-9
    others = np.delete(l.eigenvalues, l.steady_index)
    assert np.all(others.real < 0)


@pytest.mark.parametrize("beta", [0.0, 0.3, 1.0])
def test_bloch_form(beta):
    params = SingleSpinParams(omega=(0.7, -0.2, 0.4), gamma=0.05)
    l = build_model_liouvillian(single_spin_model(params), beta)
    assert bloch_form_check(l, beta, params) < 1e-10


def test_isotropic_dissipator_resets_subsystem():
    rho_a = thermal_state(np.diag([0.0, 1.0, 2.0]), 1.0)
    rho_b = np.array([[0.6, 0.1j], [-0.1j, 0.4]])
    rho_final = np.diag([0.9, 0.1])
    d = isotropic_spin_dissipator((3, 2), 1, 0.5, rho_final)
    out = devectorize(d @ vectorize(np.kron(rho_a, rho_b)))
    np.testing.assert_allclose(out, -0.5 * (np.kron(rho_a, rho_b) - np.kron(rho_a, rho_final)), atol=1e-12)


def test_lindblad_dissipator_is_trace_preserving(rng):
    c = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.linalg.norm(trace_functional(3) @ lindblad_dissipator(c)) < 1e-12


def test_thermal_state_populations():
    rho = thermal_state(np.diag([0.0, 2.0]), 0.5)
    assert rho[1, 1].real / rho[0, 0].real == pytest.approx(np.exp(-4.0))
    assert np.trace(rho).real == pytest.approx(1.0)


def test_propagate_matches_expm(random_liouvillian, rng):
    l = random_liouvillian(5)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    expected = devectorize(linalg.expm(l.matrix * 0.7) @ vectorize(x))
    np.testing.assert_allclose(propagate(l, 0.7, x), expected, atol=1e-9)
    np.testing.assert_allclose(propagate(l, 0.0, x), x)


def test_long_time_limit_is_steady_state(single_spin):
    rho = np.array([[1.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(propagate(single_spin, 400.0, rho), single_spin.rho0, atol=1e-12)


def test_modified_propagator_removes_steady_part(random_liouvillian):
    l = random_liouvillian(6)
    rho = np.diag([0.4, 0.3, 0.2, 0.1]).astype(complex)
    np.testing.assert_allclose(gprime_apply_time(l, 1.3, rho), propagate(l, 1.3, rho) - l.rho0, atol=1e-10)


def test_modified_resolvent_on_traceless_input(random_liouvillian):
    l = random_liouvillian(7)
    x = np.diag([1.0, -1.0, 0.5, -0.5]).astype(complex)
    omega = 0.8
    expected = -np.linalg.solve(l.matrix + 1j * omega * np.eye(16), vectorize(x))
    np.testing.assert_allclose(gprime_apply_freq(l, omega, x), devectorize(expected), atol=1e-10)


def test_time_arguments_are_checked(single_spin):
    with pytest.raises(NegativeTime):
        propagate(single_spin, -1.0, single_spin.rho0)
    with pytest.raises(NonPositiveTime):
        gprime_apply_time(single_spin, 0.0, single_spin.rho0)


def test_undamped_system_has_no_unique_steady_state():
    _, _, sz = pauli()
    with pytest.raises(MultipleSteadyStates):
        build_liouvillian(sz, [], sz, beta=0.0)


def test_non_hermitian_hamiltonian_rejected():
    with pytest.raises(NonHermitianInput):
        build_liouvillian(np.array([[0, 1], [0, 0]]), [], np.eye(2), beta=0.0)


def test_trace_leak_rejected():
    sx, _, sz = pauli()
    leaky = DissipatorSpec(kind="custom", matrix=-np.eye(4))
    with pytest.raises(NotTracePreserving):
        build_liouvillian(sx, [leaky], sz, beta=0.0)


def test_measurement_damping_dephases():
    params = SingleSpinParams(omega=(0.0, 0.0, 0.0), gamma=0.1)
    l = build_model_liouvillian(single_spin_model(params), beta=0.5)
    rates = np.sort(-l.eigenvalues.real)
    np.testing.assert_allclose(rates, [0.0, 0.1, 0.6, 0.6], atol=1e-12)


def test_with_rho0_updates_mean(single_spin):
    up = np.diag([1.0, 0.0]).astype(complex)
    assert single_spin.with_rho0(up).a_mean == pytest.approx(1.0)


def test_anticommutator_superoperator(rng):
    a = pauli()[2]
    x = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    expected = (a @ x + x @ a) / 2 - 0.3 * x
    np.testing.assert_allclose(a_super_apply(a, 0.3, x), expected, atol=1e-14)
    np.testing.assert_allclose(devectorize(a_super_matrix(a, 0.3) @ vectorize(x)), expected, atol=1e-14)
