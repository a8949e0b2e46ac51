import itertools

import numpy as np
import pytest
from scipy import integrate

from errors import EqualTimes, UnsupportedOrder
from liouvillian import DissipatorSpec, build_liouvillian, thermal_state
from models import SingleSpinParams, build_model_liouvillian, single_spin_model, thermal_two_level_model
from operators import pauli
from polyspectra import (
    SpectrumGrid,
    cumulant2_time,
    cumulant3_time,
    cumulant4_compact,
    cumulant4_time,
    cumulant_from_moments,
    fdt_residual,
    gq_autocorrelation,
    integrated_noise_check,
    is_degenerate_cut_point,
    moment_multitime,
    ordered_cumulant_grid,
    power_spectrum_lorentzian,
    s2,
    s2_grid,
    s3,
    s3_grid,
    s4,
    s4_correlation_cut,
    s4_cut_grid,
    set_partitions,
    susceptibility,
    zeno_strength_estimate,
)


@pytest.fixture
def polarized_spin():
    """Spin relaxing towards a polarized state; odd cumulants do not vanish."""
    sx, _, sz = pauli()
    relax = DissipatorSpec(kind="isotropic", rate=0.5, dims=(2,), subsystem=0, rho_final=np.diag([0.8, 0.2]))
    return build_liouvillian(0.5 * sx, [relax], sz, beta=1.0, include_measurement_damping=False)


@pytest.mark.parametrize("omega_x, gamma", [(1.0, 0.1), (1.0, 0.01)])
def test_single_spin_matches_lorentzian(omega_x, gamma):
    model = single_spin_model(SingleSpinParams(omega=(omega_x, 0.0, 0.0), gamma=gamma))
    l = build_model_liouvillian(model, beta=1.0, include_measurement_damping=False)
    omegas = np.linspace(-3.0, 3.0, 1000)
    grid = s2_grid(l, omegas, beta=1.0)
    reference = power_spectrum_lorentzian(omegas, omega_x, gamma)
    np.testing.assert_allclose(grid.values, reference, rtol=1e-8)


def test_sum_rule(single_spin):
    integral = integrated_noise_check(single_spin, beta=1.0, omega_max=10.0, n_points=200001)
    assert integral == pytest.approx(2 * np.pi, rel=0.01)


def test_shot_noise_floor(single_spin):
    bare = s2_grid(single_spin, [0.0, 1.0], beta=1.0)
    noisy = s2_grid(single_spin, [0.0, 1.0], beta=1.0, include_shot_noise=True)
    np.testing.assert_allclose(noisy.values - bare.values, 0.25)
    assert noisy.metadata["shot_noise"] is True
    assert s2(single_spin, 1.0, 1.0, include_shot_noise=True) == pytest.approx(bare.values[1] + 0.25)


def test_autocorrelation(single_spin):
    assert gq_autocorrelation(single_spin, 0.0) == pytest.approx(1.0)
    assert gq_autocorrelation(single_spin, -2.0) == pytest.approx(np.exp(-0.2) * np.cos(2.0))
    assert gq_autocorrelation(single_spin, 2.0, beta=2.0) == pytest.approx(16 * np.exp(-0.2) * np.cos(2.0))


def test_second_cumulant_is_autocorrelation(single_spin):
    assert cumulant2_time(single_spin, 0.5, 2.5, 1.0) == pytest.approx(np.exp(-0.2) * np.cos(2.0))


def test_single_spin_bispectrum_vanishes(single_spin):
    axis = np.linspace(-1.5, 1.5, 7)
    grid = s3_grid(single_spin, axis, axis, beta=1.0)
    assert np.max(np.abs(grid.values)) < 1e-10


def test_set_partitions_counts():
    assert [len(list(set_partitions(range(n)))) for n in range(1, 6)] == [1, 2, 5, 15, 52]


def test_compact_cumulants_match_moment_expansion(random_liouvillian):
    rng = np.random.default_rng(11)
    for seed in range(5):
        l = random_liouvillian(seed)
        for _ in range(5):
            for order, compact in ((2, None), (3, cumulant3_time), (4, cumulant4_time)):
                times = np.cumsum(rng.uniform(0.05, 1.5, size=order))
                reference = cumulant_from_moments(l, times, 1.0)
                if order == 2:
                    value = cumulant2_time(l, times[0], times[1], 1.0)
                else:
                    value = compact(l, times, 1.0)
                assert value == pytest.approx(reference, rel=1e-9, abs=1e-12)


def test_compact_fourth_order_trace_differs_from_cumulant(polarized_spin):
    times = (0.0, 0.4, 1.0, 1.7)
    crossed = cumulant2_time(polarized_spin, 0.0, 1.0, 1.0) * cumulant2_time(polarized_spin, 0.4, 1.7, 1.0)
    nested = cumulant2_time(polarized_spin, 0.0, 1.7, 1.0) * cumulant2_time(polarized_spin, 0.4, 1.0, 1.0)
    compact = cumulant4_compact(polarized_spin, times, 1.0)
    assert cumulant4_time(polarized_spin, times, 1.0) == pytest.approx(compact - crossed - nested)


def test_cumulants_are_symmetric_in_time_order(random_liouvillian):
    l = random_liouvillian(2)
    assert cumulant3_time(l, (1.2, 0.1, 0.5), 1.0) == pytest.approx(cumulant3_time(l, (0.1, 0.5, 1.2), 1.0))


def test_time_argument_errors(single_spin):
    with pytest.raises(EqualTimes):
        cumulant3_time(single_spin, (0.0, 1.0, 1.0), 1.0)
    with pytest.raises(UnsupportedOrder):
        cumulant3_time(single_spin, (0.0, 1.0), 1.0)
    with pytest.raises(UnsupportedOrder):
        cumulant_from_moments(single_spin, np.arange(5.0), 1.0)


def test_moments_are_linear_in_initial_state(polarized_spin):
    up = np.diag([1.0, 0.0]).astype(complex)
    mixed = np.eye(2, dtype=complex) / 2
    times = (0.0, 0.3, 1.1)
    combined = moment_multitime(polarized_spin, times, 1.0, rho=0.3 * up + 0.7 * mixed)
    parts = 0.3 * moment_multitime(polarized_spin, times, 1.0, rho=up) + 0.7 * moment_multitime(polarized_spin, times, 1.0, rho=mixed)
    assert combined == pytest.approx(parts)


def test_moment_scales_with_beta(polarized_spin):
    times = (0.0, 0.5)
    assert moment_multitime(polarized_spin, times, 2.0) == pytest.approx(16 * moment_multitime(polarized_spin, times, 1.0))


def test_ordered_grid_matches_pointwise(polarized_spin):
    g1, g2, g3 = np.array([0.3, 0.9]), np.array([0.4, 1.1]), np.array([0.2, 0.7])
    c3 = ordered_cumulant_grid(polarized_spin, 3, [g1, g2], 1.0)
    c4 = ordered_cumulant_grid(polarized_spin, 4, [g1, g2, g3], 1.0)
    for (i, a), (j, b) in itertools.product(enumerate(g1), enumerate(g2)):
        assert c3[i, j] == pytest.approx(cumulant3_time(polarized_spin, (0.0, a, a + b), 1.0))
        for k, c in enumerate(g3):
            assert c4[i, j, k] == pytest.approx(cumulant4_time(polarized_spin, (0.0, a, a + b, a + b + c), 1.0))


def _ordered_transform(grid, gaps, freqs):
    """Sum over orderings of the gap-grid integral with the matching partial-sum frequencies."""
    total = 0j
    mesh = np.meshgrid(*([gaps] * grid.ndim), indexing="ij")
    for perm in itertools.permutations(freqs):
        partial = [sum(perm[k:]) for k in range(1, len(perm))]
        integrand = grid * np.exp(1j * sum(nu * g for nu, g in zip(partial, mesh)))
        for _ in range(grid.ndim):
            integrand = integrate.simpson(integrand, x=gaps, axis=0)
        total += integrand
    return total


def test_bispectrum_matches_time_domain(polarized_spin):
    gaps = np.linspace(0.0, 40.0, 801)
    c3 = ordered_cumulant_grid(polarized_spin, 3, [gaps, gaps], 1.0)
    points = [(0.3, 0.5), (0.8, -0.2), (1.1, 0.4)]
    analytic = np.array([s3(polarized_spin, w1, w2, 1.0) for w1, w2 in points])
    numeric = np.array([_ordered_transform(c3, gaps, (w1, w2, -w1 - w2)) for w1, w2 in points])
    assert np.max(np.abs(analytic)) > 1e-3
    np.testing.assert_allclose(numeric, analytic, atol=0.01 * np.max(np.abs(analytic)))


def test_trispectrum_matches_time_domain(polarized_spin):
    gaps = np.linspace(0.0, 30.0, 121)
    c4 = ordered_cumulant_grid(polarized_spin, 4, [gaps, gaps, gaps], 1.0)
    points = [(0.2, 0.5, -0.3), (0.6, -0.6, 0.35)]
    analytic = np.array([s4(polarized_spin, *w, 1.0) for w in points])
    numeric = np.array([_ordered_transform(c4, gaps, (*w, -sum(w))) for w in points])
    np.testing.assert_allclose(numeric, analytic, atol=0.05 * np.max(np.abs(analytic)))


def test_bispectrum_symmetries(polarized_spin):
    value = s3(polarized_spin, 0.4, 0.9, 1.0)
    assert s3(polarized_spin, 0.9, 0.4, 1.0) == pytest.approx(value)
    assert s3(polarized_spin, 0.4, -1.3, 1.0) == pytest.approx(value)
    assert s3(polarized_spin, -0.4, -0.9, 1.0) == pytest.approx(np.conj(value))


def test_correlation_cut_is_real_and_symmetric(polarized_spin):
    value = s4_correlation_cut(polarized_spin, 0.3, 0.8, 1.0)
    assert isinstance(value, float)
    assert s4_correlation_cut(polarized_spin, 0.8, 0.3, 1.0) == pytest.approx(value)


def test_cut_grid_flags_degenerate_points(polarized_spin):
    grid = s4_cut_grid(polarized_spin, np.array([0.5, 1.0]), np.array([0.5, 0.8]), beta=1.0)
    assert grid.kind == "s4-correlation-cut"
    assert grid.metadata["degenerate_points"] == 1
    assert grid.metadata["degenerate_mask"] == [[True, False], [False, False]]
    assert grid.values[1, 1] == pytest.approx(s4_correlation_cut(polarized_spin, 1.0, 0.8, 1.0))


def test_parallel_rows_match_serial(polarized_spin):
    axis = np.linspace(-1.0, 1.0, 4)
    serial = s3_grid(polarized_spin, axis, axis, beta=1.0, workers=1)
    parallel = s3_grid(polarized_spin, axis, axis, beta=1.0, workers=2)
    np.testing.assert_allclose(parallel.values, serial.values, atol=1e-14)


def test_degenerate_lines():
    assert is_degenerate_cut_point(0.5, -0.5)
    assert is_degenerate_cut_point(0.0, 0.3)
    assert not is_degenerate_cut_point(0.5, 0.3)


def test_spectrum_grid_validation():
    with pytest.raises(UnsupportedOrder):
        SpectrumGrid(order=5, axes=(np.arange(3.0),), values=np.zeros(3), beta=1.0)
    with pytest.raises(ValueError):
        SpectrumGrid(order=2, axes=(np.array([1.0, 0.0]),), values=np.ones(2), beta=1.0)
    with pytest.raises(ValueError):
        SpectrumGrid(order=2, axes=(np.arange(2.0),), values=np.array([1.0, -1.0]), beta=1.0)


def test_fluctuation_dissipation():
    omega0, kt = 1.0, 0.5
    model = thermal_two_level_model(omega0, gamma=omega0 / 100, kt=kt)
    l = build_model_liouvillian(model, beta=1.0, include_measurement_damping=False)
    rho = thermal_state(model.h, kt)
    np.testing.assert_allclose(l.rho0, rho, atol=1e-10)
    alpha = susceptibility(l, omega0)
    assert abs(fdt_residual(l, omega0, kt)) <= 0.05 * abs(alpha.imag)


def test_zeno_strength_estimate():
    assert zeno_strength_estimate(2.0, 0.5) == pytest.approx((1.0, 2.0))
    with pytest.raises(ValueError):
        zeno_strength_estimate(-1.0, 0.5)
