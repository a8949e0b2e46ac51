"""Oracle suites behind the validate task.

Each suite returns a list of checks {"name", "deviation", "tolerance", "passed"};
run_validation collects them into one report.
"""
import logging

import numpy as np

from errors import SpectraError
from estimators import FrameSpec, estimate_s2, estimate_s3, frame_fft, white_noise_record
from liouvillian import thermal_state
from models import (
    SingleSpinParams,
    build_model_liouvillian,
    random_lindblad_model,
    single_spin_model,
    thermal_two_level_model,
)
from operators import check_vectorization_convention, sandwich_superop, vectorize
from polyspectra import (
    cumulant3_time,
    cumulant4_time,
    cumulant_from_moments,
    fdt_residual,
    integrated_noise_check,
    power_spectrum_lorentzian,
    s2_grid,
    susceptibility,
)

logger = logging.getLogger(__name__)


def make_check(name, deviation, tolerance):
    deviation = float(deviation)
    return {"name": name, "deviation": deviation, "tolerance": float(tolerance), "passed": bool(deviation <= tolerance)}


def check_operator_convention(seed=7):
    rng = np.random.default_rng(seed)
    a, x, b = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(3))
    deviation = np.max(np.abs(vectorize(a @ x @ b) - sandwich_superop(a, b) @ vectorize(x)))
    check_vectorization_convention(seed=seed)
    return [make_check("operator-convention", deviation, 1e-12)]


def check_cumulant_equivalence(n_models=20, n_times=20, dim=4, seed=0):
    """Compact C3/C4 against cumulants assembled from raw moments on random models."""
    rng = np.random.default_rng(seed)
    worst = {3: 0.0, 4: 0.0}
    for index in range(n_models):
        l = build_model_liouvillian(random_lindblad_model(dim, seed=seed + index), beta=1.0)
        for order, compact in ((3, cumulant3_time), (4, cumulant4_time)):
            pairs = []
            for _ in range(n_times):
                times = np.cumsum(rng.uniform(0.05, 1.5, size=order))
                pairs.append((compact(l, times, 1.0), cumulant_from_moments(l, times, 1.0)))
            pairs = np.array(pairs)
            scale = max(float(np.max(np.abs(pairs[:, 1]))), 1e-300)
            worst[order] = max(worst[order], float(np.max(np.abs(pairs[:, 0] - pairs[:, 1]))) / scale)
    return [make_check(f"cumulant{order}-equivalence", worst[order], 1e-9) for order in (3, 4)]


def check_single_spin_lorentzian(cases=((1.0, 0.1), (1.0, 0.01)), n_points=1000):
    checks = []
    for omega_x, gamma in cases:
        model = single_spin_model(SingleSpinParams(omega=(omega_x, 0.0, 0.0), gamma=gamma))
        l = build_model_liouvillian(model, beta=1.0, include_measurement_damping=False)
        omegas = np.linspace(-3 * omega_x, 3 * omega_x, n_points)
        grid = s2_grid(l, omegas, beta=1.0)
        reference = power_spectrum_lorentzian(omegas, omega_x, gamma)
        deviation = np.max(np.abs(grid.values - reference) / reference)
        checks.append(make_check(f"single-spin-lorentzian(omega_x={omega_x}, gamma={gamma})", deviation, 1e-8))
    return checks


def check_sum_rule(gamma=0.1, n_points=200001):
    model = single_spin_model(SingleSpinParams(omega=(1.0, 0.0, 0.0), gamma=gamma))
    l = build_model_liouvillian(model, beta=1.0, include_measurement_damping=False)
    integral = integrated_noise_check(l, beta=1.0, omega_max=100 * gamma, n_points=n_points)
    return [make_check("sum-rule", abs(integral - 2 * np.pi) / (2 * np.pi), 0.01)]


def check_fdt(omega0=1.0, kt=0.5):
    model = thermal_two_level_model(omega0, gamma=omega0 / 100, kt=kt)
    l = build_model_liouvillian(model, beta=1.0, include_measurement_damping=False)
    rho = thermal_state(model.h, kt)
    alpha = susceptibility(l, omega0, rho=rho)
    residual = fdt_residual(l, omega0, kt, rho=rho)
    return [make_check("fdt-residual", abs(residual) / abs(alpha.imag), 0.05)]


def check_white_noise(beta=1.0, dt=0.01, steps=2 ** 20, seed=3):
    """Shot noise alone: flat S2 at beta^2/4 and a bispectrum consistent with zero."""
    spec = FrameSpec(frame_length=256, frames_per_estimate=8)
    frames = frame_fft(white_noise_record(beta, dt, steps, seed), spec)
    level = beta ** 2 / 4
    s2_est = estimate_s2(frames)
    flat = abs(np.mean(s2_est.values) - level) / level
    s3_est = estimate_s3(frames, max_bin=32)
    z_real = s3_est.values.real / s3_est.errors
    rms = np.sqrt(np.mean(z_real ** 2))
    return [make_check("white-noise-s2-level", flat, 0.02), make_check("white-noise-s3-zscore-rms", rms, 1.3)]


SUITES = {
    "operator-convention": check_operator_convention,
    "cumulant-equivalence": check_cumulant_equivalence,
    "single-spin-lorentzian": check_single_spin_lorentzian,
    "sum-rule": check_sum_rule,
    "fdt": check_fdt,
    "white-noise": check_white_noise,
}


def run_validation(suites=None):
    """Run the named suites (all by default) and return the report dict."""
    names = list(SUITES) if suites is None else list(suites)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise SpectraError(f"unknown validation suite(s): {unknown}")

    checks = []
    for i, name in enumerate(names, 1):
        logger.info(f"Suite {i}/{len(names)}: {name}")
        try:
            results = SUITES[name]()
        except SpectraError as e:
            logger.error(f"Suite {name} raised {type(e).__name__}: {e}")
            results = [{"name": name, "deviation": float("inf"), "tolerance": 0.0, "passed": False, "error": str(e)}]
        for check in results:
            level = logging.INFO if check["passed"] else logging.WARNING
            logger.log(level, f"  {check['name']}: {check['deviation']:.3e} (tolerance {check['tolerance']:.1e})")
        checks.extend(results)

    return {"passed": all(c["passed"] for c in checks), "checks": checks}


def rank_checks(report):
    """Checks ordered worst first by deviation relative to tolerance."""
    def ratio(check):
        if check["tolerance"] == 0:
            return float("inf")
        return check["deviation"] / check["tolerance"]

    return sorted(report["checks"], key=ratio, reverse=True)
