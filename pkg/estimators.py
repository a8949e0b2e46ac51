"""Polyspectrum estimators for sampled detector records.

Records are cut into non-overlapping frames, each frame is Fourier
transformed with z(w_k) = dt sum_t exp(+i w_k t) z(t), and groups of m
frames are combined into unbiased sample cumulants (k-statistics). Group
results are averaged and their scatter gives the standard error.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from config import DEFAULT_FRAME_LENGTH, DEFAULT_FRAMES_PER_ESTIMATE, SIM_BLOCK, WINDOWS
from errors import FrameError
from models import build_model_liouvillian, model_hash
from polyspectra import ModalFrame, s2, s3, s4_correlation_cut
from sme import SimConfig, TrajectoryRecord, simulate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameSpec:
    frame_length: int = DEFAULT_FRAME_LENGTH
    window: str = "rectangular"
    frames_per_estimate: int = DEFAULT_FRAMES_PER_ESTIMATE
    overlap: int = 0

    def __post_init__(self):
        if self.frame_length < 2:
            raise FrameError(f"frame_length must be at least 2, got {self.frame_length}")
        if self.window not in WINDOWS:
            raise FrameError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if self.frames_per_estimate < 2:
            raise FrameError(f"frames_per_estimate must be at least 2, got {self.frames_per_estimate}")
        if self.overlap != 0:
            raise FrameError("only non-overlapping frames are supported")
        if self.frame_length & (self.frame_length - 1):
            logger.debug(f"frame_length {self.frame_length} is not a power of two")

    def taper(self):
        if self.window == "hann":
            return np.hanning(self.frame_length)
        return np.ones(self.frame_length)


@dataclass
class FrameSpectra:
    """Per-frame spectra in FFT bin order; ``omegas`` are the matching angular frequencies."""

    omegas: np.ndarray
    values: np.ndarray
    dt: float
    spec: FrameSpec

    @property
    def n_frames(self):
        return self.values.shape[0]

    def normalization(self, order):
        """Finite-frame stand-in for 2 pi delta(sum w): dt sum w^n (= T for rectangular frames)."""
        return self.dt * float(np.sum(self.spec.taper() ** order))

    def groups(self, order):
        m = self.spec.frames_per_estimate
        if m < order:
            raise FrameError(f"order {order} needs at least {order} frames per estimate, got {m}")
        count = self.n_frames // m
        if count < 2:
            raise FrameError(f"{self.n_frames} frames give {count} group(s) of {m}; need at least 2 for error bars")
        return self.values[: count * m].reshape(count, m, -1)

    def bin_of(self, omega):
        n = self.spec.frame_length
        step = 2 * np.pi / (n * self.dt)
        k = int(round(omega / step))
        if abs(k * step - omega) > 1e-9 * step:
            raise FrameError(f"frequency {omega} is not on the FFT grid (spacing {step})")
        if abs(k) >= n // 2:
            raise FrameError(f"frequency {omega} beyond Nyquist")
        return k % n


@dataclass
class SpectralEstimate:
    order: int
    axes: tuple
    values: np.ndarray
    errors: np.ndarray
    n_frames: int
    errors_imag: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise FrameError("estimate contains non-finite values")
        if np.any(self.errors < 0):
            raise FrameError("standard errors must be non-negative")


def frame_fft(traj, spec):
    """Split the record into frames and transform each one."""
    z = np.asarray(traj.z_samples if isinstance(traj, TrajectoryRecord) else traj, dtype=float)
    dt = traj.dt if isinstance(traj, TrajectoryRecord) else 1.0
    n = spec.frame_length
    if z.size < n:
        raise FrameError(f"record of {z.size} samples is shorter than one frame ({n})")
    frames = z[: (z.size // n) * n].reshape(-1, n) * spec.taper()
    values = np.fft.ifft(frames, axis=1) * n * dt
    omegas = 2 * np.pi * np.fft.fftfreq(n, d=dt)
    return FrameSpectra(omegas=omegas, values=values, dt=dt, spec=spec)


def _summarize(group_values):
    count = group_values.shape[0]
    mean = group_values.mean(axis=0)
    errors = group_values.real.std(axis=0, ddof=1) / np.sqrt(count)
    errors_imag = group_values.imag.std(axis=0, ddof=1) / np.sqrt(count)
    return mean, errors, errors_imag


def _positive_bins(frames):
    n = frames.spec.frame_length
    return np.arange(0, n // 2)


def estimate_s2(frames):
    """m/(m-1) (<|z|^2> - |<z>|^2) per group, over the non-negative frequency bins."""
    groups = frames.groups(2)
    m = groups.shape[1]
    bins = _positive_bins(frames)
    x = groups[:, :, bins]
    k2 = m / (m - 1) * (np.mean(np.abs(x) ** 2, axis=1) - np.abs(np.mean(x, axis=1)) ** 2)
    mean, errors, _ = _summarize(k2 / frames.normalization(2))
    return SpectralEstimate(order=2, axes=(frames.omegas[bins],), values=mean.real, errors=errors, n_frames=groups.shape[0] * m)


def estimate_s3(frames, max_bin=None):
    """Bispectrum on the bin square |k1|, |k2| < max_bin with k3 = -k1 - k2 taken modulo N."""
    n = frames.spec.frame_length
    if n % 2:
        raise FrameError(f"bispectrum bins need an even frame length, got {n}")
    max_bin = max_bin or n // 4
    if max_bin > n // 4:
        raise FrameError(f"max_bin {max_bin} lets k1 + k2 pass Nyquist for frame length {n}")
    groups = frames.groups(3)
    m = groups.shape[1]
    k = np.arange(-max_bin + 1, max_bin)
    idx = k % n
    idx3 = (-k[:, None] - k[None, :]) % n

    k3 = np.empty((groups.shape[0], k.size, k.size), dtype=complex)
    for g, group in enumerate(groups):
        centered = group - group.mean(axis=0)
        a = centered[:, idx]
        k3[g] = np.einsum("ri,rj,rij->ij", a, a, centered[:, idx3]) / m
    k3 *= m ** 2 / ((m - 1) * (m - 2))
    mean, errors, errors_imag = _summarize(k3 / frames.normalization(3))
    omegas = frames.omegas[idx]
    return SpectralEstimate(order=3, axes=(omegas, omegas), values=mean, errors=errors, errors_imag=errors_imag, n_frames=groups.shape[0] * m)


def _fourth_cumulant(x, y, z, w, m):
    """Unbiased joint fourth cumulant of centered samples along axis 1."""
    def avg(*factors):
        return np.mean(math.prod(factors), axis=1)

    pairs = avg(x, y) * avg(z, w) + avg(x, z) * avg(y, w) + avg(x, w) * avg(y, z)
    return m ** 2 / ((m - 1) * (m - 2) * (m - 3)) * ((m + 1) * avg(x, y, z, w) - (m - 1) * pairs)


def estimate_s4_corr(frames, omega1, omega2):
    """Fourth joint cumulant of (z(w1), z(-w1), z(w2), z(-w2)) on the product of the two axes."""
    axis1 = np.atleast_1d(np.asarray(omega1, dtype=float))
    axis2 = np.atleast_1d(np.asarray(omega2, dtype=float))
    for w1 in axis1:
        for w2 in axis2:
            if abs(w1) < 1e-12 or abs(w2) < 1e-12 or np.isclose(abs(w1), abs(w2)):
                raise FrameError(f"correlation cut undefined at w1={w1}, w2={w2} (needs w1 != +-w2, both nonzero)")
    b1 = np.array([frames.bin_of(w) for w in axis1])
    b2 = np.array([frames.bin_of(w) for w in axis2])

    groups = frames.groups(4)
    m = groups.shape[1]
    centered = groups - groups.mean(axis=1, keepdims=True)
    x = centered[:, :, b1][:, :, :, None]
    z = centered[:, :, b2][:, :, None, :]
    k4 = _fourth_cumulant(x, np.conj(x), z, np.conj(z), m)
    mean, errors, errors_imag = _summarize(k4 / frames.normalization(4))
    return SpectralEstimate(order=4, axes=(axis1, axis2), values=mean.real, errors=errors, errors_imag=errors_imag, n_frames=groups.shape[0] * m)


def white_noise_record(beta, dt, steps, seed):
    """Pure shot noise z_k = (beta / 2) g_k / sqrt(dt) with the simulator's RNG layout."""
    rng = np.random.default_rng(seed)
    z = np.concatenate([rng.standard_normal(min(SIM_BLOCK, steps - start)) for start in range(0, steps, SIM_BLOCK)])
    return TrajectoryRecord(dt=dt, z_samples=0.5 * beta * z / np.sqrt(dt), seed=seed, beta=beta, dim=0, model_hash="white-noise")


def _per_group_statistic(spectra, order, bins):
    """Bin-averaged order-n k-statistic of every frame group, in spectral units."""
    groups = spectra.groups(order)
    m = groups.shape[1]
    centered = groups - groups.mean(axis=1, keepdims=True)
    if order == 2:
        x = centered[:, :, bins]
        per_group = m / (m - 1) * np.mean(np.abs(x) ** 2, axis=1).mean(axis=1)
    elif order == 3:
        n = spectra.spec.frame_length
        x = centered[:, :, bins]
        third = centered[:, :, (-bins[:, None] - bins[None, :]) % n]
        k3 = m ** 2 / ((m - 1) * (m - 2)) * np.einsum("gri,grj,grij->gij", x, x, third) / m
        per_group = k3.real.mean(axis=(1, 2))
    else:
        x = centered[:, :, bins][:, :, :, None]
        z = centered[:, :, bins][:, :, None, :]
        k4 = _fourth_cumulant(x, np.conj(x), z, np.conj(z), m).real
        per_group = k4[:, ~np.eye(len(bins), dtype=bool)].mean(axis=1)
    return per_group / spectra.normalization(order)


def _analytic_statistic(l, order, omegas, beta):
    """Single-system polyspectrum averaged over the same bins as _per_group_statistic."""
    frame = ModalFrame(l)
    if order == 2:
        return float(np.mean([s2(l, w, beta, include_shot_noise=True, frame=frame) for w in omegas]))
    if order == 3:
        return float(np.mean([s3(l, w1, w2, beta, frame=frame).real for w1 in omegas for w2 in omegas]))
    values = [s4_correlation_cut(l, w1, w2, beta, frame=frame) for i, w1 in enumerate(omegas) for j, w2 in enumerate(omegas) if i != j]
    return float(np.mean(values))


def measure_snr(model, n_systems, frames, orders, beta, dt, spec, bins, seed=0, beta_exponent=0.0):
    """Signal-to-noise of bin-averaged order-n estimates from the summed output of N systems.

    Each system has beta * N^beta_exponent. ``bins`` are positive FFT bin
    indices; for order 4 every pair of distinct bins enters the correlation
    cut. The noise is the standard error from the group scatter. Cumulants of
    independent systems add, so the signal is N times the single-system
    polyspectrum on those bins; the simulated mean is reported next to it.
    """
    unsupported = [order for order in orders if order not in (2, 3, 4)]
    if unsupported:
        raise FrameError(f"SNR experiment supports orders 2, 3 and 4, got {unsupported}")
    bins = np.asarray(bins)
    if np.any(bins <= 0) or np.any(bins >= spec.frame_length // 4):
        raise FrameError(f"bins must lie in (0, {spec.frame_length // 4}), got {bins.tolist()}")

    beta_n = beta * n_systems ** beta_exponent
    steps = frames * spec.frame_length
    l = build_model_liouvillian(model, beta_n, include_measurement_damping=True)
    total = np.zeros(steps)
    for i in range(n_systems):
        record = simulate(model, SimConfig(dt=dt, steps=steps, seed=seed + 1000 * n_systems + i, beta=beta_n), l=l)
        total += record.z_samples
    spectra = frame_fft(TrajectoryRecord(dt=dt, z_samples=total, seed=seed, beta=beta_n, dim=l.dim), spec)

    rows = {}
    for order in orders:
        per_group = _per_group_statistic(spectra, order, bins)
        error = float(per_group.std(ddof=1) / np.sqrt(len(per_group)))
        measured = float(per_group.mean())
        signal = n_systems * _analytic_statistic(l, order, spectra.omegas[bins], beta_n)
        rows[order] = {
            "signal": signal,
            "measured": measured,
            "error": error,
            "snr": abs(signal) / error,
            "measured_snr": abs(measured) / error,
        }
    return rows


def fit_exponent(xs, ys):
    """Slope of log(ys) against log(xs)."""
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)


def snr_experiment(model, n_values, orders=(2, 4), frames=8000, beta=0.3, dt=0.05, spec=None, bins=(1, 2, 3, 4), seed=0, beta_exponent=0.0):
    """Fitted exponent of SNR against the number of summed systems, per order.

    Defaults keep shot noise comparable to the signal so the estimator
    scatter stays close to its Gaussian value already at N = 1.
    """
    spec = spec or FrameSpec(frame_length=512, frames_per_estimate=8)
    logger.info(f"SNR experiment on {model.name} ({model_hash(model)[:8]}) for N in {list(n_values)}")
    rows = [measure_snr(model, n, frames, orders, beta, dt, spec, bins, seed=seed, beta_exponent=beta_exponent) for n in n_values]
    results = {}
    for order in orders:
        results[order] = {key: [row[order][key] for row in rows] for key in rows[0][order]}
        results[order]["exponent"] = fit_exponent(n_values, results[order]["snr"])
        logger.info(f"Order {order}: SNR exponent {results[order]['exponent']:.3f}")
    return results
