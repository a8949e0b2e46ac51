"""Multi-time moments, cumulants and the polyspectra S2, S3, S4 of a
continuously measured detector output.

Time-domain quantities are assembled from the propagators in liouvillian.py.
Frequency-domain quantities run in the eigenbasis of the Liouvillian, where
every modified resolvent G'(nu) is a diagonal scaling; partial results are
memoized per partial-sum frequency while the permutation sums are expanded.

Fourier convention: f(omega) = int f(t) exp(+i omega t) dt, so
G'(omega) = Lambda diag(1/(-lambda_j - i omega)) Lambda^-1 with the steady
mode removed.
"""
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from cachetools import LRUCache
from cachetools.keys import hashkey
from scipy import integrate

from config import IMAG_RESIDUE_TOL, RESOLVENT_CACHE_SIZE
from errors import EqualTimes, ImaginaryResidue, NegativeTime, UnsupportedOrder
from liouvillian import a_super_apply, a_super_matrix, gprime_apply_freq, gprime_apply_time, propagate
from operators import vectorize

logger = logging.getLogger(__name__)

SPECTRUM_KINDS = ["full", "s4-correlation-cut"]
MODE_WEIGHT_CUTOFF = 1e-10


@dataclass
class SpectrumGrid:
    order: int
    axes: tuple
    values: np.ndarray
    beta: float
    kind: str = "full"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order not in (2, 3, 4):
            raise UnsupportedOrder(f"spectra exist for orders 2, 3 and 4, got {self.order}")
        if self.kind not in SPECTRUM_KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        self.axes = tuple(np.asarray(axis, dtype=float) for axis in self.axes)
        for axis in self.axes:
            if axis.size > 1 and np.any(np.diff(axis) <= 0):
                raise ValueError("frequency axes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectrum contains non-finite values")
        if self.order == 2:
            floor = -1e-9 * max(1.0, float(np.max(np.abs(self.values), initial=0.0)))
            if np.min(np.real(self.values), initial=0.0) < floor:
                raise ValueError(f"power spectrum dips below zero ({np.min(np.real(self.values)):.3e})")


@dataclass(frozen=True)
class MomentResult:
    times: tuple
    value: float
    order: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"moment at times {self.times} is not finite")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise EqualTimes(f"moment times must be strictly increasing, got {self.times}")


def _checked_real(value, scale, what):
    """Real part of ``value`` after asserting its imaginary part is negligible."""
    value = complex(value)
    bound = IMAG_RESIDUE_TOL * max(abs(value), scale)
    residue = abs(value.imag)
    if residue > bound:
        raise ImaginaryResidue(value, bound)
    if residue > 0.1 * bound:
        logger.warning(f"{what}: imaginary residue {residue:.2e} close to bound {bound:.2e}")
    return value.real


def _scale(l, beta, order):
    """Natural magnitude beta^(2n) |A|^n used as the floor of relative checks."""
    norm = float(np.max(np.abs(np.linalg.eigvalsh(l.meas_op)), initial=0.0))
    return max(beta ** (2 * order) * norm ** order, 1e-300)


def _ordered_times(times):
    times = np.sort(np.asarray(times, dtype=float).ravel())
    if times.size == 0:
        raise UnsupportedOrder("a moment needs at least one time")
    if np.any(np.diff(times) == 0):
        raise EqualTimes(f"times must be distinct, got {times.tolist()}")
    return times


# Time domain


def moment_multitime(l, times, beta, rho=None):
    """beta^(2n) Tr[A G(t_n - t_(n-1)) A ... G(t_2 - t_1) A rho] for t_1 < ... < t_n.

    ``rho`` defaults to the steady state; moments are linear in it.
    """
    times = _ordered_times(times)
    a = l.meas_op
    x = l.rho0 if rho is None else np.asarray(rho, dtype=complex)
    x = a_super_apply(a, 0.0, x)
    for gap in np.diff(times):
        x = a_super_apply(a, 0.0, propagate(l, gap, x))
    value = beta ** (2 * len(times)) * np.trace(x)
    return _checked_real(value, _scale(l, beta, len(times)), "moment")


def _compact_trace(l, gaps):
    a = l.meas_op
    x = a_super_apply(a, l.a_mean, l.rho0)
    for gap in gaps:
        x = a_super_apply(a, l.a_mean, gprime_apply_time(l, gap, x))
    return np.trace(x)


def cumulant2_time(l, t1, t2, beta):
    times = _ordered_times([t1, t2])
    value = beta ** 4 * _compact_trace(l, np.diff(times))
    return _checked_real(value, _scale(l, beta, 2), "second cumulant")


def cumulant3_time(l, times, beta):
    """beta^6 Tr[A' G'(t3 - t2) A' G'(t2 - t1) A' rho0]."""
    times = _ordered_times(times)
    if times.size != 3:
        raise UnsupportedOrder(f"third cumulant needs three times, got {times.size}")
    value = beta ** 6 * _compact_trace(l, np.diff(times))
    return _checked_real(value, _scale(l, beta, 3), "third cumulant")


def cumulant4_compact(l, times, beta):
    """The bare trace beta^8 Tr[A' G' A' G' A' G' A' rho0], without pair subtractions."""
    times = _ordered_times(times)
    if times.size != 4:
        raise UnsupportedOrder(f"fourth cumulant needs four times, got {times.size}")
    value = beta ** 8 * _compact_trace(l, np.diff(times))
    return _checked_real(value, _scale(l, beta, 4), "fourth-order trace")


def cumulant4_time(l, times, beta):
    """Full fourth cumulant for t1 < t2 < t3 < t4.

    The compact trace still contains two crossed pairings of the second
    cumulant; they are removed here:
        C4 = trace - C2(t1, t3) C2(t2, t4) - C2(t1, t4) C2(t2, t3)
    """
    t1, t2, t3, t4 = _ordered_times(times)
    compact = cumulant4_compact(l, (t1, t2, t3, t4), beta)
    crossed = cumulant2_time(l, t1, t3, beta) * cumulant2_time(l, t2, t4, beta)
    nested = cumulant2_time(l, t1, t4, beta) * cumulant2_time(l, t2, t3, beta)
    return compact - crossed - nested


def set_partitions(items):
    """All set partitions of ``items`` as lists of tuples."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in set_partitions(rest):
        yield [(first,)] + partition
        for i, block in enumerate(partition):
            yield partition[:i] + [(first,) + block] + partition[i + 1:]


def cumulant_from_moments(l, times, beta, n=None, rho=None):
    """Joint cumulant assembled from raw moments over all set partitions.

    kappa_n = sum_pi (|pi| - 1)! (-1)^(|pi| - 1) prod_(B in pi) M(B)
    """
    times = _ordered_times(times)
    n = times.size if n is None else n
    if n not in (2, 3, 4) or times.size != n:
        raise UnsupportedOrder(f"cumulants from moments are provided for n = 2, 3, 4 (got n={n}, {times.size} times)")

    moments = {}
    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            sub_times = tuple(float(times[i]) for i in subset)
            moments[subset] = MomentResult(sub_times, moment_multitime(l, sub_times, beta, rho=rho), size)

    total = 0.0
    for partition in set_partitions(range(n)):
        blocks = len(partition)
        weight = math.factorial(blocks - 1) * (-1) ** (blocks - 1)
        total += weight * math.prod(moments[tuple(sorted(block))].value for block in partition)
    return total


# Eigenbasis machinery


class ModalFrame:
    """The measurement chain of a Liouvillian expressed in its eigenbasis.

    ``start`` is Lambda^-1 vec(A' rho0), ``finish`` the row of Tr[A' .] Lambda
    and ``coupling`` Lambda^-1 A' Lambda. Resolvent applications are cached by
    partial-sum frequency for the lifetime of the frame.
    """

    def __init__(self, l, cache_size=RESOLVENT_CACHE_SIZE):
        decomposition = l.decomposition
        steady = l.steady_index
        a_prime = a_super_matrix(l.meas_op, l.a_mean)
        self.eigenvalues = decomposition.eigenvalues.copy()
        self.eigenvalues[steady] = -1.0
        self.mask = np.ones(decomposition.size)
        self.mask[steady] = 0.0
        self.coupling = decomposition.inverse @ a_prime @ decomposition.eigenvectors
        self.start = decomposition.inverse @ (a_prime @ vectorize(l.rho0)) * self.mask
        self.finish = (l.trace_vector @ a_prime @ decomposition.eigenvectors) * self.mask
        self.weights = self.finish * self.start

        significant = np.abs(self.weights) > MODE_WEIGHT_CUTOFF * np.max(np.abs(self.weights), initial=0.0)
        self._pair_modes = np.flatnonzero(significant)
        self._first = LRUCache(maxsize=cache_size)
        self._second = LRUCache(maxsize=cache_size)

    def resolvent(self, nu):
        return self.mask / (-self.eigenvalues - 1j * nu)

    def decay(self, tau):
        """exp(lambda_j tau) with the steady mode removed, for an array of gaps."""
        return np.exp(np.multiply.outer(np.asarray(tau, dtype=float), self.eigenvalues)) * self.mask

    def first(self, nu1):
        key = hashkey(nu1)
        try:
            return self._first[key]
        except KeyError:
            value = self.resolvent(nu1) * self.start
            self._first[key] = value
            return value

    def second(self, nu1, nu2):
        key = hashkey(nu1, nu2)
        try:
            return self._second[key]
        except KeyError:
            value = self.resolvent(nu2) * (self.coupling @ self.first(nu1))
            self._second[key] = value
            return value

    def two_point(self, nu):
        return self.finish @ self.first(nu)

    def three_point(self, nu1, nu2):
        return self.finish @ self.second(nu1, nu2)

    def four_point(self, nu1, nu2, nu3):
        return self.finish @ (self.resolvent(nu3) * (self.coupling @ self.second(nu1, nu2)))

    def pair_correction(self, nu1, nu2, nu3):
        """Fourier transform of the two crossed second-cumulant pairings (sign included)."""
        modes = self._pair_modes
        if modes.size == 0:
            return 0.0
        lam = self.eigenvalues[modes]
        s = self.weights[modes]
        outer = 1 / (lam + 1j * nu1)
        middle = 1 / (lam[:, None] + lam[None, :] + 1j * nu2)
        inner = 1 / (lam + 1j * nu3)
        crossed = (s * outer) @ (middle @ (s * inner))
        nested = (s * outer * inner) @ (middle @ s)
        return crossed + nested

    def clear(self):
        self._first.clear()
        self._second.clear()


def ordered_cumulant_grid(l, order, gap_axes, beta):
    """C2, C3 or C4 on a product grid of consecutive gaps t_(k+1) - t_k >= 0.

    Zero gaps give the one-sided limit of the distinct-time formula. Result
    has one axis per gap, in the order of ``gap_axes``.
    """
    if order not in (2, 3, 4):
        raise UnsupportedOrder(f"ordered cumulant grids exist for orders 2, 3, 4, got {order}")
    gaps = [np.asarray(axis, dtype=float) for axis in gap_axes]
    if len(gaps) != order - 1:
        raise UnsupportedOrder(f"order {order} needs {order - 1} gap axes, got {len(gaps)}")
    if any(np.any(axis < 0) for axis in gaps):
        raise NegativeTime("gaps must be non-negative")

    frame = ModalFrame(l)
    first = frame.decay(gaps[0]) * frame.start

    def c2(tau):
        return frame.decay(tau) @ frame.weights

    if order == 2:
        values = beta ** 4 * (first @ frame.finish)
    elif order == 3:
        last = frame.decay(gaps[1]) * frame.finish
        values = beta ** 6 * (first @ frame.coupling.T @ last.T)
    else:
        t1, t2, t3 = gaps
        inner = first @ frame.coupling.T
        middle = inner[:, None, :] * frame.decay(t2)[None, :, :]
        last = frame.decay(t3) * frame.finish
        compact = np.einsum("abk,jk,cj->abc", middle, frame.coupling, last, optimize=True)
        g1, g2, g3 = np.meshgrid(t1, t2, t3, indexing="ij")
        crossed = c2(g1 + g2) * c2(g2 + g3)
        nested = c2(g1 + g2 + g3) * c2(g2)
        values = beta ** 8 * (compact - crossed - nested)

    bound = IMAG_RESIDUE_TOL * max(float(np.max(np.abs(values), initial=0.0)), _scale(l, beta, order))
    residue = float(np.max(np.abs(np.imag(values)), initial=0.0))
    if residue > bound:
        raise ImaginaryResidue(complex(0, residue), bound)
    return np.real(values)


# Frequency domain


def _s2_values(frame, omegas, beta):
    omegas = np.asarray(omegas, dtype=float)
    lam = frame.eigenvalues
    plus = 1 / (-lam[None, :] - 1j * omegas[..., None])
    minus = 1 / (-lam[None, :] + 1j * omegas[..., None])
    return beta ** 4 * ((plus + minus) @ frame.weights)


def s2(l, omega, beta, include_shot_noise=False, frame=None):
    """Power spectrum beta^4 S_q(omega), plus beta^2/4 shot noise when requested."""
    frame = frame or ModalFrame(l)
    value = _s2_values(frame, np.array([omega]), beta)[0]
    value = _checked_real(value, _scale(l, beta, 2), "S2")
    if include_shot_noise:
        value += beta ** 2 / 4
    return value


def s3(l, omega1, omega2, beta, frame=None):
    """Bispectrum summed over the six orderings of (omega1, omega2, -omega1 - omega2)."""
    frame = frame or ModalFrame(l)
    freqs = (omega1, omega2, -omega1 - omega2)
    total = 0j
    for _, w2, w3 in itertools.permutations(freqs):
        total += frame.three_point(w2 + w3, w3)
    return beta ** 6 * total


def s4(l, omega1, omega2, omega3, beta, frame=None):
    """Trispectrum summed over the 24 orderings, including the pair-term correction."""
    frame = frame or ModalFrame(l)
    freqs = (omega1, omega2, omega3, -omega1 - omega2 - omega3)
    total = 0j
    for _, w2, w3, w4 in itertools.permutations(freqs):
        nu1, nu2, nu3 = w2 + w3 + w4, w3 + w4, w4
        total += frame.four_point(nu1, nu2, nu3) + frame.pair_correction(nu1, nu2, nu3)
    return beta ** 8 * total


def s4_correlation_cut(l, omega1, omega2, beta, frame=None):
    """Real S4(omega1, -omega1, omega2), the fourth-order noise correlation."""
    value = s4(l, omega1, -omega1, omega2, beta, frame=frame)
    return _checked_real(value, _scale(l, beta, 4), "S4 correlation cut")


def is_degenerate_cut_point(omega1, omega2, tol=1e-12):
    """Lines where the cut stops being a pure correlation: omega1 = +-omega2 or a zero axis."""
    return abs(abs(omega1) - abs(omega2)) <= tol or abs(omega1) <= tol or abs(omega2) <= tol


_worker_frame = None
_worker_liouvillian = None


def _init_worker(l):
    global _worker_frame, _worker_liouvillian
    _worker_liouvillian = l
    _worker_frame = ModalFrame(l)


def _grid_row(task):
    kind, omega1, axis2, beta = task
    row = np.empty(len(axis2), dtype=complex)
    for j, omega2 in enumerate(axis2):
        if kind == "s3":
            row[j] = s3(_worker_liouvillian, omega1, omega2, beta, frame=_worker_frame)
        else:
            row[j] = s4(_worker_liouvillian, omega1, -omega1, omega2, beta, frame=_worker_frame)
    # partial sums rarely repeat across rows
    _worker_frame.clear()
    return row


def _evaluate_rows(l, kind, axis1, axis2, beta, workers):
    tasks = [(kind, float(w1), np.asarray(axis2, dtype=float), beta) for w1 in axis1]
    if workers <= 1:
        _init_worker(l)
        return np.array([_grid_row(task) for task in tasks])
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(l,)) as executor:
        return np.array(list(executor.map(_grid_row, tasks)))


def s2_grid(l, omegas, beta, include_shot_noise=False, metadata=None):
    omegas = np.asarray(omegas, dtype=float)
    values = _s2_values(ModalFrame(l), omegas, beta)
    scale = _scale(l, beta, 2)
    residue = float(np.max(np.abs(values.imag), initial=0.0))
    bound = IMAG_RESIDUE_TOL * max(float(np.max(np.abs(values), initial=0.0)), scale)
    if residue > bound:
        raise ImaginaryResidue(complex(0, residue), bound)
    values = values.real
    if include_shot_noise:
        values = values + beta ** 2 / 4
    meta = dict(metadata or {}, shot_noise=bool(include_shot_noise))
    return SpectrumGrid(order=2, axes=(omegas,), values=values, beta=beta, metadata=meta)


def s3_grid(l, axis1, axis2, beta, workers=1, metadata=None):
    logger.info(f"Evaluating S3 on {len(axis1)} x {len(axis2)} points with {workers} worker(s)")
    values = _evaluate_rows(l, "s3", axis1, axis2, beta, workers)
    return SpectrumGrid(order=3, axes=(axis1, axis2), values=values, beta=beta, metadata=dict(metadata or {}))


def s4_cut_grid(l, axis1, axis2, beta, workers=1, metadata=None):
    logger.info(f"Evaluating S4 correlation cut on {len(axis1)} x {len(axis2)} points with {workers} worker(s)")
    values = _evaluate_rows(l, "s4-cut", axis1, axis2, beta, workers)
    scale = _scale(l, beta, 4)
    bound = IMAG_RESIDUE_TOL * max(float(np.max(np.abs(values), initial=0.0)), scale)
    residue = float(np.max(np.abs(values.imag), initial=0.0))
    if residue > bound:
        raise ImaginaryResidue(complex(0, residue), bound)
    degenerate = [[bool(is_degenerate_cut_point(w1, w2)) for w2 in axis2] for w1 in axis1]
    meta = dict(metadata or {}, degenerate_points=int(np.sum(degenerate)))
    grid = SpectrumGrid(order=4, axes=(axis1, axis2), values=values.real, beta=beta, kind="s4-correlation-cut", metadata=meta)
    grid.metadata["degenerate_mask"] = degenerate
    return grid


# Diagnostics


def gq_autocorrelation(l, tau, beta=None):
    """G_q(tau) = Tr[(A - <A>) G(|tau|) A rho0]; multiplied by beta^4 when beta is given."""
    a = l.meas_op
    x = propagate(l, abs(tau), a_super_apply(a, 0.0, l.rho0))
    value = np.trace((a - l.a_mean * np.eye(l.dim)) @ x)
    value = _checked_real(value, _scale(l, 1.0, 2), "G_q")
    return value if beta is None else beta ** 4 * value


def integrated_noise_check(l, beta, omega_max, n_points):
    """Trapezoid integral of beta^4 S_q over [-omega_max, omega_max]; approaches 2 pi beta^4 G_q(0)."""
    omegas = np.linspace(-omega_max, omega_max, int(n_points))
    values = _s2_values(ModalFrame(l), omegas, beta).real
    return float(integrate.trapezoid(values, omegas))


def power_spectrum_lorentzian(omega, omega_x, gamma):
    """S_q of a spin precessing at omega_x and decaying at gamma, measured along z."""
    omega = np.asarray(omega, dtype=float)
    return gamma / (gamma ** 2 + (omega - omega_x) ** 2) + gamma / (gamma ** 2 + (omega + omega_x) ** 2)


def zeno_strength_estimate(a, gamma, p=1.0):
    """Measurement strength beta^2 = p gamma a and the induced dephasing rate 2 beta^2."""
    if a <= 0 or gamma <= 0:
        raise ValueError(f"peak ratio and damping must be positive, got a={a}, gamma={gamma}")
    if not 0 < p <= 1:
        raise ValueError(f"fraction p must lie in (0, 1], got {p}")
    beta_sq = p * gamma * a
    return beta_sq, 2 * beta_sq


def susceptibility(l, omega, rho=None):
    """alpha(omega) = i Tr(A G(omega)[A rho - rho A]) using the Liouvillian as built."""
    rho = l.rho0 if rho is None else np.asarray(rho, dtype=complex)
    a = l.meas_op
    response = gprime_apply_freq(l, omega, a @ rho - rho @ a)
    return 1j * np.trace(a @ response)


def fdt_residual(l, omega, kt, rho=None):
    """Im alpha(omega) - S_q(omega) tanh(omega / 2kT); vanishes for a thermal equilibrium."""
    alpha = susceptibility(l, omega, rho=rho)
    s_q = s2(l, omega, 1.0)
    return float(alpha.imag - s_q * np.tanh(omega / (2 * kt)))
