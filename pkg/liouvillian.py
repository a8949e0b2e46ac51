"""Liouvillian assembly, steady state and (modified) propagators.

Units: hbar = 1 and all frequencies angular. The full generator is

    L rho = -i[H, rho] + sum_k D_k rho - (beta^2 / 2) [A, [A, rho]]

with the measurement damping term optional (weak-measurement mode builds with it
switched off and applies beta only as a prefactor in the spectra).
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from config import STEADY_ABS_FLOOR, STEADY_REL_TOL, STEADY_RESIDUAL_TOL
from errors import (
    DimensionMismatch,
    InvalidDensityMatrix,
    MultipleSteadyStates,
    NegativeTime,
    NonHermitianInput,
    NonPositiveTime,
    NoSteadyState,
    NotTracePreserving,
    UndampedMode,
)
from operators import (
    SpectralDecomposition,
    as_operator,
    check_density_matrix,
    commutator_superop,
    devectorize,
    eig_general,
    is_hermitian,
    sandwich_superop,
    trace_functional,
    vectorize,
)

logger = logging.getLogger(__name__)

DISSIPATOR_KINDS = ["isotropic", "lindblad", "custom"]


@dataclass(frozen=True)
class DissipatorSpec:
    """One environmental damping channel.

    ``isotropic`` relaxes subsystem ``subsystem`` of a ``dims`` tensor product
    towards ``rho_final``; ``lindblad`` is D[c] with jump operator ``operator``
    scaled by ``rate``; ``custom`` carries a ready superoperator ``matrix``.
    """

    kind: str
    rate: float = 0.0
    dims: Sequence[int] = ()
    subsystem: int = 0
    rho_final: Optional[np.ndarray] = None
    operator: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None

    def superoperator(self, dim):
        if self.rate < 0:
            raise ValueError(f"dissipator rate must be non-negative, got {self.rate}")
        if self.kind == "isotropic":
            dims = tuple(self.dims) or (dim,)
            return isotropic_spin_dissipator(dims, self.subsystem, self.rate, self.rho_final)
        if self.kind == "lindblad":
            return self.rate * lindblad_dissipator(self.operator)
        if self.kind == "custom":
            matrix = np.asarray(self.matrix, dtype=complex)
            if matrix.shape != (dim * dim, dim * dim):
                raise DimensionMismatch(f"custom superoperator has shape {matrix.shape}, expected {(dim * dim,) * 2}")
            return matrix
        raise ValueError(f"unknown dissipator kind {self.kind!r}; expected one of {DISSIPATOR_KINDS}")


@dataclass(frozen=True)
class Liouvillian:
    dim: int
    matrix: np.ndarray
    beta: float
    decomposition: SpectralDecomposition
    rho0: np.ndarray
    meas_op: np.ndarray
    a_mean: float
    measurement_damping: bool = True
    trace_vector: np.ndarray = field(default=None, repr=False)

    @property
    def eigenvalues(self):
        return self.decomposition.eigenvalues

    @property
    def steady_index(self):
        return self.decomposition.steady_index

    def with_rho0(self, rho):
        """Same generator, different reference state (moments are linear in it)."""
        rho = as_operator(rho)
        return replace(self, rho0=rho, a_mean=float(np.real(np.trace(self.meas_op @ rho))))


def _replace_factor(x, dims, target, rho_final):
    """Tr_target(x) with rho_final re-inserted at position target."""
    n = len(dims)
    tensor = x.reshape(tuple(dims) * 2)
    reduced = np.trace(tensor, axis1=target, axis2=n + target)
    full = np.multiply.outer(reduced, rho_final)
    full = np.moveaxis(full, 2 * (n - 1), target)
    full = np.moveaxis(full, 2 * n - 1, n + target)
    return full.reshape(x.shape)


def isotropic_spin_dissipator(dims, subsystem, gamma, rho_final):
    """Matrix of rho -> -gamma [rho - Tr_sub(rho) (x) rho_final] on the tensor factor ``subsystem``."""
    dims = tuple(int(d) for d in dims)
    if not 0 <= subsystem < len(dims):
        raise DimensionMismatch(f"subsystem {subsystem} out of range for dims {dims}")
    rho_final = check_density_matrix(rho_final, name="rho_final")
    if rho_final.shape[0] != dims[subsystem]:
        raise DimensionMismatch(f"rho_final has dimension {rho_final.shape[0]}, subsystem has {dims[subsystem]}")

    dim = int(np.prod(dims))
    replaced = np.zeros((dim * dim, dim * dim), dtype=complex)
    basis = np.zeros(dim * dim, dtype=complex)
    for j in range(dim * dim):
        basis[:] = 0
        basis[j] = 1
        replaced[:, j] = vectorize(_replace_factor(devectorize(basis), dims, subsystem, rho_final))
    return -gamma * (np.eye(dim * dim) - replaced)


def lindblad_dissipator(c):
    """Matrix of rho -> c rho c^dag - {c^dag c, rho} / 2."""
    c = as_operator(c)
    identity = np.eye(c.shape[0])
    cdc = c.conj().T @ c
    return sandwich_superop(c, c.conj().T) - 0.5 * sandwich_superop(cdc, identity) - 0.5 * sandwich_superop(identity, cdc)


def measurement_damping(a, beta):
    """Matrix of rho -> -(beta^2 / 2) [A, [A, rho]]."""
    a = as_operator(a)
    identity = np.eye(a.shape[0])
    a2 = a @ a
    return beta ** 2 * (sandwich_superop(a, a) - 0.5 * sandwich_superop(a2, identity) - 0.5 * sandwich_superop(identity, a2))


def a_super_matrix(a, offset=0.0):
    """Matrix of x -> (a x + x a) / 2 - offset x."""
    a = as_operator(a)
    identity = np.eye(a.shape[0])
    return 0.5 * (sandwich_superop(a, identity) + sandwich_superop(identity, a)) - offset * np.eye(a.shape[0] ** 2)


def a_super_apply(a, offset, x):
    a = as_operator(a)
    x = as_operator(x)
    if a.shape != x.shape:
        raise DimensionMismatch(f"measurement operator {a.shape} and argument {x.shape} differ")
    return (a @ x + x @ a) / 2 - offset * x


def thermal_state(h, kt):
    """Canonical state exp(-H/kT) / Z."""
    h = as_operator(h)
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    weights = np.exp(-(w - w[0]) / kt)
    rho = (v * (weights / weights.sum())) @ v.conj().T
    return (rho + rho.conj().T) / 2


def _steady_threshold(eigenvalues):
    scale = np.max(np.abs(eigenvalues), initial=0.0)
    return max(STEADY_REL_TOL * scale, STEADY_ABS_FLOOR)


def _steady_from_decomposition(decomposition, dim):
    eigenvalues = decomposition.eigenvalues
    threshold = _steady_threshold(eigenvalues)
    candidates = np.flatnonzero(np.abs(eigenvalues) <= threshold)
    if len(candidates) == 0:
        raise NoSteadyState(f"no eigenvalue within {threshold:.3e} of zero (closest {np.min(np.abs(eigenvalues)):.3e})")
    if len(candidates) > 1:
        raise MultipleSteadyStates(len(candidates))
    index = int(candidates[0])

    rho = devectorize(decomposition.eigenvectors[:, index])
    trace = np.trace(rho)
    if abs(trace) < 1e-12:
        raise NoSteadyState("kernel vector is traceless; no physical steady state")
    rho = rho / trace
    rho = (rho + rho.conj().T) / 2
    rho = rho / np.trace(rho).real
    lowest = np.linalg.eigvalsh(rho)[0]
    if lowest < -1e-8:
        raise InvalidDensityMatrix(f"steady state has negative eigenvalue {lowest:.3e}; check the dissipators")
    return index, rho


def build_liouvillian(h, dissipators, a, beta, include_measurement_damping=True):
    """Assemble the full generator, diagonalize it and extract the steady state."""
    h = as_operator(h)
    a = as_operator(a)
    if h.shape != a.shape:
        raise DimensionMismatch(f"Hamiltonian {h.shape} and measurement operator {a.shape} differ")
    if not is_hermitian(h):
        raise NonHermitianInput("Hamiltonian is not Hermitian")
    if not is_hermitian(a):
        raise NonHermitianInput("measurement operator is not Hermitian")

    dim = h.shape[0]
    matrix = -1j * commutator_superop(h)
    for spec in dissipators:
        matrix = matrix + spec.superoperator(dim)
    if include_measurement_damping and beta != 0:
        matrix = matrix + measurement_damping(a, beta)

    trace_vector = trace_functional(dim)
    scale = np.linalg.norm(matrix)
    leak = np.linalg.norm(trace_vector @ matrix)
    if leak > 1e-9 * max(scale, 1.0):
        raise NotTracePreserving(f"trace functional leaks {leak:.3e} through the generator")

    decomposition = eig_general(matrix)
    index, rho0 = _steady_from_decomposition(decomposition, dim)
    decomposition = replace(decomposition, steady_index=index)

    threshold = _steady_threshold(decomposition.eigenvalues)
    others = np.delete(decomposition.eigenvalues, index)
    if others.size and np.max(others.real) >= -threshold:
        raise UndampedMode(f"non-steady eigenvalue with Re = {np.max(others.real):.3e}; spectra would diverge")

    residual = np.linalg.norm(matrix @ vectorize(rho0))
    if residual > STEADY_RESIDUAL_TOL * max(scale, 1.0):
        logger.warning(f"Steady-state residual {residual:.3e} above tolerance")

    logger.debug(f"Built Liouvillian d={dim}, cond(Λ)={decomposition.condition:.2e}, slowest rate {-others.real.max() if others.size else 0:.3e}")
    return Liouvillian(
        dim=dim,
        matrix=matrix,
        beta=float(beta),
        decomposition=decomposition,
        rho0=rho0,
        meas_op=a,
        a_mean=float(np.real(np.trace(a @ rho0))),
        measurement_damping=bool(include_measurement_damping),
        trace_vector=trace_vector,
    )


def steady_state(l):
    """Steady state of ``l`` recomputed from its cached decomposition."""
    _, rho = _steady_from_decomposition(l.decomposition, l.dim)
    return rho


def _modal_apply(l, diagonal, x):
    decomposition = l.decomposition
    coefficients = decomposition.inverse @ vectorize(x)
    return devectorize(decomposition.eigenvectors @ (diagonal * coefficients))


def propagate(l, t, x):
    """G(t) x = exp(L t) x for t >= 0."""
    if t < 0:
        raise NegativeTime(f"propagator needs t >= 0, got {t}")
    x = as_operator(x)
    if t == 0:
        return x.copy()
    return _modal_apply(l, np.exp(l.eigenvalues * t), x)


def gprime_apply_time(l, t, x):
    """G'(t) x = G(t) x - rho0 Tr(x) for t > 0."""
    if t <= 0:
        raise NonPositiveTime(f"modified propagator needs t > 0, got {t}")
    diagonal = np.exp(l.eigenvalues * t)
    diagonal[l.steady_index] = 0
    return _modal_apply(l, diagonal, as_operator(x))


def resolvent_diagonal(l, omega):
    """Diagonal of G'(omega) in the eigenbasis: 1/(-lambda_j - i omega), steady mode 0."""
    eigenvalues = l.eigenvalues.copy()
    eigenvalues[l.steady_index] = -1.0
    diagonal = 1 / (-eigenvalues - 1j * omega)
    diagonal[l.steady_index] = 0
    return diagonal


def gprime_apply_freq(l, omega, x):
    """Fourier transform G'(omega) x = int_0^inf G'(t) x exp(i omega t) dt."""
    return _modal_apply(l, resolvent_diagonal(l, omega), as_operator(x))
