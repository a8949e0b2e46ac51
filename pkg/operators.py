"""Dense operator substrate: Kronecker products, column-stacking vectorization,
superoperator assembly, partial traces and the general eigendecomposition.

Operators are plain complex ``numpy`` arrays. A superoperator acting on a d x d
operator is a d^2 x d^2 matrix under the column-stacking convention

    vec(X)[j*d + i] = X[i, j],   vec(A X B) = (B^T kron A) vec(X).
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from config import DEFECTIVE_COND, HERMITIAN_TOL, POSITIVITY_TOL, RECONSTRUCTION_TOL, TRACE_TOL
from errors import DefectiveMatrix, DimensionMismatch, InvalidDensityMatrix, SpectraError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Right eigendecomposition M = Λ diag(λ) Λ⁻¹ sorted by descending real part."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    inverse: np.ndarray
    condition: float
    residual: float
    steady_index: Optional[int] = None

    @property
    def size(self):
        return len(self.eigenvalues)


def as_operator(x):
    """Coerce to a square complex matrix with finite entries."""
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionMismatch(f"operator must be square, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise SpectraError("operator has non-finite entries")
    return x


def is_hermitian(x, tol=HERMITIAN_TOL):
    return np.max(np.abs(x - x.conj().T), initial=0.0) <= tol


def check_density_matrix(rho, name="rho"):
    """Validate Hermiticity, unit trace and positivity; returns the array."""
    rho = as_operator(rho)
    if not is_hermitian(rho):
        raise InvalidDensityMatrix(f"{name} is not Hermitian")
    trace = np.trace(rho)
    if abs(trace - 1) > TRACE_TOL:
        raise InvalidDensityMatrix(f"{name} has trace {trace.real:.12f}, expected 1")
    lowest = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
    if lowest < -POSITIVITY_TOL:
        raise InvalidDensityMatrix(f"{name} has negative eigenvalue {lowest:.3e}")
    return rho


def kron(a, b):
    return np.kron(as_operator(a), as_operator(b))


def vectorize(x):
    """Column-stack a d x d operator into a length d^2 vector."""
    return as_operator(x).reshape(-1, order="F")


def devectorize(v):
    v = np.asarray(v, dtype=complex).ravel()
    d = int(round(np.sqrt(len(v))))
    if d * d != len(v):
        raise DimensionMismatch(f"vector length {len(v)} is not a perfect square")
    return v.reshape((d, d), order="F")


def sandwich_superop(l, r):
    """Matrix of X -> l X r, i.e. r^T kron l."""
    l = as_operator(l)
    r = as_operator(r)
    if l.shape != r.shape:
        raise DimensionMismatch(f"sandwich factors differ: {l.shape} vs {r.shape}")
    return np.kron(r.T, l)


def commutator_superop(h):
    """Matrix of X -> [h, X]."""
    identity = np.eye(h.shape[0])
    return sandwich_superop(h, identity) - sandwich_superop(identity, h)


def trace_functional(d):
    """Row vector t with t @ vec(X) = Tr X."""
    return np.eye(d, dtype=complex).reshape(-1, order="F")


def partial_trace(x, dims, keep="first"):
    """Trace out one factor of a bipartite operator on H_1 kron H_2."""
    x = as_operator(x)
    d1, d2 = dims
    if d1 * d2 != x.shape[0]:
        raise DimensionMismatch(f"dims {dims} do not factor dimension {x.shape[0]}")
    blocks = x.reshape(d1, d2, d1, d2)
    if keep == "first":
        return np.einsum("ijkj->ik", blocks)
    if keep == "second":
        return np.einsum("ijil->jl", blocks)
    raise ValueError(f"keep must be 'first' or 'second', got {keep!r}")


def eig_general(m):
    """Full right eigendecomposition of a general complex matrix.

    Eigenvalues are sorted by descending real part, ties broken by ascending
    |Im|. Raises DefectiveMatrix when the eigenvector matrix is too
    ill-conditioned to invert reliably.
    """
    m = as_operator(m)
    eigenvalues, eigenvectors = linalg.eig(m)
    order = np.lexsort((np.abs(eigenvalues.imag), -eigenvalues.real))
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]

    condition = np.linalg.cond(eigenvectors)
    if not np.isfinite(condition) or condition > DEFECTIVE_COND:
        raise DefectiveMatrix(condition)
    inverse = np.linalg.inv(eigenvectors)

    scale = np.linalg.norm(m)
    residual = np.linalg.norm((eigenvectors * eigenvalues) @ inverse - m)
    if residual > RECONSTRUCTION_TOL * max(scale, 1.0):
        raise DefectiveMatrix(condition)
    if condition > 1e8:
        logger.warning(f"Eigenvector matrix is ill-conditioned (cond={condition:.2e})")

    return SpectralDecomposition(
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        inverse=inverse,
        condition=float(condition),
        residual=float(residual),
    )


def spin_matrices(s):
    """Spin operators (S_x, S_y, S_z) in the |s, m> basis, m descending."""
    dim = int(round(2 * s + 1))
    if dim < 1 or abs(dim - (2 * s + 1)) > 1e-12:
        raise ValueError(f"spin must be a non-negative multiple of 1/2, got {s}")
    m = s - np.arange(dim)
    raising = np.zeros((dim, dim), dtype=complex)
    for i in range(1, dim):
        raising[i - 1, i] = np.sqrt(s * (s + 1) - m[i] * (m[i] + 1))
    lowering = raising.conj().T
    sx = (raising + lowering) / 2
    sy = (raising - lowering) / 2j
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def pauli():
    return tuple(2 * op for op in spin_matrices(0.5))


def check_vectorization_convention(seed=7):
    """Raise if vec(A X B) = (B^T kron A) vec(X) fails on a random triple."""
    rng = np.random.default_rng(seed)
    a, x, b = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    lhs = vectorize(a @ x @ b)
    rhs = sandwich_superop(a, b) @ vectorize(x)
    if np.max(np.abs(lhs - rhs)) > 1e-12:
        raise SpectraError("column-stacking vectorization convention is broken")
