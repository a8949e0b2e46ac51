"""Model builders: the single precessing spin, the ZnO:In electron-nuclear
spin pair, a thermal two-level system, seeded random Lindblad models and
user-supplied JSON models.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from config import (
    ELECTRON_GYRO,
    ELECTRON_RELAX_NS,
    HYPERFINE_HZ,
    HYPERFINE_MODES,
    KB_OVER_HBAR,
    NUCLEAR_FINAL_STATES,
    NUCLEAR_GYRO,
    NUCLEAR_RELAX_NS,
    NUCLEAR_SPIN,
    QUADRUPOLE_HZ,
    ZNO_TIME_UNIT_S,
)
from errors import ConfigError, DimensionMismatch
from liouvillian import DissipatorSpec, build_liouvillian, thermal_state
from operators import as_operator, is_hermitian, pauli, spin_matrices

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SingleSpinParams:
    omega: Sequence[float] = (1.0, 0.0, 0.0)
    gamma: float = 0.1

    def __post_init__(self):
        if len(self.omega) != 3:
            raise ValueError(f"omega must have three components, got {self.omega}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")


@dataclass(frozen=True)
class SpinPairParams:
    """Electron spin 1/2 bound to a spin-9/2 indium nucleus.

    The field is either given explicitly as ``b_vec`` (Tesla) or as a
    magnitude tilted by ``field_angle_deg`` out of the xy-plane within the
    xz-plane. Rates are in 1/ns.
    """

    b_magnitude: float = 0.1
    field_angle_deg: float = 0.0
    b_vec: Optional[Sequence[float]] = None
    temperature: float = 10.0
    gamma_e: float = ELECTRON_RELAX_NS
    gamma_n: float = NUCLEAR_RELAX_NS
    hyperfine_mode: str = "isotropic"
    rho_n_final: str = "mixed"
    electron_gyro: float = ELECTRON_GYRO
    nuclear_gyro: float = NUCLEAR_GYRO
    hyperfine_hz: float = HYPERFINE_HZ
    quadrupole_hz: float = QUADRUPOLE_HZ

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.gamma_e < 0 or self.gamma_n < 0:
            raise ValueError("relaxation rates must be non-negative")
        if self.hyperfine_mode not in HYPERFINE_MODES:
            raise ValueError(f"hyperfine_mode must be one of {HYPERFINE_MODES}, got {self.hyperfine_mode!r}")
        if self.rho_n_final not in NUCLEAR_FINAL_STATES:
            raise ValueError(f"rho_n_final must be one of {NUCLEAR_FINAL_STATES}, got {self.rho_n_final!r}")

    @property
    def field_vector(self):
        if self.b_vec is not None:
            return np.asarray(self.b_vec, dtype=float)
        phi = np.deg2rad(self.field_angle_deg)
        return self.b_magnitude * np.array([np.cos(phi), 0.0, np.sin(phi)])


@dataclass(frozen=True)
class ModelBundle:
    h: np.ndarray
    a: np.ndarray
    dissipators: tuple
    dim: int
    name: str = "custom"
    labels: tuple = ()
    dims: tuple = ()
    time_unit_s: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.h.shape != (self.dim, self.dim) or self.a.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"model {self.name!r}: H {self.h.shape} and A {self.a.shape} must be {self.dim}x{self.dim}")
        if not (is_hermitian(self.h) and is_hermitian(self.a)):
            raise ValueError(f"model {self.name!r}: H and A must be Hermitian")


def electron_zeeman_frequency(b_tesla, gyro=ELECTRON_GYRO):
    """Electron Larmor frequency in rad/ns."""
    return gyro * b_tesla * ZNO_TIME_UNIT_S


def _kt_per_ns(temperature):
    return KB_OVER_HBAR * temperature * ZNO_TIME_UNIT_S


def single_spin_model(p):
    sx, sy, sz = pauli()
    h = 0.5 * (p.omega[0] * sx + p.omega[1] * sy + p.omega[2] * sz)
    relax = DissipatorSpec(kind="isotropic", rate=p.gamma, dims=(2,), subsystem=0, rho_final=np.eye(2) / 2)
    return ModelBundle(
        h=h,
        a=sz,
        dissipators=(relax,),
        dim=2,
        name="single-spin",
        labels=("up", "down"),
        dims=(2,),
        params={"omega": list(p.omega), "gamma": p.gamma},
    )


def zno_indium_model(p):
    """Spin pair in rad/ns with the nucleus as first tensor factor.

    H = w_e B.s + A I.s + P I_z^2 - w_n B.I, measured through sigma_z of the electron.
    """
    nuclear_dim = int(round(2 * NUCLEAR_SPIN + 1))
    nuc = [np.kron(op, np.eye(2)) for op in spin_matrices(NUCLEAR_SPIN)]
    ele_local = spin_matrices(0.5)
    ele = [np.kron(np.eye(nuclear_dim), op) for op in ele_local]

    field_vec = p.field_vector
    w_e = p.electron_gyro * field_vec * ZNO_TIME_UNIT_S
    w_n = p.nuclear_gyro * field_vec * ZNO_TIME_UNIT_S
    hyperfine = 2 * np.pi * p.hyperfine_hz * ZNO_TIME_UNIT_S
    quadrupole = 2 * np.pi * p.quadrupole_hz * ZNO_TIME_UNIT_S

    if p.hyperfine_mode == "isotropic":
        coupling = sum(i_op @ s_op for i_op, s_op in zip(nuc, ele))
    else:
        coupling = nuc[0] @ ele[0]
    h = sum(w * s for w, s in zip(w_e, ele)) + hyperfine * coupling + quadrupole * nuc[2] @ nuc[2]
    h = h - sum(w * i for w, i in zip(w_n, nuc))

    kt = _kt_per_ns(p.temperature)
    rho_e = thermal_state(sum(w * s for w, s in zip(w_e, ele_local)), kt)
    if p.rho_n_final == "thermal":
        rho_n = thermal_state(-sum(w * i for w, i in zip(w_n, spin_matrices(NUCLEAR_SPIN))), kt)
    else:
        rho_n = np.eye(nuclear_dim) / nuclear_dim

    dims = (nuclear_dim, 2)
    dissipators = (
        DissipatorSpec(kind="isotropic", rate=p.gamma_e, dims=dims, subsystem=1, rho_final=rho_e),
        DissipatorSpec(kind="isotropic", rate=p.gamma_n, dims=dims, subsystem=0, rho_final=rho_n),
    )
    a = 2 * ele[2]
    m_i = NUCLEAR_SPIN - np.arange(nuclear_dim)
    labels = tuple(f"mI={mi:+.1f},ms={ms:+.1f}" for mi in m_i for ms in (0.5, -0.5))
    logger.debug(f"ZnO:In model at B={field_vec.tolist()} T, electron Larmor {np.linalg.norm(w_e):.3f} rad/ns")
    return ModelBundle(
        h=h,
        a=a,
        dissipators=dissipators,
        dim=2 * nuclear_dim,
        name="zno",
        labels=labels,
        dims=dims,
        time_unit_s=ZNO_TIME_UNIT_S,
        params={
            "b_vec": field_vec.tolist(),
            "temperature": p.temperature,
            "gamma_e": p.gamma_e,
            "gamma_n": p.gamma_n,
            "hyperfine_mode": p.hyperfine_mode,
            "rho_n_final": p.rho_n_final,
        },
    )


def thermal_two_level_model(omega0, gamma, kt):
    """H = omega0 sigma_z / 2 relaxing to its canonical state; measured along x.

    Emission at rate gamma and absorption at gamma exp(-omega0/kT) keep the
    canonical state stationary.
    """
    sx, _, sz = pauli()
    lowering = np.array([[0, 0], [1, 0]], dtype=complex)
    dissipators = (
        DissipatorSpec(kind="lindblad", rate=gamma, operator=lowering),
        DissipatorSpec(kind="lindblad", rate=gamma * np.exp(-omega0 / kt), operator=lowering.conj().T),
    )
    return ModelBundle(
        h=0.5 * omega0 * sz,
        a=sx,
        dissipators=dissipators,
        dim=2,
        name="thermal-two-level",
        dims=(2,),
        params={"omega0": omega0, "gamma": gamma, "kT": kt},
    )


def random_lindblad_model(dim, seed, jumps=2):
    """Random Hermitian H and A with a few random jump operators; generically ergodic."""
    rng = np.random.default_rng(seed)

    def random_matrix():
        return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))

    h = random_matrix()
    a = random_matrix()
    dissipators = tuple(
        DissipatorSpec(kind="lindblad", rate=float(rng.uniform(0.2, 1.0)), operator=random_matrix() / np.sqrt(dim))
        for _ in range(jumps)
    )
    return ModelBundle(
        h=(h + h.conj().T) / 4,
        a=(a + a.conj().T) / 4,
        dissipators=dissipators,
        dim=dim,
        name=f"random-{dim}",
        dims=(dim,),
        params={"seed": seed, "jumps": jumps},
    )


def build_model_liouvillian(bundle, beta, include_measurement_damping=True):
    return build_liouvillian(bundle.h, bundle.dissipators, bundle.a, beta, include_measurement_damping=include_measurement_damping)


def bloch_form_check(l, beta, params):
    """Max deviation between the Bloch-vector dynamics of ``l`` and
    ds/dt = omega x s - gamma s - 2 beta^2 diag(1, 1, 0) s."""
    if l.dim != 2:
        raise DimensionMismatch(f"Bloch form needs a two-level Liouvillian, got d={l.dim}")
    sigmas = pauli()
    identity = np.eye(2)

    def generator(rho):
        return (l.matrix @ rho.reshape(-1, order="F")).reshape((2, 2), order="F")

    drift = np.array([np.trace(s @ generator(identity / 2)).real for s in sigmas])
    actual = np.array([[np.trace(sj @ generator(sk / 2)).real for sk in sigmas] for sj in sigmas])

    wx, wy, wz = params.omega
    precession = np.array([[0, -wz, wy], [wz, 0, -wx], [-wy, wx, 0]])
    expected = precession - params.gamma * np.eye(3) - 2 * beta ** 2 * np.diag([1.0, 1.0, 0.0])
    return float(max(np.max(np.abs(actual - expected)), np.max(np.abs(drift))))


def _matrix_from_json(entry, what):
    if isinstance(entry, dict):
        real = np.asarray(entry.get("real", 0.0), dtype=float)
        imag = np.asarray(entry.get("imag", np.zeros_like(real)), dtype=float)
        matrix = real + 1j * imag
    else:
        matrix = np.asarray(entry, dtype=complex)
    try:
        return as_operator(matrix)
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from exc


def model_from_dict(data):
    """Build a ModelBundle from the JSON layout used by load_custom_model."""
    try:
        h = _matrix_from_json(data["h"], "h")
        a = _matrix_from_json(data["a"], "a")
    except KeyError as exc:
        raise ConfigError(f"custom model is missing {exc}") from exc

    dissipators = []
    for i, entry in enumerate(data.get("dissipators", [])):
        kind = entry.get("kind")
        if kind == "lindblad":
            spec = DissipatorSpec(kind=kind, rate=float(entry.get("rate", 1.0)), operator=_matrix_from_json(entry["operator"], f"dissipators[{i}].operator"))
        elif kind == "isotropic":
            spec = DissipatorSpec(
                kind=kind,
                rate=float(entry["rate"]),
                dims=tuple(entry.get("dims", [h.shape[0]])),
                subsystem=int(entry.get("subsystem", 0)),
                rho_final=_matrix_from_json(entry["rho_final"], f"dissipators[{i}].rho_final"),
            )
        elif kind == "custom":
            matrix = entry["matrix"]
            real = np.asarray(matrix.get("real"), dtype=float)
            imag = np.asarray(matrix.get("imag", np.zeros_like(real)), dtype=float)
            spec = DissipatorSpec(kind=kind, matrix=real + 1j * imag)
        else:
            raise ConfigError(f"dissipators[{i}]: unknown kind {kind!r}")
        dissipators.append(spec)

    return ModelBundle(
        h=h,
        a=a,
        dissipators=tuple(dissipators),
        dim=h.shape[0],
        name=data.get("name", "custom"),
        dims=tuple(data.get("dims", [h.shape[0]])),
        time_unit_s=float(data.get("time_unit_s", 1.0)),
    )


def load_custom_model(path):
    """Read a model from JSON: H and A as {"real", "imag"} nested lists plus a dissipator list."""
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    logger.info(f"Loaded custom model from {path}")
    return model_from_dict(data)


def model_hash(bundle):
    """sha256 over H, A and every dissipator superoperator."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(bundle.h, dtype=complex).tobytes())
    digest.update(np.ascontiguousarray(bundle.a, dtype=complex).tobytes())
    for spec in bundle.dissipators:
        digest.update(spec.kind.encode())
        digest.update(np.ascontiguousarray(spec.superoperator(bundle.dim), dtype=complex).tobytes())
    return digest.hexdigest()
