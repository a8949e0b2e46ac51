"""Euler-Maruyama integration of the stochastic master equation

    d rho = L rho dt + beta (A rho + rho A - 2 rho Tr(A rho)) dW
    z_k   = beta^2 Tr(A rho_k) + (beta / 2) g_k / sqrt(dt),   dW_k = sqrt(dt) g_k

plus the trajectory file format.

Reproducibility: the RNG is numpy's Generator(PCG64(seed)). Exactly one
standard normal g_k is consumed per step, drawn in consecutive blocks of
SIM_BLOCK samples; g_k drives both the back-action and the detector noise.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from config import SIM_BLOCK, SME_BLOWUP_NORM, SME_NEGATIVITY_WARN, SME_STABILITY, TRAJECTORY_MAGIC
from errors import SpectraError, StabilityViolation, StateBlowup
from liouvillian import Liouvillian
from models import build_model_liouvillian, model_hash, single_spin_model
from operators import check_density_matrix, devectorize, sandwich_superop, vectorize
from polyspectra import s2

logger = logging.getLogger(__name__)

HEADER_DTYPE = np.dtype(
    [
        ("magic", "S8"),
        ("dim", "<u4"),
        ("dt", "<f8"),
        ("steps", "<u8"),
        ("seed", "<u8"),
        ("beta", "<f8"),
        ("model_hash", "S64"),
    ]
)


@dataclass(frozen=True)
class SimConfig:
    dt: float
    steps: int
    seed: int
    beta: float
    record_rho_every: Optional[int] = None
    initial_state: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must fit an unsigned 64-bit integer, got {self.seed}")
        if self.record_rho_every is not None and self.record_rho_every < 1:
            raise ValueError("record_rho_every must be a positive step count")


@dataclass
class TrajectoryRecord:
    dt: float
    z_samples: np.ndarray
    seed: int
    beta: float
    dim: int
    model_hash: str = ""
    snapshot_every: Optional[int] = None
    snapshots: Optional[np.ndarray] = None
    expectations: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def steps(self):
        return len(self.z_samples)

    @property
    def duration(self):
        return self.steps * self.dt


def _stochastic_term(rho, a):
    return a @ rho + rho @ a - 2 * rho * np.trace(a @ rho).real


def sme_step(rho, l, a, beta, dt, dw, step=0):
    """One Ito step from ``rho``; ``l`` is a Liouvillian or its raw generator matrix."""
    generator = l.matrix if isinstance(l, Liouvillian) else np.asarray(l)
    rho = np.asarray(rho, dtype=complex)
    drift = devectorize(generator @ vectorize(rho))
    new = rho + drift * dt + beta * _stochastic_term(rho, a) * dw
    norm = np.linalg.norm(new)
    if not np.isfinite(norm) or norm > SME_BLOWUP_NORM:
        raise StateBlowup(step, norm)
    new = (new + new.conj().T) / 2
    return new / np.trace(new).real


@njit(cache=True)
def _integrate_block(v, generator, s_a, t_a, swap, diag, beta, dt, noise, z_out, every, first_step, snapshots, blowup):
    """Advance ``v`` in place over one block of normals.

    Returns (failed step or -1, norm at failure, max |trace - 1| before
    renormalization, snapshots written).
    """
    sqrt_dt = np.sqrt(dt)
    max_trace_dev = 0.0
    written = 0
    for k in range(noise.shape[0]):
        step = first_step + k
        if every > 0 and step % every == 0:
            snapshots[written, :] = v
            written += 1
        g = noise[k]
        expect = np.sum(t_a * v).real
        z_out[k] = beta * beta * expect + 0.5 * beta * g / sqrt_dt
        new = v + (generator @ v) * dt + beta * (s_a @ v - 2.0 * expect * v) * (sqrt_dt * g)
        norm = np.sqrt(np.sum(np.abs(new) ** 2))
        if not np.isfinite(norm) or norm > blowup:
            return step, norm, max_trace_dev, written
        new = 0.5 * (new + np.conj(new[swap]))
        trace = np.sum(new[diag]).real
        if abs(trace - 1.0) > max_trace_dev:
            max_trace_dev = abs(trace - 1.0)
        v[:] = new / trace
    return -1, 0.0, max_trace_dev, written


def stability_bound(l, beta):
    """dt * (2 beta^2 + max|Re lambda|) for unit dt."""
    return 2 * beta ** 2 + float(np.max(np.abs(l.eigenvalues.real)))


def simulate(model, cfg, l=None):
    """Integrate one trajectory of ``model``; the generator always carries measurement damping."""
    if l is None:
        l = build_model_liouvillian(model, cfg.beta, include_measurement_damping=True)
    rate = stability_bound(l, cfg.beta)
    if cfg.dt * rate > SME_STABILITY:
        raise StabilityViolation(f"dt={cfg.dt} too large: dt*(2β²+max|Re λ|) = {cfg.dt * rate:.3f} > {SME_STABILITY}")

    dim = l.dim
    a = np.asarray(model.a, dtype=complex)
    identity = np.eye(dim)
    s_a = np.ascontiguousarray(sandwich_superop(a, identity) + sandwich_superop(identity, a))
    t_a = np.ascontiguousarray(vectorize(a.T))
    generator = np.ascontiguousarray(l.matrix)
    cols, rows = np.divmod(np.arange(dim * dim), dim)
    # vec index j*d + i holds X[i, j]; swap maps it to the transposed entry
    swap = rows * dim + cols
    diag = np.arange(dim) * (dim + 1)

    initial = l.rho0 if cfg.initial_state is None else check_density_matrix(cfg.initial_state, name="initial_state")
    v = np.ascontiguousarray(vectorize(initial).copy())
    every = cfg.record_rho_every or 0
    snapshots = []
    z = np.empty(cfg.steps)
    rng = np.random.default_rng(cfg.seed)
    max_trace_dev = 0.0
    min_eigenvalue = float(np.linalg.eigvalsh(initial)[0])

    logger.info(f"Simulating {cfg.steps} steps (d={dim}, dt={cfg.dt}, β={cfg.beta}, seed={cfg.seed})")
    for start in range(0, cfg.steps, SIM_BLOCK):
        count = min(SIM_BLOCK, cfg.steps - start)
        noise = rng.standard_normal(count)
        block_snaps = np.empty((count // every + 1 if every else 0, dim * dim), dtype=complex)
        failed, norm, trace_dev, written = _integrate_block(
            v, generator, s_a, t_a, swap, diag, cfg.beta, cfg.dt, noise, z[start:start + count], every, start, block_snaps, SME_BLOWUP_NORM
        )
        if failed >= 0:
            raise StateBlowup(int(failed), float(norm))
        max_trace_dev = max(max_trace_dev, trace_dev)
        if written:
            snapshots.append(block_snaps[:written])

        lowest = float(np.linalg.eigvalsh(devectorize(v))[0])
        min_eigenvalue = min(min_eigenvalue, lowest)

    if not np.all(np.isfinite(z)):
        raise SpectraError("simulation produced non-finite detector samples")

    snaps = None
    expectations = None
    if snapshots:
        snaps = np.array([devectorize(s) for s in np.concatenate(snapshots)])
        expectations = np.einsum("ij,nji->n", a, snaps).real
        min_eigenvalue = min(min_eigenvalue, float(np.min(np.linalg.eigvalsh(snaps)[:, 0])))
    if min_eigenvalue < SME_NEGATIVITY_WARN:
        logger.warning(f"State eigenvalue dipped to {min_eigenvalue:.3f}; consider a smaller dt")

    return TrajectoryRecord(
        dt=cfg.dt,
        z_samples=z,
        seed=cfg.seed,
        beta=cfg.beta,
        dim=dim,
        model_hash=model_hash(model),
        snapshot_every=cfg.record_rho_every,
        snapshots=snaps,
        expectations=expectations,
        diagnostics={"max_trace_deviation": max_trace_dev, "min_eigenvalue": min_eigenvalue},
    )


def lemma_check(model, beta, n_draws, rho=None, dt=0.01, seed=0):
    """Max-norm deviation of the Monte-Carlo mean of rho' z from (beta^2 / 2)(A rho + rho A)."""
    l = build_model_liouvillian(model, beta, include_measurement_damping=True)
    rho = l.rho0 if rho is None else np.asarray(rho, dtype=complex)
    a = np.asarray(model.a, dtype=complex)
    g = np.random.default_rng(seed).standard_normal(int(n_draws))

    drift = devectorize(l.matrix @ vectorize(rho))
    expect = np.trace(a @ rho).real
    z = beta ** 2 * expect + 0.5 * beta * g / np.sqrt(dt)
    # rho' = base + noise_dir * sqrt(dt) g is affine in g, so only two moments of z are needed
    base = rho + drift * dt
    noise_dir = beta * _stochastic_term(rho, a) * np.sqrt(dt)
    mean = base * z.mean() + noise_dir * np.mean(g * z)
    target = 0.5 * beta ** 2 * (a @ rho + rho @ a)
    return float(np.max(np.abs(mean - target)))


def write_trajectory(record, path):
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = TRAJECTORY_MAGIC
    header["dim"] = record.dim
    header["dt"] = record.dt
    header["steps"] = record.steps
    header["seed"] = record.seed
    header["beta"] = record.beta
    header["model_hash"] = record.model_hash.encode("ascii")[:64]
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(np.asarray(record.z_samples, dtype="<f8").tobytes())

    sidecar = {
        "diagnostics": record.diagnostics,
        "snapshot_every": record.snapshot_every,
        "expectations": None if record.expectations is None else record.expectations.tolist(),
    }
    with open(f"{path}.json", "w") as f:
        json.dump(sidecar, f, indent=2)
    logger.info(f"Saved trajectory ({record.steps} samples) to {path}")


def read_trajectory(path):
    with open(path, "rb") as f:
        header = np.frombuffer(f.read(HEADER_DTYPE.itemsize), dtype=HEADER_DTYPE)
        if header.size != 1 or header["magic"][0] != TRAJECTORY_MAGIC:
            raise SpectraError(f"{path} is not a trajectory file")
        steps = int(header["steps"][0])
        samples = np.frombuffer(f.read(8 * steps), dtype="<f8")
    if samples.size != steps:
        raise SpectraError(f"{path} is truncated: expected {steps} samples, found {samples.size}")

    sidecar = {}
    try:
        with open(f"{path}.json", "r") as f:
            sidecar = json.load(f)
    except FileNotFoundError:
        logger.warning(f"No sidecar next to {path}; diagnostics unavailable")

    expectations = sidecar.get("expectations")
    return TrajectoryRecord(
        dt=float(header["dt"][0]),
        z_samples=samples.astype(float),
        seed=int(header["seed"][0]),
        beta=float(header["beta"][0]),
        dim=int(header["dim"][0]),
        model_hash=header["model_hash"][0].decode("ascii"),
        snapshot_every=sidecar.get("snapshot_every"),
        expectations=None if expectations is None else np.asarray(expectations),
        diagnostics=sidecar.get("diagnostics", {}),
    )


def expectation_trace(record):
    """(times, Tr(A rho)) at the recorded snapshots."""
    if record.expectations is None or not record.snapshot_every:
        raise SpectraError("trajectory was simulated without state snapshots")
    times = np.arange(len(record.expectations)) * record.snapshot_every * record.dt
    return times, np.asarray(record.expectations)


def zeno_sweep(params, ratios=(0.1, 1.0, 10.0)):
    """Analytic Zeno table for a single spin: S_q at omega_x relative to S_q(0) per 2 beta^2 / omega_x."""
    omega_x = float(np.linalg.norm(params.omega))
    bundle = single_spin_model(params)
    rows = []
    for ratio in ratios:
        beta = np.sqrt(ratio * omega_x / 2)
        l = build_model_liouvillian(bundle, beta, include_measurement_damping=True)
        peak = s2(l, omega_x, 1.0)
        zero = s2(l, 0.0, 1.0)
        rows.append({"ratio": ratio, "beta": float(beta), "peak": peak, "zero": zero, "relative": peak / zero})
        logger.info(f"Zeno ratio {ratio}: S(ω_x)/S(0) = {peak / zero:.4f}")
    return rows
