#!/usr/bin/env python3
"""Polyspectra of continuously measured quantum systems - command-line entry point."""
import argparse
import logging
import os
import sys

import numpy as np

from config import CONFIG_PATH, EXIT_ERROR, EXIT_OK, EXIT_VALIDATION_FAILED, LOG_LEVEL, TASKS, WORKERS
from errors import ConfigError, SpectraError
from estimators import FrameSpec, estimate_s2, estimate_s3, estimate_s4_corr, frame_fft
from models import build_model_liouvillian, model_hash
from operators import check_vectorization_convention
from output import build_metadata, format_report, write_estimate, write_report, write_spectrum
from polyspectra import s2_grid, s3_grid, s4_cut_grid
from run_config import RunConfig, build_bundle, load_run_config
from sme import SimConfig, read_trajectory, simulate, write_trajectory
from validation import rank_checks, run_validation

logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    datefmt="%H:%M:%S",
)
logger = logging.getLogger(__name__)


def _output_name(cfg, suffix):
    return cfg.output["name"] or f"{cfg.model['type']}_{suffix}"


def grid_axes(grid):
    """Angular-frequency axes for the grid section (ordinary frequency in the file)."""
    axis1 = 2 * np.pi * np.linspace(grid["f_min"], grid["f_max"], int(grid["points"]))
    if grid["order"] == 2:
        return (axis1,)
    if grid.get("f2_min") is None:
        return axis1, axis1.copy()
    points2 = int(grid.get("points2") or grid["points"])
    return axis1, 2 * np.pi * np.linspace(grid["f2_min"], grid["f2_max"], points2)


def run_spectrum(cfg, workers=WORKERS):
    """Evaluate the analytic spectrum the config asks for and write it out."""
    order = cfg.grid["order"]
    measurement = cfg.measurement

    logger.info(f"Step 1/3: Building {cfg.model['type']} model")
    bundle = build_bundle(cfg.model)
    l = build_model_liouvillian(bundle, measurement["beta"], measurement["include_measurement_damping"])
    logger.info(f"Liouvillian of dimension {l.dim ** 2}, slowest decay {-np.sort(l.eigenvalues.real)[-2]:.3e}")

    logger.info(f"Step 2/3: Evaluating order-{order} spectrum")
    axes = grid_axes(cfg.grid)
    metadata = build_metadata(
        order,
        "s4-correlation-cut" if order == 4 else "full",
        measurement["beta"],
        model_hash=model_hash(bundle),
        seed=cfg.sim["seed"],
        grid=cfg.grid,
        extra={"model": cfg.model, "measurement": measurement},
    )
    if order == 2:
        grid = s2_grid(l, axes[0], measurement["beta"], include_shot_noise=measurement["include_shot_noise"], metadata=metadata)
    elif order == 3:
        grid = s3_grid(l, axes[0], axes[1], measurement["beta"], workers=workers, metadata=metadata)
    else:
        grid = s4_cut_grid(l, axes[0], axes[1], measurement["beta"], workers=workers, metadata=metadata)
        if grid.metadata["degenerate_points"]:
            logger.warning(f"{grid.metadata['degenerate_points']} grid points sit on degenerate lines (w1 = +-w2 or 0)")

    logger.info("Step 3/3: Writing spectrum")
    return write_spectrum(grid, cfg.output["dir"], _output_name(cfg, f"s{order}"), cfg.output["format"])


def run_simulate(cfg):
    """Integrate one SME trajectory and save it in the binary trajectory format."""
    sim = cfg.sim
    logger.info(f"Step 1/2: Simulating {cfg.model['type']} trajectory")
    bundle = build_bundle(cfg.model)
    record = simulate(
        bundle,
        SimConfig(dt=sim["dt"], steps=int(sim["steps"]), seed=int(sim["seed"]), beta=cfg.measurement["beta"], record_rho_every=sim["record_rho_every"]),
    )
    logger.info(
        f"Max trace deviation {record.diagnostics['max_trace_deviation']:.2e}, "
        f"min eigenvalue {record.diagnostics['min_eigenvalue']:.3f}"
    )

    logger.info("Step 2/2: Writing trajectory")
    os.makedirs(cfg.output["dir"], exist_ok=True)
    path = os.path.join(cfg.output["dir"], f"{_output_name(cfg, 'trajectory')}.smt")
    write_trajectory(record, path)
    return path


def _correlation_axes(frames, max_bin):
    """Disjoint bin sets (odd / even) so no pair lands on w1 = +-w2."""
    step = 2 * np.pi / (frames.spec.frame_length * frames.dt)
    bins = np.arange(1, max_bin)
    return step * bins[bins % 2 == 1], step * bins[bins % 2 == 0]


def run_estimate(cfg):
    """Estimate the configured order from a saved trajectory (or a fresh simulation)."""
    order = cfg.grid["order"]
    est = cfg.estimate

    logger.info("Step 1/3: Loading detector record")
    if est["trajectory"]:
        record = read_trajectory(est["trajectory"])
        logger.info(f"Read {record.steps} samples from {est['trajectory']} (seed {record.seed})")
    else:
        logger.info("No trajectory given, simulating one from the sim section")
        record = read_trajectory(run_simulate(cfg))

    logger.info(f"Step 2/3: Estimating order-{order} spectrum")
    spec = FrameSpec(frame_length=int(est["frame_length"]), window=est["window"], frames_per_estimate=int(est["frames_per_estimate"]))
    frames = frame_fft(record, spec)
    max_bin = est["max_bin"] or spec.frame_length // 4
    if order == 2:
        estimate = estimate_s2(frames)
    elif order == 3:
        estimate = estimate_s3(frames, max_bin=max_bin)
    else:
        axis1, axis2 = _correlation_axes(frames, max_bin)
        estimate = estimate_s4_corr(frames, omega1=axis1, omega2=axis2)
    logger.info(f"Used {estimate.n_frames} of {frames.n_frames} frames")

    estimate.metadata = build_metadata(
        order,
        "estimate",
        record.beta,
        model_hash=record.model_hash,
        seed=record.seed,
        grid={"frame_length": spec.frame_length, "frames_per_estimate": spec.frames_per_estimate, "window": spec.window, "dt": record.dt},
    )

    logger.info("Step 3/3: Writing estimate")
    return write_estimate(estimate, cfg.output["dir"], _output_name(cfg, f"estimate_s{order}"), cfg.output["format"])


def run_validate(cfg):
    """Run every oracle suite and write the JSON report."""
    logger.info("Step 1/2: Running validation suites")
    report = run_validation()

    logger.info("Step 2/2: Writing report")
    write_report(report, cfg.output["dir"])
    print(format_report(report))
    if not report["passed"]:
        worst = rank_checks(report)[0]
        logger.error(f"Validation failed; worst check {worst['name']} at {worst['deviation']:.3e} (tolerance {worst['tolerance']:.1e})")
    return report


def apply_overrides(cfg, args):
    data = cfg.to_dict()
    data["task"] = args.task
    if args.seed is not None:
        data["sim"]["seed"] = args.seed
    if args.order is not None:
        data["grid"]["order"] = args.order
    if args.out is not None:
        data["output"]["dir"] = args.out
    return RunConfig.from_dict(data)


def load_config(path, explicit):
    if os.path.exists(path):
        return load_run_config(path)
    if explicit:
        raise ConfigError(f"config file {path} not found")
    logger.info(f"No {path}; using built-in defaults")
    return RunConfig()


def build_parser():
    parser = argparse.ArgumentParser(description="Polyspectra of continuously measured quantum systems")
    parser.add_argument("task", choices=TASKS, help="What to run")
    parser.add_argument("--config", help=f"Run configuration JSON (default: {CONFIG_PATH})")
    parser.add_argument("--out", help="Output directory (overrides output.dir)")
    parser.add_argument("--workers", type=int, default=WORKERS, help="Worker processes for grid evaluation")
    parser.add_argument("--seed", type=int, help="Simulation seed (overrides sim.seed)")
    parser.add_argument("--order", type=int, choices=[2, 3, 4], help="Spectrum order (overrides grid.order)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)

    try:
        check_vectorization_convention()
        cfg = apply_overrides(load_config(args.config or CONFIG_PATH, explicit=args.config is not None), args)

        if cfg.task == "spectrum":
            run_spectrum(cfg, workers=args.workers)
        elif cfg.task == "simulate":
            run_simulate(cfg)
        elif cfg.task == "estimate":
            run_estimate(cfg)
        else:
            report = run_validate(cfg)
            if not report["passed"]:
                return EXIT_VALIDATION_FAILED
    except (SpectraError, ValueError, OSError) as e:
        logger.error(f"{args.task} failed: {e}")
        return EXIT_ERROR

    logger.info(f"{args.task} complete")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
