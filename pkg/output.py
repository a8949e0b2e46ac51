import json
import logging
import os
import subprocess
from datetime import datetime

import numpy as np

from config import OUTPUT_DIR

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi


def git_describe():
    """`git describe --always --dirty` of the working tree, or "unknown"."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        return result.stdout.strip() or "unknown"
    except Exception as e:
        logger.warning(f"git describe unavailable (non-fatal): {e}")
        return "unknown"


def build_metadata(order, kind, beta, model_hash=None, seed=None, grid=None, extra=None):
    meta = {
        "order": order,
        "kind": kind,
        "beta": beta,
        "model_hash": model_hash,
        "seed": seed,
        "grid": grid,
        "frequency_unit": "ordinary (1/time unit)",
        "build": git_describe(),
        "created": datetime.now().isoformat(timespec="seconds"),
    }
    meta.update(extra or {})
    return meta


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, complex):
        return {"real": value.real, "imag": value.imag}
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


def _complex_json(values):
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return {"real": values.real.tolist(), "imag": values.imag.tolist()}
    return values.tolist()


def _header(metadata):
    return "\n".join(f"{k}: {json.dumps(_jsonable(v))}" for k, v in metadata.items())


def _stem(out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _write_matrix(path, values, metadata):
    np.savetxt(path, values, delimiter=",", header=_header(metadata), comments="# ")
    return path


def _write_axes_json(path, axes, metadata, values=None, errors=None):
    payload = {
        "metadata": _jsonable(metadata),
        "axes": [(np.asarray(axis) / TWO_PI).tolist() for axis in axes],
    }
    if values is not None:
        payload["values"] = _complex_json(values)
    if errors is not None:
        payload["errors"] = _jsonable(errors)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
    return path


def write_spectrum(grid, out_dir=OUTPUT_DIR, name="spectrum", fmt="csv"):
    """Write a SpectrumGrid; frequencies leave the program in ordinary units.

    1-D grids become (freq, value) CSV columns. 2-D grids become a CSV matrix
    (rows follow the first axis) plus a JSON file holding both axes. With
    fmt="json" everything goes into the JSON file.
    """
    stem = _stem(out_dir, name)
    metadata = dict(grid.metadata)
    metadata.pop("degenerate_mask", None)
    paths = []

    if fmt == "json":
        paths.append(_write_axes_json(f"{stem}.json", grid.axes, metadata, values=grid.values))
    elif grid.values.ndim == 1:
        freqs = grid.axes[0] / TWO_PI
        columns = [freqs, np.real(grid.values)]
        names = "freq,value"
        if np.iscomplexobj(grid.values):
            columns.append(np.imag(grid.values))
            names += ",value_imag"
        np.savetxt(f"{stem}.csv", np.column_stack(columns), delimiter=",", header=f"{_header(metadata)}\n{names}", comments="# ")
        paths.append(f"{stem}.csv")
    else:
        paths.append(_write_matrix(f"{stem}.csv", np.real(grid.values), metadata))
        if np.iscomplexobj(grid.values):
            paths.append(_write_matrix(f"{stem}_imag.csv", np.imag(grid.values), metadata))
        paths.append(_write_axes_json(f"{stem}.json", grid.axes, metadata))

    for path in paths:
        logger.info(f"Saved {os.path.basename(path)} to {out_dir}")
    return paths


def write_estimate(estimate, out_dir=OUTPUT_DIR, name="estimate", fmt="csv"):
    """Like write_spectrum, with standard errors alongside the values."""
    stem = _stem(out_dir, name)
    metadata = dict(estimate.metadata, n_frames=estimate.n_frames)
    paths = []

    if fmt == "json":
        errors = {"real": estimate.errors}
        if estimate.errors_imag is not None:
            errors["imag"] = estimate.errors_imag
        paths.append(_write_axes_json(f"{stem}.json", estimate.axes, metadata, values=estimate.values, errors=errors))
    elif estimate.values.ndim == 1:
        freqs = estimate.axes[0] / TWO_PI
        data = np.column_stack([freqs, np.real(estimate.values), estimate.errors])
        np.savetxt(f"{stem}.csv", data, delimiter=",", header=f"{_header(metadata)}\nfreq,value,error", comments="# ")
        paths.append(f"{stem}.csv")
    else:
        paths.append(_write_matrix(f"{stem}.csv", np.real(estimate.values), metadata))
        paths.append(_write_matrix(f"{stem}_error.csv", estimate.errors, metadata))
        if np.iscomplexobj(estimate.values):
            paths.append(_write_matrix(f"{stem}_imag.csv", np.imag(estimate.values), metadata))
            paths.append(_write_matrix(f"{stem}_imag_error.csv", estimate.errors_imag, metadata))
        paths.append(_write_axes_json(f"{stem}.json", estimate.axes, metadata))

    for path in paths:
        logger.info(f"Saved {os.path.basename(path)} to {out_dir}")
    return paths


def write_report(report, out_dir=OUTPUT_DIR, name="validation_report"):
    path = f"{_stem(out_dir, name)}.json"
    with open(path, "w") as f:
        json.dump(_jsonable(report), f, indent=2)
    logger.info(f"Saved validation report to {path}")
    return path


def format_report(report):
    """Plain-text summary of a validation report, one check per line."""
    lines = [f"Validation {'PASSED' if report['passed'] else 'FAILED'}"]
    for check in report["checks"]:
        mark = "ok  " if check["passed"] else "FAIL"
        lines.append(f"  [{mark}] {check['name']}: deviation {check['deviation']:.3e} (tolerance {check['tolerance']:.1e})")
    return "\n".join(lines)


def read_spectrum_csv(path):
    """(freqs, values) of a 1-D spectrum CSV, or the matrix of a 2-D one."""
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    with open(path, "r") as f:
        names = [line[2:].strip() for line in f if line.startswith("# ")]
    if names and names[-1].startswith("freq,"):
        return data[:, 0], data[:, 1]
    return None, data
