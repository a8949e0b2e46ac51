import json
import os

import numpy as np
import pytest

import validation
from config import EXIT_ERROR, EXIT_OK, EXIT_VALIDATION_FAILED
from main import grid_axes, main
from output import read_spectrum_csv
from polyspectra import power_spectrum_lorentzian
from validation import make_check


def write_config(tmp_path, **sections):
    base = {
        "model": {"type": "single-spin", "parameters": {"omega": [1.0, 0.0, 0.0], "gamma": 0.1}},
        "measurement": {"beta": 1.0, "include_measurement_damping": False},
        "grid": {"order": 2, "f_min": 0.0, "f_max": 0.4, "points": 41},
        "sim": {"dt": 0.01, "steps": 20000, "seed": 42},
        "estimate": {"frame_length": 256, "frames_per_estimate": 8},
    }
    for name, values in sections.items():
        base.setdefault(name, {}).update(values)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(base))
    return str(path)


def test_grid_axes_are_angular():
    (axis,) = grid_axes({"order": 2, "f_min": 0.0, "f_max": 1.0, "points": 3})
    np.testing.assert_allclose(axis, [0.0, np.pi, 2 * np.pi])
    first, second = grid_axes({"order": 3, "f_min": 0.0, "f_max": 1.0, "points": 3, "f2_min": 1.0, "f2_max": 2.0, "points2": 2})
    assert len(first) == 3
    np.testing.assert_allclose(second, [2 * np.pi, 4 * np.pi])


def test_spectrum_command(tmp_path):
    out = tmp_path / "out"
    assert main(["spectrum", "--config", write_config(tmp_path), "--out", str(out)]) == EXIT_OK
    freqs, values = read_spectrum_csv(out / "single-spin_s2.csv")
    assert len(freqs) == 41
    np.testing.assert_allclose(values, power_spectrum_lorentzian(2 * np.pi * freqs, 1.0, 0.1), rtol=1e-8)


def test_single_spin_bispectrum_file_is_zero(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, grid={"points": 5})
    assert main(["spectrum", "--config", config, "--out", str(out), "--order", "3"]) == EXIT_OK
    _, matrix = read_spectrum_csv(out / "single-spin_s3.csv")
    assert matrix.shape == (5, 5)
    assert np.max(np.abs(matrix)) < 1e-10
    assert os.path.exists(out / "single-spin_s3.json")


def test_correlation_cut_command(tmp_path):
    out = tmp_path / "out"
    config = write_config(tmp_path, grid={"points": 4, "f_min": 0.05, "f_max": 0.3})
    assert main(["spectrum", "--config", config, "--out", str(out), "--order", "4"]) == EXIT_OK
    _, matrix = read_spectrum_csv(out / "single-spin_s4.csv")
    assert matrix.shape == (4, 4)


def test_simulate_is_reproducible(tmp_path):
    config = write_config(tmp_path)
    for name in ("a", "b"):
        assert main(["simulate", "--config", config, "--out", str(tmp_path / name), "--seed", "42"]) == EXIT_OK
    first = (tmp_path / "a" / "single-spin_trajectory.smt").read_bytes()
    second = (tmp_path / "b" / "single-spin_trajectory.smt").read_bytes()
    assert first == second


def test_estimate_from_trajectory(tmp_path):
    config = write_config(tmp_path, measurement={"beta": 0.3})
    out = tmp_path / "out"
    assert main(["simulate", "--config", config, "--out", str(out)]) == EXIT_OK
    config = write_config(tmp_path, measurement={"beta": 0.3}, estimate={"trajectory": str(out / "single-spin_trajectory.smt")})
    assert main(["estimate", "--config", config, "--out", str(out)]) == EXIT_OK
    data = np.loadtxt(out / "single-spin_estimate_s2.csv", delimiter=",", comments="#")
    assert data.shape == (128, 3)
    assert np.all(data[:, 2] > 0)


def test_missing_config_is_an_error(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "absent.json")]) == EXIT_ERROR


def test_malformed_config_is_an_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{ not json")
    assert main(["spectrum", "--config", str(path)]) == EXIT_ERROR


def test_validate_exit_codes(tmp_path, monkeypatch):
    config = write_config(tmp_path)
    monkeypatch.setattr(validation, "SUITES", {"fine": lambda: [make_check("fine", 0.0, 1.0)]})
    assert main(["validate", "--config", config, "--out", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "validation_report.json") as f:
        assert json.load(f)["passed"] is True

    monkeypatch.setattr(validation, "SUITES", {"broken": lambda: [make_check("broken", 2.0, 1.0)]})
    assert main(["validate", "--config", config, "--out", str(tmp_path)]) == EXIT_VALIDATION_FAILED
