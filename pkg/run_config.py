"""Run configuration: JSON file <-> RunConfig, plus model construction from it."""
import copy
import json
import logging
import math
from dataclasses import dataclass, field, fields

from config import MODEL_TYPES, OUTPUT_DIR, OUTPUT_FORMATS, TASKS, WINDOWS
from errors import ConfigError
from models import SingleSpinParams, SpinPairParams, load_custom_model, single_spin_model, zno_indium_model

logger = logging.getLogger(__name__)

DEFAULTS = {
    "task": "spectrum",
    "model": {"type": "single-spin", "parameters": {}, "path": None},
    "measurement": {"beta": 1.0, "include_shot_noise": False, "include_measurement_damping": False},
    "grid": {"order": 2, "f_min": 0.0, "f_max": 0.5, "points": 501, "f2_min": None, "f2_max": None, "points2": None},
    "sim": {"dt": 0.01, "steps": 100000, "seed": 42, "record_rho_every": None},
    "estimate": {"frame_length": 1024, "frames_per_estimate": 8, "window": "rectangular", "trajectory": None, "max_bin": None},
    "output": {"dir": OUTPUT_DIR, "format": "csv", "name": None},
}


def _merge(defaults, given, where):
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    merged = copy.deepcopy(defaults)
    merged.update(copy.deepcopy(given))
    return merged


@dataclass
class RunConfig:
    task: str = DEFAULTS["task"]
    model: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["model"]))
    measurement: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["measurement"]))
    grid: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["grid"]))
    sim: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["sim"]))
    estimate: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["estimate"]))
    output: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["output"]))

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.model.get("type") not in MODEL_TYPES:
            raise ConfigError(f"model.type must be one of {MODEL_TYPES}, got {self.model.get('type')!r}")
        if self.model["type"] == "custom" and not self.model.get("path"):
            raise ConfigError("custom models need model.path")
        if self.grid["order"] not in (2, 3, 4):
            raise ConfigError(f"grid.order must be 2, 3 or 4, got {self.grid['order']}")
        for lo, hi in (("f_min", "f_max"), ("f2_min", "f2_max")):
            a, b = self.grid.get(lo), self.grid.get(hi)
            if a is None and b is None:
                continue
            if a is None or b is None or not (math.isfinite(a) and math.isfinite(b)) or a >= b:
                raise ConfigError(f"grid.{lo}/{hi} must be finite with {lo} < {hi}, got {a}, {b}")
        if self.output["format"] not in OUTPUT_FORMATS:
            raise ConfigError(f"output.format must be one of {OUTPUT_FORMATS}, got {self.output['format']!r}")
        if self.estimate["window"] not in WINDOWS:
            raise ConfigError(f"estimate.window must be one of {WINDOWS}")
        if self.measurement["beta"] < 0:
            raise ConfigError("measurement.beta must be non-negative")

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("run configuration must be a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown section(s): {sorted(unknown)}")
        sections = {}
        for f in fields(cls):
            given = data.get(f.name, DEFAULTS[f.name])
            sections[f.name] = _merge(DEFAULTS[f.name], given, f.name) if isinstance(DEFAULTS[f.name], dict) else given
        return cls(**sections)

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}


def load_run_config(path):
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e.msg}", line=e.lineno, column=e.colno) from e
    cfg = RunConfig.from_dict(data)
    logger.info(f"Loaded run config from {path} (task={cfg.task}, model={cfg.model['type']})")
    return cfg


def save_run_config(cfg, path):
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=2)


def build_bundle(model_section):
    """ModelBundle for the model section of a run config."""
    kind = model_section["type"]
    params = dict(model_section.get("parameters") or {})
    try:
        if kind == "single-spin":
            if "omega" in params:
                params["omega"] = tuple(params["omega"])
            return single_spin_model(SingleSpinParams(**params))
        if kind == "zno":
            if params.get("b_vec") is not None:
                params["b_vec"] = tuple(params["b_vec"])
            return zno_indium_model(SpinPairParams(**params))
    except TypeError as e:
        raise ConfigError(f"bad {kind} parameters: {e}") from e
    return load_custom_model(model_section["path"])
