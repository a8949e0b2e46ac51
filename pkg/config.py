import os
from dotenv import load_dotenv

load_dotenv()

# Runtime
WORKERS = int(os.getenv("SPECTRA_WORKERS", "1"))
OUTPUT_DIR = os.getenv("SPECTRA_OUTPUT_DIR", "output")
LOG_LEVEL = os.getenv("SPECTRA_LOG_LEVEL", "INFO")
CONFIG_PATH = os.getenv("SPECTRA_CONFIG_PATH", "run_config.json")

# Operator substrate
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8
DEFECTIVE_COND = 1e12
RECONSTRUCTION_TOL = 1e-8

# Liouvillian
STEADY_REL_TOL = 1e-9
STEADY_ABS_FLOOR = 1e-12
STEADY_RESIDUAL_TOL = 1e-9

# Polyspectra
IMAG_RESIDUE_TOL = 1e-9
RESOLVENT_CACHE_SIZE = 4096

# Stochastic master equation
SME_STABILITY = 0.1  # dt * (2 beta^2 + max|Re lambda|) must stay below this
SME_BLOWUP_NORM = 10.0
SME_NEGATIVITY_WARN = -0.05
SIM_BLOCK = 2 ** 16  # normal draws per RNG block; part of the reproducibility contract
TRAJECTORY_MAGIC = b"SMETRJ01"

# Estimators
DEFAULT_FRAME_LENGTH = 1024
DEFAULT_FRAMES_PER_ESTIMATE = 8
WINDOWS = ["rectangular", "hann"]

# Spin-pair model (ZnO:In). Angular frequencies per Tesla in rad/s, splittings in Hz.
ELECTRON_GYRO = 0.172e12
NUCLEAR_GYRO = 9.329e6
HYPERFINE_HZ = 100.2e6
QUADRUPOLE_HZ = 1.27e6
NUCLEAR_SPIN = 4.5
ELECTRON_RELAX_NS = 1 / 20  # 1/20 ns^-1
NUCLEAR_RELAX_NS = 1 / 20000  # 1/20 us^-1 expressed in ns^-1
ZNO_TIME_UNIT_S = 1e-9

# k_B / hbar in rad s^-1 K^-1
KB_OVER_HBAR = 1.380649e-23 / 1.054571817e-34

# Hyperfine variants
HYPERFINE_MODES = ["isotropic", "x-only"]
NUCLEAR_FINAL_STATES = ["mixed", "thermal"]

# CLI
TASKS = ["spectrum", "simulate", "estimate", "validate"]
MODEL_TYPES = ["single-spin", "zno", "custom"]
OUTPUT_FORMATS = ["csv", "json"]
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION_FAILED = 2
