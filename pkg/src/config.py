"""Configuration settings for cepstral CCA runs."""
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
load_dotenv()
# Paths
PROJECT_ROOT = Path(__file__).parent.parent
LOGS_DIR = Path(os.getenv("CEPSTRA_CCA_LOG_DIR", str(PROJECT_ROOT / "logs")))
OUTPUT_DIR = Path(os.getenv("CEPSTRA_CCA_OUTPUT_DIR", "outputs"))

# Logging
LOG_LEVEL = os.getenv("CEPSTRA_CCA_LOG_LEVEL", "INFO")

# Fisher scoring stopping rule
MAX_ITERATIONS = int(os.getenv("CEPSTRA_CCA_MAX_ITERATIONS", "100"))
SCORE_TOL_PER_FREQ = float(os.getenv("CEPSTRA_CCA_SCORE_TOL_PER_FREQ", "1e-8"))
NLL_REL_TOL = float(os.getenv("CEPSTRA_CCA_NLL_REL_TOL", "1e-10"))
MAX_STEP_HALVINGS = 30
EXPONENT_CLAMP = 700.0

# AIC order selection
MAX_K = int(os.getenv("CEPSTRA_CCA_MAX_K", "30"))

# CCA numerics
RANK_TOL = float(os.getenv("CEPSTRA_CCA_RANK_TOL", "1e-10"))
OUTCOME_CONDITION_LIMIT = 1e12
ZERO_CORRELATION = 1e-8
EIGEN_GAP = 1e-10

# Weight-function grid
GRID_RESOLUTION = int(os.getenv("CEPSTRA_CCA_GRID", "512"))
MIN_GRID_RESOLUTION = 16

# Simulation
OVERSAMPLE = int(os.getenv("CEPSTRA_CCA_OVERSAMPLE", "1"))
FAILURE_LIMIT = float(os.getenv("CEPSTRA_CCA_FAILURE_LIMIT", "0.05"))


def thread_override() -> Optional[int]:
    """Thread count forced through CEPSTRA_CCA_THREADS, if any.

    Read on every call so that the variable can be set after import.
    """
    value = os.getenv("CEPSTRA_CCA_THREADS")
    if value is None or not value.strip():
        return None
    threads = int(value)
    if threads < 1:
        raise ValueError(f"CEPSTRA_CCA_THREADS must be >= 1, got {threads}")
    return threads


def ensure_directories(output_dir: Optional[Path] = None) -> None:
    """Create required directories if they don't exist.

    Creates:
    - logs/ - For the run log file
    - the output directory (OUTPUT_DIR unless one is given)
    """
    LOGS_DIR.mkdir(parents=True, exist_ok=True)
    (output_dir or OUTPUT_DIR).mkdir(parents=True, exist_ok=True)


def validate_config() -> None:
    """Validate numeric settings."""
    positive = {
        "CEPSTRA_CCA_MAX_ITERATIONS": MAX_ITERATIONS,
        "CEPSTRA_CCA_SCORE_TOL_PER_FREQ": SCORE_TOL_PER_FREQ,
        "CEPSTRA_CCA_NLL_REL_TOL": NLL_REL_TOL,
        "CEPSTRA_CCA_MAX_K": MAX_K,
        "CEPSTRA_CCA_RANK_TOL": RANK_TOL,
        "CEPSTRA_CCA_OVERSAMPLE": OVERSAMPLE,
        "CEPSTRA_CCA_FAILURE_LIMIT": FAILURE_LIMIT,
    }
    for name, value in positive.items():
        if value <= 0:
            raise ValueError(
                f"{name} must be positive, got {value}. "
                "Please fix it in .env file or as environment variable."
            )
    if GRID_RESOLUTION < MIN_GRID_RESOLUTION:
        raise ValueError(
            f"CEPSTRA_CCA_GRID must be >= {MIN_GRID_RESOLUTION}, got {GRID_RESOLUTION}"
        )
