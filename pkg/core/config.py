"""
PDQLS CORE MODULE: CONFIGURATION
================================
This file is part of THE VAULT - shared substrate for every pipeline.
Status: PROTECTED - tolerances here are regression constants.

Paths, numerical tolerances and run conventions. Everything is a
module-level constant; the only environment overrides are PDQLS_SEED
(default seed) and PDQLS_LOG_DIR (audit log location).
"""

import os
from pathlib import Path
from typing import Optional

# Project layout
PROJECT_ROOT = Path(__file__).resolve().parent.parent
STATE_DIR = PROJECT_ROOT / "state"
LOG_DIR = Path(os.environ.get("PDQLS_LOG_DIR", str(PROJECT_ROOT / "logs")))
LOG_FILE = LOG_DIR / "pdqls.log"
LAST_RUN_FILE = STATE_DIR / "last_run.json"

# Linear algebra tolerances
HERMITIAN_TOL = 1e-12      # relative, Frobenius
RECONSTRUCT_TOL = 1e-10
UNITARY_TOL = 1e-10
NORM_TOL = 1e-12
NULL_POSTSELECT = 1e-15
MAX_DIM = 4096             # dense storage cap

# Polynomial construction
GRID_POINTS = 10_000
K_GRID_FACTOR = 50
K_GRID_MIN = 1_000
WINDOW_DEGREE_CAP = 100_000
KAPPA_FLOOR = 2.0
NORMALIZATION_CONSTANT = 6.05

# Solver conventions
WORST_THRESHOLD = 2.0
MIN_AMPLIFIED_PROB = 0.4
GAMMA_SAFETY = 0.99
PINV_RCOND = 1e-12
THETA_SKIP = 1e-12
VTAA_COST_CONSTANT = 50.0
PHASE_ESTIMATION_FAIL = 0.01

# Reproducibility
DEFAULT_SEED = int(os.environ.get("PDQLS_SEED", "1234"))


def resolve_seed(seed: Optional[int] = None) -> int:
    """
    Pick the seed for a run.

    Args:
        seed: Explicit seed, wins when given

    Returns:
        The explicit seed, or the PDQLS_SEED value read at call time
    """
    if seed is not None:
        return int(seed)
    return int(os.environ.get("PDQLS_SEED", str(DEFAULT_SEED)))
