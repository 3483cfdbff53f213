import os
from dotenv import load_dotenv

load_dotenv()

# Process-level defaults. None of these change a numerical result.
LOG_LEVEL = os.environ.get("SIMREG_LOG_LEVEL", "INFO")
N_JOBS = int(os.environ.get("SIMREG_N_JOBS", "1"))
SHOW_PROGRESS = os.environ.get("SIMREG_PROGRESS", "0").lower() in ("1", "true", "yes")

# Cox partial-likelihood Newton solver
NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50
MAX_STEP_HALVINGS = 30
# a Newton step moving every linear predictor by less than this ends the iteration
STEP_TOL = 1e-12
# separation: a log hazard ratio above SEPARATION_BOUND across a covariate's range
# whose information has fallen below SEPARATION_INFO_RATIO of its value at beta = 0
SEPARATION_BOUND = 15.0
SEPARATION_INFO_RATIO = 1e-6

# Transformation-model (PO) estimating equations
PO_TOL = 1e-6
PO_MAX_OUTER = 100

# Spectral cutoffs: relative to the largest eigenvalue
EIGEN_CUTOFF = 1e-8
PSD_TOLERANCE = 1e-8

# Resampling
DEFAULT_RESAMPLES = 10_000
MIN_RESAMPLES = 100
DRAW_CHUNK = 2048

# Uniform(0, c) censoring presets, keyed by nominal censoring rate
CENSORING_PRESETS = {"15%": 6.7, "40%": 2.0, "90%": 0.2}

DEFAULT_ALPHAS = (0.05, 0.005, 0.0005)
