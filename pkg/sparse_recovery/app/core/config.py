import os
from pathlib import Path

VERSION = "0.3.0"

# Output settings
OUT_DIR = Path(os.getenv("SPARSE_RECOVERY_OUT_DIR", "results"))
LOG_DIR = Path(os.getenv("SPARSE_RECOVERY_LOG_DIR", "logs"))
LOG_LEVEL = os.getenv("SPARSE_RECOVERY_LOG_LEVEL", "INFO")
DEFAULT_WORKERS = int(os.getenv("SPARSE_RECOVERY_WORKERS", "1"))

# Numerical tolerances
RANK_TOL = 1e-10            # relative norm below which a new column counts as dependent
STAGNATION_TOL = 1e-12      # residual-improvement threshold for SP / CoSaMP / IHT
LOG_FLOOR = 1e-30           # floor on softmax outputs inside the cross entropy

# Signal model
SIGNAL_MIN_MAG = 0.1
SIGNAL_MAX_MAG = 1.0

# Error bound / regularization floors
EPSILON_FLOOR = 1e-5
ETA2_FLOOR = 1e-4

# Ridge (SBL) defaults
SBL_MAX_ITER = 10
SBL_GAMMA_INIT = 1.0
SBL_GAMMA_FLOOR = 1e-12

# Baseline iteration caps
SP_MAX_ITER = 50
COSAMP_MAX_ITER = 50
IHT_MAX_ITER = 300
SBL_BASELINE_MAX_ITER = 500
GOMP_PER_ITERATION = 3
MMP_EXPANSION = 4
MMP_TRUNCATED_PATHS = 500

# Scorer training defaults
RMSPROP_DECAY = 0.9
RMSPROP_EPSILON = 1e-8
BASE_LEARNING_RATE = 1e-3
HIDDEN_WIDTH_FACTOR = 4

# Benchmark defaults
EXACT_TOL = 1e-6
S95_THRESHOLD = 0.95

# Persisted document versions
MODEL_FORMAT_VERSION = 1
CSV_FORMAT_VERSION = 2
