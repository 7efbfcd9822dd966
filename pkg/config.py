import os
from dotenv import load_dotenv

load_dotenv()

# Parallelism: --threads wins, then HORIZONKIT_THREADS, then 1
DEFAULT_THREADS = os.getenv("HORIZONKIT_THREADS", "1")

# Output configuration
DEFAULT_OUTPUT_DIR = "./results"
LOG_DIR = os.getenv("HORIZONKIT_LOG_DIR", "./logs")

# File format configuration
NA_TOKEN = "NA"
FLOAT_FORMAT = ".17g"
ENSEMBLE_HEADER = ["member", "lead", "value"]
SERIES_HEADER = ["lead", "value"]
CLIMATOLOGY_HEADER = ["position", "mean", "std"]
STANDS_HEADER = ["stand", "group", "lead", "forecast", "observed", "neighbor_lower", "neighbor_upper"]
HEATMAP_HEADER = ["init_time", "lead", "value"]
FORECAST_INIT_PATTERN = "forecast_init{init}.csv"

# Ricker case study (main text setup; alpha and Y_0 calibrated against the reported limits)
RICKER_ALPHA_MEAN = 0.05
RICKER_K_MEAN = 1.0
RICKER_PARAM_CV = 0.03
RICKER_INIT_CV = 0.001
RICKER_INIT_FRACTION = 0.992
RICKER_MEMBERS = 1000
RICKER_HORIZON = 25
RICKER_STEP_LABEL = "generation"
DEFAULT_SEED = 42

# Ricker appendix setup (epsilon = 10% spread, k = 2)
RICKER_APPENDIX_PRESET = {
    "alpha_mean": 0.1,
    "k_mean": 2.0,
    "param_cv": 0.1,
    "init_value": 1.0,
    "init_cv": 0.1,
    "member_count": 500,
    "horizon": 25,
}

# Saturated-ensemble climatology
SATURATION_HORIZON = 1000
SATURATION_BURN_IN = 500

# Sweep configuration (case study: 51 init times, 50 generations each)
DEFAULT_SWEEP_INITS = list(range(0, 51))
DEFAULT_SWEEP_HORIZON = 50
