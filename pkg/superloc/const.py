"""Constants for the superloc localisation library."""

# Physical constants and the simulation setup of the 4-BS reference scene
SPEED_OF_LIGHT = 3.0e8  # m/s
DEFAULT_NUM_ANTENNAS = 16
DEFAULT_NUM_SUBCARRIERS = 32
DEFAULT_SUBCARRIER_SPACING = 10.0e3  # Hz
DEFAULT_CARRIER_FREQ = 2.0e9  # Hz
DEFAULT_BS_POSITIONS_KM: tuple[tuple[float, float], ...] = (
    (0.0, 0.0),
    (0.0, 1.0),
    (1.0, 0.0),
    (1.0, 1.0),
)
DEFAULT_SCENE_KM: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)

PILOT_ONES = "ones"
PILOT_QPSK = "qpsk"
PILOTS = (PILOT_ONES, PILOT_QPSK)

# Solver defaults
DEFAULT_PRUNE_THRESHOLD = 0.1
DEFAULT_EXPECTED_PATHS = 2
DEFAULT_GRID_POINTS_PER_AXIS = 20
DEFAULT_STOP_TOL = 1e-6
DEFAULT_EXCLUSION_RADIUS_M = 1.0
DEFAULT_AUTO_LAMBDA_SCALE = 1.0
# Fallback noise level (fraction of the RMS entry of Y) when the SNR is unknown
UNKNOWN_NOISE_FRACTION = 0.05
# Noise floor (fraction of the RMS entry of Y) assumed for noise-free data
NOISELESS_NOISE_FRACTION = 1e-3

COUPLING_SHARED = "shared"
COUPLING_FREE = "free"
COUPLINGS = (COUPLING_SHARED, COUPLING_FREE)

DESCENT_LBFGS = "lbfgs"
DESCENT_ARMIJO = "armijo"
DESCENT_METHODS = (DESCENT_LBFGS, DESCENT_ARMIJO)

LAMBDA_AUTO = "auto"

# Harness defaults
DEFAULT_CLEARANCE_M = 20.0
AMBIGUITY_SPREAD_M = 10.0
GAIN_RANDOM_PHASE = "random_phase"
GAIN_UNIT = "unit"
GAIN_MODELS = (GAIN_RANDOM_PHASE, GAIN_UNIT)
# Scattered paths per BS when the caller does not say
# OLoS needs three scatterers: with two, the equal-delay circles cross twice
# and the mirror image of the MS explains the data equally well.
DEFAULT_SCATTERERS = {"los": 0, "nlos": 1, "olos": 3, "mixed": 2}

# File formats
SCHEMA_VERSION = 1
DATASET_KIND = "superloc-dataset"
SOLUTION_KIND = "superloc-solution"
SEED_ENV_VAR = "SUPERLOC_SEED"
RESULT_COLUMNS = (
    "condition",
    "snr_db",
    "trial",
    "rmse_m",
    "ms_error_m",
    "converged",
    "ambiguous",
    "runtime_s",
)

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NOT_CONVERGED = 3
