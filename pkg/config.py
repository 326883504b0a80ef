import os
import math
import logging

ENV_PREFIX = "BEAMSIM_"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(__name__)


def configure_logging(level: str | None = None) -> None:
    """Configure root logging once; records go to stderr"""
    level_name = (level or os.environ.get(f"{ENV_PREFIX}LOG_LEVEL", "INFO")).upper()
    if not isinstance(logging.getLevelName(level_name), int):
        level_name = "INFO"
    logging.basicConfig(level=getattr(logging, level_name), format=LOG_FORMAT)


def get_env_int(name: str, default: int, minimum: int | None = None) -> int:
    """Read an integer setting from the environment with validation"""
    raw = os.environ.get(f"{ENV_PREFIX}{name}")
    if raw is None or raw == "":
        return default
    try:
        value = int(raw, 0)
    except ValueError:
        logger.error(f"Environment variable {ENV_PREFIX}{name} is not an integer: {raw!r}")
        raise ValueError(f"Invalid integer for {ENV_PREFIX}{name}: {raw!r}")
    if minimum is not None and value < minimum:
        logger.error(f"Environment variable {ENV_PREFIX}{name} must be >= {minimum}")
        raise ValueError(f"{ENV_PREFIX}{name} must be >= {minimum}, got {value}")
    return value


def get_env_str(name: str, default: str | None = None) -> str | None:
    value = os.environ.get(f"{ENV_PREFIX}{name}")
    return value if value else default


# Unit conversions live here and nowhere else: the library is linear throughout
def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (float(value_db) / 10.0))


def linear_to_db(value: float) -> float:
    if value <= 0:
        return -math.inf
    return float(10.0 * math.log10(value))


# Run defaults
DEFAULT_SEED = 20170823
DEFAULT_TRIALS = 200
DEFAULT_NSAM_FACTOR = 8          # scan grid 8x finer than the main lobe
DEFAULT_ROW_INDEX = 2            # first non-trivial Fourier/Hadamard row
DEFAULT_SEARCH_ASSIGNMENT = True  # experiments search null placements
DEFAULT_REFINE_ANGLES = True
DEFAULT_TIMING_REPETITIONS = 21
CSV_FLOAT_FORMAT = "%.12g"

# Reference system of the experiments
DEFAULT_SYSTEM = {
    "n": 128,
    "k": 4,
    "m": 2,
    "l": 2,
    "z": 8,
    "rho_u_db": 0.0,
    "rho_i_db": 0.0,
    "noise_var": 1.0,
    "path_var": 1.0,
    "min_separation": 0.0,
}

try:
    SEED = get_env_int("SEED", DEFAULT_SEED, minimum=0)
    THREADS = get_env_int("THREADS", 1, minimum=1)
    NSAM_FACTOR = get_env_int("NSAM_FACTOR", DEFAULT_NSAM_FACTOR, minimum=2)
    OUTPUT_PATH = get_env_str("OUT")
    logger.debug(f"Environment configuration loaded: seed={SEED}, threads={THREADS}, "
                 f"nsam_factor={NSAM_FACTOR}")
except ValueError as e:
    logger.error(f"Configuration error: {str(e)}")
    # fall back to the documented defaults rather than refusing to start
    SEED = DEFAULT_SEED
    THREADS = 1
    NSAM_FACTOR = DEFAULT_NSAM_FACTOR
    OUTPUT_PATH = None
