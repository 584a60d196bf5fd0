import math
import re
from pathlib import Path

from blendkit.util.errors import ConfigError

# Names that would collide with header fields of the checkpoint format
RESERVED_PARAM_NAMES = {
    "format", "version", "kind", "hyperparameters", "num_classes", "params",
}

PARAM_NAME_PATTERN = r"^[a-zA-Z_][a-zA-Z0-9_]*(\.[a-zA-Z_][a-zA-Z0-9_]*)*$"


def is_valid_param_name(name: str) -> bool:
    # Dotted identifiers, e.g. "fwd.W_f" or "conv3.kernels"
    if not re.match(PARAM_NAME_PATTERN, name):
        return False

    if len(name.encode("utf-8")) > 128:
        return False

    if name.lower() in RESERVED_PARAM_NAMES:
        return False

    return True


def check_unit_interval(name: str, value: float) -> float:
    """Return ``value`` as float if it lies in [0, 1], else raise ConfigError."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number in [0, 1], got {value!r}")
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_positive_int(name: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def check_dropout_rate(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number in [0, 1), got {value!r}")
    if math.isnan(value) or not 0.0 <= value < 1.0:
        raise ConfigError(f"{name} must lie in [0, 1), got {value}")
    return value


def require_existing_path(name: str, path) -> Path:
    """Resolve a configured path and fail with the path in the message when it is missing."""
    if path is None or str(path) == "":
        raise ConfigError(f"{name} is required but not set")
    resolved = Path(path)
    if not resolved.exists():
        raise ConfigError(f"{name} does not exist: {resolved}")
    return resolved
