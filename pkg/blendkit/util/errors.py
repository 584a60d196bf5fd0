"""
Error categories shared by every blendkit module.

Each error carries a machine-readable category and the process exit code the
command line reports for it:

- 1: runtime failures (numeric, divergence, bench, bad input data)
- 2: usage errors
- 3: configuration / validation failures
"""


class BlendkitError(Exception):
    """Base class for all blendkit errors."""

    category = "runtime"
    exit_code = 1


class DimensionError(BlendkitError, ValueError):
    category = "dimension"


class NumericError(BlendkitError, ArithmeticError):
    category = "numeric"


class InputError(BlendkitError, ValueError):
    category = "input"


class FormatError(BlendkitError, ValueError):
    """Malformed file content. Messages always name the offending line or row."""

    category = "format"


class UsageError(BlendkitError):
    category = "usage"
    exit_code = 2


class ConfigError(BlendkitError):
    category = "config"
    exit_code = 3


class StaleCacheError(ConfigError):
    """Teacher cache fingerprint does not match the teacher checkpoint in use."""

    category = "stale_cache"


class DivergenceError(BlendkitError):
    category = "divergence"


class BenchError(BlendkitError):
    category = "bench"
