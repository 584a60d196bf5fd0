import logging
import os
import sys


def create_logger(run_name: str) -> logging.Logger:
    """Creates a logger with the blendkit log format for one command run.

    This function sets up a logger with the following characteristics:
    - No propagation to root logger
    - Custom formatter including timestamp, log level, run name, file path, and message
    - Logs directed to stderr so stdout stays free for report tables

    The level is read from BLENDKIT_LOG_LEVEL (default INFO).

    Args:
        run_name: Name of the command or run, printed on every line

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger("blendkit")
    logger.setLevel(os.environ.get("BLENDKIT_LOG_LEVEL", "INFO").upper())

    # Keep records out of the root logger so they are not printed twice
    logger.propagate = False

    # Calling twice in one process (tests, sweeps) must not stack handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    formatter = logging.Formatter(
        "%(asctime)s | %(levelname)s | " +
        f"{run_name} | %(pathname)s:%(lineno)d | %(message)s"
    )
    handler.setFormatter(formatter)
    logger.addHandler(handler)

    return logger
