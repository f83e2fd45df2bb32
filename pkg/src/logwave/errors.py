"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
anything else -> 3.
"""


class LogwaveError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(LogwaveError):
    """Invalid configuration: bad parameter values, unknown keys, bad paths."""


class DataError(LogwaveError):
    """Invalid or inconsistent data: malformed rows, shape mismatches, bad splits."""
