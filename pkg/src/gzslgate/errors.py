"""Error taxonomy shared by the library and the command line tool.

Each class maps to a process exit code so batch runs can distinguish
bad configuration from bad data from numeric blowups.
"""


class GzslError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(GzslError):
    """Invalid configuration, flags, or API misuse (shape mismatches)."""

    exit_code = 2


class DataError(GzslError):
    """Corrupt or inconsistent dataset files and split violations."""

    exit_code = 3


class NumericError(GzslError):
    """Non-finite values where finite numbers are required."""

    exit_code = 4
