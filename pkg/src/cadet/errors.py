"""Exception hierarchy shared by all cadet modules.

Each class maps to a CLI exit code so batch callers can distinguish
bad inputs from bad data from numerical failures.
"""

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class CadetError(Exception):
    """Base class for all cadet errors."""

    exit_code = 1


class ConfigError(CadetError):
    """Invalid configuration or parameter value."""

    exit_code = EXIT_CONFIG


class ParameterError(ConfigError):
    """An operation was called with arguments outside its domain."""


class DataError(CadetError):
    """Input data is missing, malformed, or insufficient."""

    exit_code = EXIT_DATA


class NumericError(CadetError):
    """A numerical routine failed to converge or produced invalid values."""

    exit_code = EXIT_NUMERIC
