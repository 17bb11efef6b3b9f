"""Exception hierarchy; each class maps to a CLI exit code."""


class SpearError(Exception):
    exit_code = 1


class ConfigError(SpearError, ValueError):
    """Invalid configuration or argument."""

    exit_code = 2


class DataError(SpearError, ValueError):
    """Malformed or out-of-domain input data."""

    exit_code = 3


class NumericError(SpearError, ArithmeticError):
    """Non-finite activation, gradient or loss."""

    exit_code = 4


class FormatError(DataError):
    """Checkpoint or dataset file that cannot be decoded."""
