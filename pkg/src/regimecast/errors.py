"""Exception types shared across the package."""


class RegimecastError(Exception):
    """Base class for all package errors."""


class ConfigError(RegimecastError):
    """Invalid or infeasible configuration (CLI exit code 2)."""


class DataError(RegimecastError):
    """Malformed, missing or insufficient input data (CLI exit code 3)."""


class NumericalError(RegimecastError):
    """Numerical failure during a computation (CLI exit code 4)."""
