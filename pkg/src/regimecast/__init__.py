"""Regime labeling, prediction and contrarian trading evaluation for daily
financial time series."""

from .errors import ConfigError, DataError, NumericalError, RegimecastError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "NumericalError", "RegimecastError", "__version__"]
