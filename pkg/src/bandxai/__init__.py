"""Explainability-driven spectral band selection for hyperspectral classification."""

from bandxai.errors import ConfigError, DataError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "NumericalError", "__version__"]
