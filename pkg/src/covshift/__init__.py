"""Covariate-shift diagnostics and experiments: effective sample size,
density-ratio estimation, mutual-information feature selection, weighted
trees and shift injection."""

from .errors import CalibrationError, CovshiftError, IngestionError, ValidationError

__version__ = "0.1.0"

__all__ = ["CalibrationError", "CovshiftError", "IngestionError", "ValidationError", "__version__"]
