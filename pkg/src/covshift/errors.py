"""Exception hierarchy shared by every module."""


class CovshiftError(Exception):
    """Base class for toolkit errors."""


class ValidationError(CovshiftError, ValueError):
    """Bad argument or violated input invariant."""


class IngestionError(ValidationError):
    """A CSV file could not be parsed into a dataset."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class CalibrationError(CovshiftError, RuntimeError):
    """Shift calibration could not reach the requested effective sample size."""
