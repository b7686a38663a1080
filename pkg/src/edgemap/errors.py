"""Exception hierarchy shared across the toolkit.

Exit codes used by the CLI: 0 success, 2 configuration error, 3 data
error, 4 numeric/convergence error.
"""


class EdgemapError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(EdgemapError):
    """Invalid configuration key, value, or combination."""

    exit_code = 2


class DataError(EdgemapError):
    """Missing or malformed input data."""

    exit_code = 3


class GridFormatError(DataError):
    """Malformed grid/manifest/pad file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class NumericError(EdgemapError):
    """Numerical failure in a solver or training run."""

    exit_code = 4


class ConvergenceError(NumericError):
    """Iterative solver exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotSpdError(NumericError):
    """System matrix failed a symmetric-positive-definite check."""


class TrainingDivergedError(NumericError):
    """Loss became non-finite during training."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
