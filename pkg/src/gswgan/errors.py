"""Exception types shared across the package."""


class GswganError(Exception):
    pass


class ConfigError(GswganError, ValueError):
    """Invalid configuration or architecture description."""


class ShapeError(GswganError, ValueError):
    pass


class NumericError(GswganError, ArithmeticError):
    """Non-finite values or solver failure."""

    def __init__(self, message, iteration=None, last_checkpoint=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_checkpoint = last_checkpoint


class EmptyBatchError(GswganError, ValueError):
    pass


class FormatError(GswganError, ValueError):
    """Malformed input file (IDX, CSV, checkpoint)."""
