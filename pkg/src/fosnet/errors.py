"""Exception types shared across the package."""


class FosnetError(Exception):
    """Base class for all package errors."""


class ConfigError(FosnetError, ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class DataError(FosnetError, ValueError):
    """Malformed or out-of-contract input data."""


class DomainError(DataError):
    """A time value falls outside the modelled domain."""


class TrainingError(FosnetError, ArithmeticError):
    """Optimisation produced a non-finite loss."""

    def __init__(self, message, epoch=None, last_finite_loss=None):
        super().__init__(message)
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss
