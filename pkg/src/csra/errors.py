"""Exception types raised across the package."""


class CSRAError(Exception):
    """Base class for every error raised by :mod:`csra`."""


class DimensionError(CSRAError, ValueError):
    """Shapes are incompatible or an axis is out of range."""


class ParameterError(CSRAError, ValueError):
    """A scalar parameter (temperature, lambda, head count...) is invalid."""


class DegenerateClassifierError(CSRAError, ValueError):
    """A classifier row is numerically zero and cannot be normalized."""


class DivergenceError(CSRAError, RuntimeError):
    """Training produced a non-finite loss or gradient (0-based epoch and batch)."""

    def __init__(self, epoch, batch):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class FormatError(CSRAError, ValueError):
    """A file does not follow its declared layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UndefinedAPError(CSRAError, ValueError):
    """Average precision is undefined because a class has no positives."""
