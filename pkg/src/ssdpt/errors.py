"""Exception types shared across the pipeline."""


class SSDPTError(Exception):
    """Base class for pipeline errors."""


class ShapeError(SSDPTError, ValueError):
    """Array shapes or configuration sizes are inconsistent."""


class NonFiniteError(SSDPTError, FloatingPointError):
    """A NaN or infinity appeared where finite values are required.

    Attributes:
        where: name of the layer, parameter or quantity that went non-finite.
    """

    def __init__(self, where, message=None):
        self.where = where
        super().__init__(message or f"non-finite values in {where}")


class FitError(SSDPTError, ValueError):
    """A statistical fit could not be performed on the given data."""


class DatasetError(SSDPTError, ValueError):
    """The on-disk corpus layout or a clip filename is invalid."""
