"""
Exception hierarchy for nighthaze.

Every error raised on purpose by the package derives from NightHazeError and
from the builtin a caller would naturally catch, so ``except ValueError`` keeps
working for code that does not know about this module.
"""


class NightHazeError(Exception):
    """Base class for all nighthaze errors."""


class ImageFormatError(NightHazeError, ValueError):
    """A file exists but does not decode to a supported image."""


class DimensionError(NightHazeError, ValueError):
    """Raster sizes are incompatible with the requested operation."""


class ShapeError(DimensionError):
    """Tensor or token shapes do not line up."""


class ParameterError(NightHazeError, ValueError):
    """An argument is outside its documented domain."""


class NumericGuardError(NightHazeError, ArithmeticError):
    """A computation would divide by zero or otherwise blow up."""


class ResourceLimitError(NightHazeError, MemoryError):
    """The request exceeds the configured memory budget."""


class DataError(NightHazeError, ValueError):
    """A dataset, manifest or checkpoint is empty, inconsistent or incompatible."""


__all__ = [
    "NightHazeError",
    "ImageFormatError",
    "DimensionError",
    "ShapeError",
    "ParameterError",
    "NumericGuardError",
    "ResourceLimitError",
    "DataError",
]
