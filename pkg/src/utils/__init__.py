"""
Utility modules for nighthaze.

This package contains the exception hierarchy and the centralized error
logger used throughout the package.
"""

from .error_logger import ErrorLogger
from .exceptions import (
    NightHazeError,
    ImageFormatError,
    DimensionError,
    ShapeError,
    ParameterError,
    NumericGuardError,
    ResourceLimitError,
    DataError,
)

__all__ = [
    'ErrorLogger',
    'NightHazeError',
    'ImageFormatError',
    'DimensionError',
    'ShapeError',
    'ParameterError',
    'NumericGuardError',
    'ResourceLimitError',
    'DataError',
]
