"""Multi-domain cooperative radio SLAM simulation for ISAC networks."""

from .errors import (
    ConfigError,
    DegenerateFitError,
    InsufficientDataError,
    InvalidGeometryError,
    InvalidMeasurementError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateFitError",
    "InsufficientDataError",
    "InvalidGeometryError",
    "InvalidMeasurementError",
]
