"""Custom exceptions for the application."""


class IbiNetError(Exception):
    """Base exception for all ibinet errors."""
    pass


class ParameterError(IbiNetError, ValueError):
    """Exception raised for invalid arguments or configuration values."""
    pass


class ShapeError(IbiNetError, ValueError):
    """Exception raised when tensor shapes do not line up."""
    pass


class ArchitectureError(IbiNetError):
    """Exception raised when an architecture descriptor cannot be built."""
    pass


class DataError(IbiNetError):
    """Base exception for bad or insufficient input data."""
    pass


class SignalFormatError(DataError):
    """Exception raised for malformed signal, annotation, profile or dataset files."""
    pass


class CorruptCheckpoint(DataError):
    """Exception raised when a checkpoint fails magic, version or CRC checks."""
    pass


class AugmentationNotApplicable(DataError):
    """Exception raised when a signal does not qualify for superposition augmentation."""
    pass


class EmptyWindowSet(DataError):
    """Exception raised when a signal holds too few R-peaks for a single window."""
    pass


class OversizeWindow(DataError):
    """Exception raised when a segment does not fit in the padded input."""
    pass


class NumericalError(IbiNetError):
    """Base exception for numerical failures."""
    pass


class DegenerateSeries(NumericalError):
    """Exception raised when a correlation is requested on a zero-variance series."""
    pass


class DivergenceError(NumericalError):
    """Exception raised when the training loss stops being finite."""
    pass
