"""Exception types shared across the package."""


class StsslError(Exception):
    """Base class for all package errors."""


class BinaryFormatError(StsslError):
    """Raw scan file does not follow the 16-byte-per-point layout."""


class EmptyFrameError(StsslError):
    """A frame ended up with zero usable points."""


class InsufficientPointsError(StsslError):
    """Too few points for the requested geometric fit."""


class DegenerateObjectError(StsslError):
    """Synthetic object specification has zero extent."""


class LabelsUnavailableError(StsslError):
    """Operation requires per-point labels but the data has none."""


class PairIntegrityError(StsslError):
    """Match pairs reference clusters that do not exist."""


class NumericalError(StsslError):
    """Non-finite or degenerate value encountered in a numeric kernel."""


class ConfigError(StsslError):
    """Invalid configuration value."""
