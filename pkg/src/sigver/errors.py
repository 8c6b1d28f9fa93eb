"""Exception hierarchy shared by every stage."""


class SigverError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SigverError, ValueError):
    """Invalid configuration value or argument."""


class DegenerateImageError(SigverError, ValueError):
    """Image carries no usable signal (blank page, constant intensity)."""


class ShapeError(SigverError, ValueError):
    """Tensor or image dimensions are inconsistent."""


class ProtocolError(SigverError):
    """Corpus cannot satisfy the requested train/test protocol."""


class TrainingError(SigverError, RuntimeError):
    """An optimizer failed to converge."""


class FormatError(SigverError):
    """Artifact file has the wrong magic, version, or layout."""


class ReportingError(SigverError):
    """Requested metric is not defined for the available scores."""


class StageOrderError(SigverError):
    """A pipeline stage ran before its upstream artifact existed."""
