"""
Exception hierarchy for the landmark retrieval package.

Every error raised by library code derives from ``LandmarkRetrievalError``;
leaf classes also derive from the closest builtin so that callers catching
``ValueError`` or ``RuntimeError`` keep working. Only the CLI turns these
into exit codes.
"""


class LandmarkRetrievalError(Exception):
    """Base class for all package errors."""


# geometry
class InvalidDepthError(LandmarkRetrievalError, ValueError):
    """Depth is not strictly positive."""


class OutOfBoundsError(LandmarkRetrievalError, ValueError):
    """Pixel lies outside the image."""


class BehindCameraError(LandmarkRetrievalError, ValueError):
    """Point has non-positive depth in the camera frame."""


# scenegen
class SceneGenerationError(LandmarkRetrievalError, RuntimeError):
    """Layout or camera placement failed after the bounded number of retries."""


# dataset
class EmptyBatchError(LandmarkRetrievalError, ValueError):
    """A batch was requested from no views or produced no patches."""


class DatasetFormatError(LandmarkRetrievalError, ValueError):
    """On-disk dataset or scene files are missing or malformed."""


# landmarks
class EmptyPositiveSetError(LandmarkRetrievalError, ValueError):
    """A landmark has no (or too few) positive patches; the caller resamples."""


# objective
class ZeroNormError(LandmarkRetrievalError, ValueError):
    """An embedding row has zero norm, so its cosine score is undefined."""


class UndefinedAPError(LandmarkRetrievalError, ValueError):
    """Average precision is undefined because there are no positive pairs."""


# encoder
class CorruptedStateError(LandmarkRetrievalError, RuntimeError):
    """Encoder parameters contain NaN or infinite values."""


class ShapeMismatchError(LandmarkRetrievalError, ValueError):
    """Array shapes do not match the encoder architecture."""


class CheckpointError(LandmarkRetrievalError, ValueError):
    """Checkpoint file is missing, truncated or of an unknown version."""


# tasks
class InsufficientMatchesError(LandmarkRetrievalError, ValueError):
    """Fewer matches than the minimal solver needs."""


class ProbeTrainingError(LandmarkRetrievalError, ValueError):
    """Linear probe cannot be trained (fewer than two classes)."""


# cli
class ConfigError(LandmarkRetrievalError, ValueError):
    """Configuration file or override is invalid."""
