"""Exception hierarchy shared by all respcam modules.

Every error raised by the library derives from :class:`RespcamError`, so
callers (CLI, service) can map failures to structured responses. Pipeline
stages annotate exceptions with a ``stage`` attribute as they propagate.
"""

from __future__ import annotations


class RespcamError(Exception):
    """Base class for all respcam errors."""

    #: pipeline stage that raised, filled in by the estimator
    stage: str | None = None


class ConfigurationError(RespcamError):
    """Invalid or inconsistent configuration values."""


class FormatError(RespcamError):
    """Malformed input data: mismatched dimensions, lengths, or rates."""


class InsufficientDataError(RespcamError):
    """Input too short to process (fewer than 2 frames, signal too short)."""


class DegenerateBoxError(RespcamError):
    """Box with zero width or height where a proper region is required."""


class ManifestError(RespcamError):
    """Problems with dataset manifests or detection tracks."""


class AnnotationError(RespcamError):
    """Empty or non-increasing peak annotations."""


class NoRateError(RespcamError):
    """Too few peaks detected to derive a respiration rate."""


class InsufficientResolutionError(RespcamError):
    """No spectral bins fall inside the analysis band."""
