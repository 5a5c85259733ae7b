"""Exception hierarchy.

Stage errors carry the name of the pipeline stage that raised them so a
trace can record where a run stopped.
"""

from __future__ import annotations


class TGRError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(TGRError, ValueError):
    pass


class OutOfRangeError(TGRError, IndexError):
    pass


class NotFoundError(TGRError, LookupError):
    pass


class AmbiguityError(TGRError, LookupError):
    pass


class ScriptValidationError(TGRError, ValueError):
    pass


class ConfigError(TGRError, ValueError):
    pass


class ConsistencyError(TGRError, ValueError):
    pass


class UsageError(TGRError, ValueError):
    pass


class StageError(TGRError):
    """An error attributable to one pipeline stage."""

    stage = "unknown"

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class ParseError(StageError):
    stage = "temporal-parser"


class LocalizationError(StageError):
    stage = "event-localizer"


class DetectorError(StageError):
    stage = "target-detector"


class TrackInitError(StageError):
    stage = "tracker"


class PropagationError(StageError):
    stage = "grounding-propagation"


class BaselineError(StageError):
    stage = "baseline"


class BackendError(StageError):
    """Transport or protocol failure talking to a remote model server."""

    stage = "backend"
