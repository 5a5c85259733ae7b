from .base import (
    Backends,
    FaultProfile,
    GroundedOption,
    ParsedInstruction,
    TrackOutcome,
    label_options,
)
from .faulty import faulty_backends
from .oracle import oracle_backends

__all__ = [
    "Backends",
    "FaultProfile",
    "GroundedOption",
    "ParsedInstruction",
    "TrackOutcome",
    "faulty_backends",
    "label_options",
    "oracle_backends",
]
