"""Role contracts shared by the oracle, faulty and remote backends."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional, Protocol, Sequence

from ..domain import BoundingBox, FrameIndex
from ..errors import ConfigError, InvalidInputError, UsageError
from ..language import ParsedInstruction
from ..world.script import SceneSnapshot

__all__ = [
    "Backends",
    "DetectorFaults",
    "FaultProfile",
    "GroundedOption",
    "GrounderFaults",
    "LocalizerFaults",
    "ParsedInstruction",
    "ParserFaults",
    "TrackOutcome",
    "TrackerFaults",
    "Video",
]


class Video(Protocol):
    """What a backend may see of an episode: its id, metadata and frames."""

    id: str

    @property
    def meta(self): ...

    def frame(self, f: FrameIndex) -> SceneSnapshot: ...


@dataclass(frozen=True)
class GroundedOption:
    label: int
    box: BoundingBox
    description: str = ""

    def __post_init__(self) -> None:
        if self.label < 1:
            raise InvalidInputError(f"option labels start at 1, got {self.label}")

    def to_dict(self) -> dict:
        return {"label": self.label, "box": self.box.as_list(), "description": self.description}


def label_options(boxes: Sequence[BoundingBox], describe=None) -> list:
    """Number candidate boxes 1..m in grounder order."""
    out = []
    for i, box in enumerate(boxes, start=1):
        out.append(GroundedOption(i, box, describe(box) if describe else f"Object {i}"))
    return out


COMPLETED = "completed"
LOST = "lost"


@dataclass(frozen=True)
class TrackOutcome:
    """Per-frame boxes from ``start`` onwards and how tracking ended.

    ``boxes[i]`` is the box at frame ``start + i``.  A lost track stops at
    ``lost_frame`` (k′), the first frame where the target is out of view.
    """

    start: FrameIndex
    end: FrameIndex
    boxes: tuple
    terminal: str
    lost_frame: Optional[FrameIndex] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.terminal not in (COMPLETED, LOST):
            raise InvalidInputError(f"unknown track terminal {self.terminal!r}")
        if not self.boxes:
            raise InvalidInputError("a track covers at least its start frame")
        if self.terminal == COMPLETED and len(self.boxes) != self.end - self.start:
            raise InvalidInputError("a completed track has a box for every frame of its range")
        if self.terminal == LOST:
            if self.lost_frame is None or not self.start < self.lost_frame < self.end:
                raise InvalidInputError(f"lost frame {self.lost_frame} must lie strictly inside the range")
            if len(self.boxes) != self.lost_frame - self.start:
                raise InvalidInputError("a lost track has boxes up to the frame before it was lost")

    @classmethod
    def completed(cls, start: int, boxes) -> "TrackOutcome":
        boxes = tuple(boxes)
        return cls(start, start + len(boxes), boxes, COMPLETED)

    @classmethod
    def lost(cls, start: int, end: int, lost_frame: int, boxes) -> "TrackOutcome":
        return cls(start, end, tuple(boxes), LOST, lost_frame)

    @property
    def is_lost(self) -> bool:
        return self.terminal == LOST

    @property
    def last_box(self) -> BoundingBox:
        return self.boxes[-1]

    @property
    def last_frame(self) -> FrameIndex:
        return self.start + len(self.boxes) - 1

    def summary(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "terminal": self.terminal,
            "lost_frame": self.lost_frame,
            "last_box": self.last_box.as_list(),
        }


# -- fault profile ------------------------------------------------------------

def _check_rate(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class ParserFaults:
    scramble_rate: float = 0.0


@dataclass(frozen=True)
class LocalizerFaults:
    rate: float = 0.0
    offsets: tuple = (-3, -2, 2, 3)

    def __post_init__(self) -> None:
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        if self.rate > 0 and not self.offsets:
            raise ConfigError("localizer faults need at least one offset")


@dataclass(frozen=True)
class DetectorFaults:
    wrong_class_rate: float = 0.0
    wrong_option_rate: float = 0.0


@dataclass(frozen=True)
class GrounderFaults:
    jitter_px: int = 0
    miss_rate: float = 0.0


@dataclass(frozen=True)
class TrackerFaults:
    swap_rate: float = 0.0


_SECTIONS = {
    "parser": ParserFaults,
    "localizer": LocalizerFaults,
    "detector": DetectorFaults,
    "grounder": GrounderFaults,
    "tracker": TrackerFaults,
}


@dataclass(frozen=True)
class FaultProfile:
    """Per-role corruption settings; all-zero rates behave like the oracle."""

    seed: int = 0
    parser: ParserFaults = field(default_factory=ParserFaults)
    localizer: LocalizerFaults = field(default_factory=LocalizerFaults)
    detector: DetectorFaults = field(default_factory=DetectorFaults)
    grounder: GrounderFaults = field(default_factory=GrounderFaults)
    tracker: TrackerFaults = field(default_factory=TrackerFaults)

    def __post_init__(self) -> None:
        for section in _SECTIONS:
            for f in fields(getattr(self, section)):
                value = getattr(getattr(self, section), f.name)
                if f.name.endswith("rate"):
                    _check_rate(f"{section}.{f.name}", value)
        if self.grounder.jitter_px < 0:
            raise ConfigError("grounder.jitter_px must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "FaultProfile":
        unknown = set(d) - {"seed", *_SECTIONS}
        if unknown:
            raise ConfigError(f"unknown fault profile keys {sorted(unknown)}")
        kwargs = {"seed": int(d.get("seed", 0))}
        for name, section in _SECTIONS.items():
            body = d.get(name) or {}
            allowed = {f.name for f in fields(section)}
            if set(body) - allowed:
                raise ConfigError(f"unknown {name} fault keys {sorted(set(body) - allowed)}")
            kwargs[name] = section(**body)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        for name in _SECTIONS:
            section = getattr(self, name)
            out[name] = {
                f.name: list(getattr(section, f.name)) if f.name == "offsets" else getattr(section, f.name)
                for f in fields(section)
            }
        return out

    def with_field(self, dotted: str, value) -> "FaultProfile":
        """Copy with one ``section.field`` replaced, e.g. ``localizer.rate``."""
        section, _, name = dotted.partition(".")
        if section not in _SECTIONS or name not in {f.name for f in fields(_SECTIONS[section])}:
            raise UsageError(f"unknown fault profile field {dotted!r}")
        return replace(self, **{section: replace(getattr(self, section), **{name: value})})

    @staticmethod
    def field_names() -> list:
        return [f"{s}.{f.name}" for s, cls in _SECTIONS.items() for f in fields(cls)]

    @property
    def is_clean(self) -> bool:
        return (
            self.parser.scramble_rate == 0
            and self.localizer.rate == 0
            and self.detector.wrong_class_rate == 0
            and self.detector.wrong_option_rate == 0
            and self.grounder.miss_rate == 0
            and self.grounder.jitter_px == 0
            and self.tracker.swap_rate == 0
        )


# -- role protocols -------------------------------------------------------------

class Parser(Protocol):
    def parse(self, instruction: str) -> ParsedInstruction: ...


class Localizer(Protocol):
    def localize(self, video: Video, temporal_question: str) -> int: ...


class Detector(Protocol):
    def identify_class(self, video: Video, frames: Sequence[SceneSnapshot], object_question: str) -> str: ...

    def select_option(
        self, video: Video, frames: Sequence[SceneSnapshot], object_question: str, options: Sequence[GroundedOption]
    ) -> int: ...


class Grounder(Protocol):
    def ground_phrase(self, video: Video, frame: SceneSnapshot, phrase: str) -> list: ...


class Tracker(Protocol):
    def track(self, video: Video, start: FrameIndex, end: FrameIndex, box: BoundingBox) -> TrackOutcome: ...


class Describer(Protocol):
    def describe_target(self, video: Video, object_question: str) -> str: ...

    def refine(self, video: Video, object_question: str, description: str) -> str: ...


@dataclass(frozen=True)
class Backends:
    """One implementation per model role."""

    parser: Parser
    localizer: Localizer
    detector: Detector
    grounder: Grounder
    tracker: Tracker
    describer: Optional[Describer] = None
    name: str = "custom"
