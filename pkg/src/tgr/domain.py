"""Core value types and box geometry."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence, Union

from .errors import InvalidInputError, OutOfRangeError

# Timestamps are whole seconds and frame indices are plain ints; both are
# validated at the boundaries that consume them.
Timestamp = int
FrameIndex = int


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in corner form, half-open pixel semantics."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if min(self.x_min, self.y_min) < 0:
            raise InvalidInputError(f"negative box coordinate: {self.as_list()}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InvalidInputError(f"degenerate box: {self.as_list()}")

    @classmethod
    def of(cls, value: "BoxLike") -> "BoundingBox":
        if isinstance(value, BoundingBox):
            return value
        if isinstance(value, dict):
            return cls(value["x_min"], value["y_min"], value["x_max"], value["y_max"])
        coords = list(value)
        if len(coords) != 4:
            raise InvalidInputError(f"box needs 4 coordinates, got {coords!r}")
        return cls(*coords)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def as_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def to_dict(self) -> dict:
        return asdict(self)

    def within(self, width: float, height: float) -> bool:
        return self.x_max <= width and self.y_max <= height

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x_min <= other.x_min
            and self.y_min <= other.y_min
            and self.x_max >= other.x_max
            and self.y_max >= other.y_max
        )

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def lerp(self, other: "BoundingBox", t: float) -> "BoundingBox":
        if t <= 0:
            return self
        if t >= 1:
            return other
        a, b = self.as_list(), other.as_list()
        return BoundingBox(*(p + (q - p) * t for p, q in zip(a, b)))


BoxLike = Union[BoundingBox, Sequence[float], dict]


def iou(a: BoxLike, b: BoxLike) -> float:
    """Intersection over union of two boxes; 0.0 when they are disjoint."""
    a = BoundingBox.of(a)
    b = BoundingBox.of(b)
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class EpisodeMeta:
    fps: int = 30
    duration_s: int = 30
    frame_width: int = 640
    frame_height: int = 480

    def __post_init__(self) -> None:
        if self.fps < 1:
            raise InvalidInputError(f"fps must be >= 1, got {self.fps}")
        if self.duration_s < 1:
            raise InvalidInputError(f"duration_s must be >= 1, got {self.duration_s}")
        if self.frame_width < 1 or self.frame_height < 1:
            raise InvalidInputError("frame size must be positive")

    @property
    def total_frames(self) -> int:
        return self.duration_s * self.fps

    @property
    def last_frame(self) -> FrameIndex:
        return self.total_frames - 1

    def check_frame(self, f: FrameIndex) -> FrameIndex:
        if not 0 <= f < self.total_frames:
            raise OutOfRangeError(f"frame {f} outside [0, {self.total_frames})")
        return f

    def check_second(self, t: Timestamp) -> Timestamp:
        if not 0 <= t <= self.duration_s:
            raise OutOfRangeError(f"second {t} outside [0, {self.duration_s}]")
        return t

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeMeta":
        return cls(**d)


def second_to_frame(t: Timestamp, meta: EpisodeMeta) -> FrameIndex:
    return meta.check_second(t) * meta.fps


@dataclass(frozen=True)
class FrameRange:
    """Frames [start, end)."""

    start: FrameIndex
    end: FrameIndex

    def __post_init__(self) -> None:
        if self.start < 0 or self.start >= self.end:
            raise InvalidInputError(f"empty or negative frame range [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def __contains__(self, f: object) -> bool:
        return isinstance(f, int) and self.start <= f < self.end

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end}

    @classmethod
    def clamped(cls, start: int, end: int, total_frames: int) -> "FrameRange":
        return cls(max(0, start), min(total_frames, end))


AXES = ("hops", "spatial", "interactions", "observability")
AXIS_VALUES = {
    "hops": ("single", "multi"),
    "spatial": ("simple", "complex"),
    "interactions": ("single", "multi"),
    "observability": ("full", "partial"),
}
# Report column code for each (axis, value).
CELL_CODES = {
    ("hops", "single"): "sh",
    ("hops", "multi"): "mh",
    ("spatial", "simple"): "ss",
    ("spatial", "complex"): "sc",
    ("observability", "full"): "co",
    ("observability", "partial"): "po",
    ("interactions", "single"): "si",
    ("interactions", "multi"): "mi",
}


@dataclass(frozen=True)
class BifurcationTags:
    hops: str
    spatial: str
    interactions: str
    observability: str

    def __post_init__(self) -> None:
        for axis in AXES:
            value = getattr(self, axis)
            if value not in AXIS_VALUES[axis]:
                raise InvalidInputError(f"{axis} must be one of {AXIS_VALUES[axis]}, got {value!r}")

    def cells(self) -> Iterable[str]:
        for axis in AXES:
            yield CELL_CODES[(axis, getattr(self, axis))]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BifurcationTags":
        return cls(**d)
