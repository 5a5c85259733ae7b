"""Scripted world description and per-frame scene types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from ..domain import BoundingBox, EpisodeMeta, FrameIndex
from ..errors import InvalidInputError
from ..language import VERBS

VISIBLE = "visible"
CONTAINED = "contained_in"
ABSENT = "absent"


@dataclass(frozen=True)
class WorldObject:
    id: str
    class_name: str
    attributes: tuple = ()
    initial_box: BoundingBox = None

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidInputError("object id must not be empty")
        if not self.class_name:
            raise InvalidInputError(f"object {self.id!r} has an empty class_name")
        if self.initial_box is None:
            raise InvalidInputError(f"object {self.id!r} has no initial_box")
        object.__setattr__(self, "attributes", tuple(self.attributes))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "class_name": self.class_name,
            "attributes": list(self.attributes),
            "initial_box": self.initial_box.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldObject":
        return cls(d["id"], d["class_name"], tuple(d.get("attributes", ())), BoundingBox.of(d["initial_box"]))


@dataclass(frozen=True)
class InteractionEvent:
    """A human interaction spanning ``[start_s, end_s]``.

    ``motion`` maps an affected object id to the box it occupies once the
    event ends; boxes are linearly interpolated over the span.
    """

    verb: str
    patient: str
    start_s: int
    end_s: int
    instrument: Optional[str] = None
    motion: Mapping[str, BoundingBox] = field(default_factory=dict)
    actor_role: str = "human"

    def __post_init__(self) -> None:
        if self.verb not in VERBS:
            raise InvalidInputError(f"unknown verb {self.verb!r}")
        if self.actor_role != "human":
            raise InvalidInputError("actor_role must be 'human'")

    @property
    def participants(self) -> tuple:
        return (self.patient,) if self.instrument is None else (self.patient, self.instrument)

    @property
    def midpoint_s(self) -> int:
        return (self.start_s + self.end_s) // 2

    def role_object(self, role: str) -> Optional[str]:
        return self.patient if role == "patient" else self.instrument

    def to_dict(self) -> dict:
        return {
            "verb": self.verb,
            "actor_role": self.actor_role,
            "patient": self.patient,
            "instrument": self.instrument,
            "start_s": self.start_s,
            "end_s": self.end_s,
            "motion": {k: v.to_dict() for k, v in sorted(self.motion.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InteractionEvent":
        return cls(
            verb=d["verb"],
            patient=d["patient"],
            start_s=d["start_s"],
            end_s=d["end_s"],
            instrument=d.get("instrument"),
            motion={k: BoundingBox.of(v) for k, v in d.get("motion", {}).items()},
            actor_role=d.get("actor_role", "human"),
        )


@dataclass(frozen=True)
class WorldScript:
    meta: EpisodeMeta
    objects: tuple
    events: tuple = ()
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "events", tuple(self.events))

    def to_dict(self) -> dict:
        return {
            "meta": self.meta.to_dict(),
            "objects": [o.to_dict() for o in self.objects],
            "events": [e.to_dict() for e in self.events],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldScript":
        return cls(
            EpisodeMeta.from_dict(d["meta"]),
            tuple(WorldObject.from_dict(o) for o in d["objects"]),
            tuple(InteractionEvent.from_dict(e) for e in d.get("events", ())),
            d.get("seed", 0),
        )


@dataclass(frozen=True)
class SceneEntry:
    object_id: str
    class_name: str
    attributes: tuple
    box: BoundingBox
    visibility: str = VISIBLE
    container: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "class_name": self.class_name,
            "attributes": list(self.attributes),
            "box": self.box.to_dict(),
            "visibility": self.visibility,
            "container": self.container,
        }


@dataclass(frozen=True)
class SceneSnapshot:
    """Abstract stand-in for one video frame."""

    frame: FrameIndex
    entries: tuple
    frame_width: int = 640
    frame_height: int = 480
    raster: Optional[str] = None

    def entry(self, object_id: str) -> SceneEntry:
        for e in self.entries:
            if e.object_id == object_id:
                return e
        raise KeyError(object_id)

    def visible(self) -> list:
        return [e for e in self.entries if e.visibility == VISIBLE]

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "entries": [e.to_dict() for e in self.entries],
            "raster": self.raster,
        }


@dataclass(frozen=True)
class VisibilityState:
    """visible(box) | contained_in(container, container box) | absent."""

    kind: str
    box: Optional[BoundingBox] = None
    container: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind == VISIBLE and (self.box is None or self.container is not None):
            raise InvalidInputError("visible state needs a box and no container")
        if self.kind == CONTAINED and (self.box is None or self.container is None):
            raise InvalidInputError("contained state needs a container and its box")
        if self.kind == ABSENT and (self.box is not None or self.container is not None):
            raise InvalidInputError("absent state carries no box")
        if self.kind not in (VISIBLE, CONTAINED, ABSENT):
            raise InvalidInputError(f"unknown visibility {self.kind!r}")

    @classmethod
    def visible(cls, box: BoundingBox) -> "VisibilityState":
        return cls(VISIBLE, box)

    @classmethod
    def contained_in(cls, container: str, box: BoundingBox) -> "VisibilityState":
        return cls(CONTAINED, box, container)

    @classmethod
    def absent(cls) -> "VisibilityState":
        return cls(ABSENT)
