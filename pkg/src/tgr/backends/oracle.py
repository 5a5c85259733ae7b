"""Backends that answer every role from the simulator's ground truth."""

from __future__ import annotations

from typing import Sequence

from ..domain import BoundingBox, FrameIndex, iou
from ..errors import (
    BaselineError,
    DetectorError,
    LocalizationError,
    OutOfRangeError,
    ParseError,
    TGRError,
    TrackInitError,
)
from ..language import (
    OccluderRef,
    PresentRef,
    describe,
    parse_any,
    parse_instruction,
    parse_object_question,
    parse_temporal_question,
    phrase_matches,
    render,
)
from ..world.script import SceneSnapshot
from ..world.world import World
from .base import Backends, GroundedOption, TrackOutcome


def _world(video) -> World:
    return video.world


def _frames_required(frames: Sequence[SceneSnapshot]) -> None:
    if not frames:
        raise DetectorError("no frames to reason over")


def resolve_target(world: World, frames: Sequence[SceneSnapshot], object_question: str) -> str:
    """Object the question refers to, judged only from the sampled frames.

    Past-interaction questions are answered from interactions that overlap
    the sampled frames, so a badly placed interval yields a wrong or missing
    answer instead of the globally correct one.
    """
    _frames_required(frames)
    last = frames[-1].frame
    ref = parse_object_question(object_question)
    if ref is None:
        raise DetectorError(f"cannot interpret object question {object_question!r}")
    if isinstance(ref, OccluderRef):
        try:
            seen = world.bind_box(ref.last_box, world.meta.check_frame(ref.last_frame))
        except OutOfRangeError as exc:
            raise DetectorError(str(exc)) from None
        if seen is None:
            raise DetectorError("nothing was at the last tracked box")
        outer = world.outermost_visible(seen, last)
        if outer is None:
            raise DetectorError(f"{seen} is neither visible nor inside a visible container")
        return outer
    if isinstance(ref, PresentRef):
        hits = [
            e.object_id
            for e in frames[-1].visible()
            if ref.noun in ("object", e.class_name) and set(ref.attributes) <= set(e.attributes)
        ]
        if len(hits) != 1:
            raise DetectorError(f"{len(hits)} visible objects fit {ref.noun!r}")
        return hits[0]
    fps = world.meta.fps
    lo = frames[0].frame
    local = ref.local()
    cands = [
        e
        for e in world.events
        if world.event_matches(e, local) and e.start_s * fps <= last and e.end_s * fps >= lo
    ]
    if not cands:
        raise DetectorError(f"no {ref.verb} interaction inside frames [{lo}, {last}]")
    chosen = None
    if len(cands) > 1:
        try:
            intended = world.find_event(ref)
        except TGRError:
            intended = None
        if intended in cands:
            chosen = intended
    if chosen is None:
        chosen = max(cands, key=lambda e: (min(last, e.end_s * fps) - max(lo, e.start_s * fps), -e.start_s))
    return chosen.role_object(ref.role)


def ground_visible(frame: SceneSnapshot, phrase: str) -> list:
    """Boxes of visible objects fitting the phrase, left to right."""
    hits = [e for e in frame.visible() if phrase_matches(phrase, e.class_name, e.attributes)]
    hits.sort(key=lambda e: (e.box.x_min, e.box.y_min, e.object_id))
    return [e.box for e in hits]


def follow(world: World, oid: str, start: FrameIndex, end: FrameIndex) -> TrackOutcome:
    boxes = []
    for f in range(start, end):
        if not world.is_visible(oid, f):
            return TrackOutcome.lost(start, end, f, boxes)
        boxes.append(world.box_at(oid, f))
    return TrackOutcome.completed(start, boxes)


def check_track_range(world: World, start: FrameIndex, end: FrameIndex) -> None:
    if not 0 <= start < end <= world.meta.total_frames:
        raise TrackInitError(f"track range [{start}, {end}) outside the episode")


class OracleParser:
    def parse(self, instruction: str):
        if not instruction or not instruction.strip():
            raise ParseError("empty instruction")
        parsed = parse_instruction(instruction)
        if parsed is None:
            raise ParseError(f"instruction fits no template: {instruction!r}")
        ref, action = parsed
        return render(ref, action).parsed


class OracleLocalizer:
    def localize(self, video, temporal_question: str) -> int:
        world = _world(video)
        ref = parse_temporal_question(temporal_question)
        if ref is None:
            raise LocalizationError(f"cannot interpret temporal question {temporal_question!r}")
        if isinstance(ref, PresentRef):
            return world.meta.duration_s
        try:
            return world.find_event(ref).midpoint_s
        except TGRError as exc:
            raise LocalizationError(str(exc)) from None


class OracleDetector:
    def identify_class(self, video, frames, object_question: str) -> str:
        world = _world(video)
        return world.objects[resolve_target(world, frames, object_question)].class_name

    def select_option(self, video, frames, object_question: str, options: Sequence[GroundedOption]) -> int:
        if not options:
            raise DetectorError("no options to choose from")
        world = _world(video)
        target = resolve_target(world, frames, object_question)
        f = frames[-1].frame
        if not world.is_visible(target, f):
            raise DetectorError(f"{target} is not visible in frame {f}")
        tbox = world.box_at(target, f)
        best, best_iou = None, 0.5
        for opt in options:
            v = iou(opt.box, tbox)
            if v >= best_iou and (best is None or v > best_iou):
                best, best_iou = opt.label, v
        if best is None:
            raise DetectorError("no option shows the target")
        return best


class OracleGrounder:
    def ground_phrase(self, video, frame: SceneSnapshot, phrase: str) -> list:
        return ground_visible(frame, phrase)


class OracleTracker:
    def bind(self, world: World, start: FrameIndex, box: BoundingBox) -> str:
        oid = world.bind_box(box, start)
        if oid is None:
            raise TrackInitError(f"no object under the initial box at frame {start}")
        return oid

    def track(self, video, start: FrameIndex, end: FrameIndex, box: BoundingBox) -> TrackOutcome:
        world = _world(video)
        check_track_range(world, start, end)
        return follow(world, self.bind(world, start, box), start, end)


class OracleDescriber:
    """Describes the target, dropping the last ``ambiguity`` attributes."""

    def __init__(self, ambiguity: int = 0):
        if ambiguity < 0:
            raise ValueError("ambiguity must be non-negative")
        self.ambiguity = ambiguity

    def _target(self, video, object_question: str):
        world = _world(video)
        ref = parse_any(object_question)
        if ref is None:
            raise BaselineError(f"cannot interpret {object_question!r}", stage="video-describer")
        try:
            return world.objects[world.oracle_target(ref)]
        except TGRError as exc:
            raise BaselineError(str(exc), stage="video-describer") from None

    def describe_target(self, video, object_question: str) -> str:
        obj = self._target(video, object_question)
        keep = max(0, len(obj.attributes) - self.ambiguity)
        return describe(obj.class_name, obj.attributes[:keep])

    def refine(self, video, object_question: str, description: str) -> str:
        obj = self._target(video, object_question)
        n = len(obj.attributes)
        shown = next((k for k in range(n, -1, -1) if describe(obj.class_name, obj.attributes[:k]) == description), 0)
        return describe(obj.class_name, obj.attributes[: min(n, shown + 1)])


def oracle_backends(ambiguity: int = 0) -> Backends:
    return Backends(
        OracleParser(),
        OracleLocalizer(),
        OracleDetector(),
        OracleGrounder(),
        OracleTracker(),
        OracleDescriber(ambiguity),
        name="oracle",
    )

