"""Compiled, immutable world: snapshot queries and ground-truth oracles."""

from __future__ import annotations

import bisect
from typing import Optional, Union

from ..domain import BoundingBox, FrameIndex, Timestamp, iou
from ..errors import AmbiguityError, NotFoundError, ScriptValidationError
from ..language import GENERIC_NOUN, EventRef, PresentRef, parse_any
from .script import (
    ABSENT,
    CONTAINED,
    VISIBLE,
    InteractionEvent,
    SceneEntry,
    SceneSnapshot,
    VisibilityState,
    WorldScript,
)


def compile_script(script: WorldScript) -> "World":
    return World(script)


def centered_cover_box(container: BoundingBox, patient: BoundingBox, width: float, height: float) -> BoundingBox:
    """Container box centred over the patient, shifted to stay in frame."""
    cx, cy = patient.center
    hw, hh = container.width / 2, container.height / 2
    x0, y0 = cx - hw, cy - hh
    dx = -x0 if x0 < 0 else min(0, width - (cx + hw))
    dy = -y0 if y0 < 0 else min(0, height - (cy + hh))
    return BoundingBox(x0 + dx, y0 + dy, cx + hw + dx, cy + hh + dy)


class World:
    """Answers snapshot and oracle queries for one compiled script."""

    def __init__(self, script: WorldScript):
        self.script = script
        self.meta = script.meta
        self.objects = {}
        for obj in script.objects:
            if obj.id in self.objects:
                raise ScriptValidationError(f"duplicate object id {obj.id!r}")
            if not obj.initial_box.within(self.meta.frame_width, self.meta.frame_height):
                raise ScriptValidationError(f"object {obj.id!r} starts outside the frame")
            self.objects[obj.id] = obj
        self._order = [o.id for o in script.objects]
        self._segments = {oid: [] for oid in self._order}  # (start_f, end_f, from, to)
        self._seg_starts = {oid: [] for oid in self._order}
        self._vis = {oid: [] for oid in self._order}  # (frame, kind, container)
        self._vis_frames = {oid: [] for oid in self._order}
        self.events = self._compile_events(script.events)
        self._snapshots = {}

    # -- compilation -------------------------------------------------------

    def _compile_events(self, events) -> tuple:
        fps = self.meta.fps
        width, height = self.meta.frame_width, self.meta.frame_height
        indexed = sorted(enumerate(events), key=lambda p: (p[1].start_s, p[0]))
        box = {oid: o.initial_box for oid, o in self.objects.items()}
        state = {oid: VISIBLE for oid in self.objects}
        contents = {oid: set() for oid in self.objects}
        busy_until = {}
        compiled = []
        for idx, ev in indexed:
            where = f"event {idx} ({ev.verb} {ev.patient})"
            for oid in ev.participants:
                if oid not in self.objects:
                    raise ScriptValidationError(f"{where}: unknown object {oid!r}")
            if ev.instrument == ev.patient:
                raise ScriptValidationError(f"{where}: patient and instrument are the same object")
            if not 0 <= ev.start_s < ev.end_s <= self.meta.duration_s:
                raise ScriptValidationError(
                    f"{where}: span [{ev.start_s}, {ev.end_s}] invalid for a {self.meta.duration_s}s episode"
                )
            for oid in ev.participants:
                if busy_until.get(oid, -1) > ev.start_s:
                    raise ScriptValidationError(f"{where}: overlaps another event on {oid!r}")
                if state[oid] != VISIBLE:
                    raise ScriptValidationError(f"{where}: {oid!r} is {state[oid]} when the event starts")
            for oid in ev.motion:
                if oid not in ev.participants:
                    raise ScriptValidationError(f"{where}: motion for non-participant {oid!r}")
                if contents[oid]:
                    raise ScriptValidationError(f"{where}: {oid!r} cannot move while it contains objects")
                if not ev.motion[oid].within(width, height):
                    raise ScriptValidationError(f"{where}: motion of {oid!r} leaves the frame")

            motion = dict(ev.motion)
            if ev.verb == "cover":
                if ev.instrument is None:
                    raise ScriptValidationError(f"{where}: cover needs a container instrument")
                if ev.patient in motion:
                    raise ScriptValidationError(f"{where}: covered object cannot move")
                if ev.instrument not in motion:
                    if contents[ev.instrument]:
                        raise ScriptValidationError(f"{where}: container already holds objects")
                    motion[ev.instrument] = centered_cover_box(box[ev.instrument], box[ev.patient], width, height)
                if not motion[ev.instrument].contains(box[ev.patient]):
                    raise ScriptValidationError(f"{where}: container box does not enclose the patient")
            if ev.verb == "remove":
                if ev.patient in motion:
                    raise ScriptValidationError(f"{where}: removed object cannot move")
                if contents[ev.patient]:
                    raise ScriptValidationError(f"{where}: cannot remove a container holding objects")

            start_f, end_f = ev.start_s * fps, ev.end_s * fps
            for oid in sorted(motion):
                self._segments[oid].append((start_f, end_f, box[oid], motion[oid]))
                self._seg_starts[oid].append(start_f)
                box[oid] = motion[oid]
            if ev.verb == "cover":
                self._vis[ev.patient].append((end_f, CONTAINED, ev.instrument))
                self._vis_frames[ev.patient].append(end_f)
                state[ev.patient] = CONTAINED
                contents[ev.instrument].add(ev.patient)
            elif ev.verb == "remove":
                self._vis[ev.patient].append((end_f, ABSENT, None))
                self._vis_frames[ev.patient].append(end_f)
                state[ev.patient] = ABSENT
            for oid in ev.participants:
                busy_until[oid] = ev.end_s
            compiled.append(
                InteractionEvent(ev.verb, ev.patient, ev.start_s, ev.end_s, ev.instrument, motion, ev.actor_role)
            )
        return tuple(compiled)

    # -- geometry and visibility -------------------------------------------

    @property
    def total_frames(self) -> int:
        return self.meta.total_frames

    @property
    def last_frame(self) -> FrameIndex:
        return self.meta.last_frame

    def _object(self, oid: str):
        try:
            return self.objects[oid]
        except KeyError:
            raise NotFoundError(f"unknown object {oid!r}") from None

    def box_at(self, oid: str, f: FrameIndex) -> BoundingBox:
        obj = self._object(oid)
        i = bisect.bisect_right(self._seg_starts[oid], f) - 1
        if i < 0:
            return obj.initial_box
        start_f, end_f, a, b = self._segments[oid][i]
        if f >= end_f:
            return b
        return a.lerp(b, (f - start_f) / (end_f - start_f))

    def state_at(self, oid: str, f: FrameIndex) -> tuple:
        """``(kind, container)`` of an object at frame f."""
        self._object(oid)
        i = bisect.bisect_right(self._vis_frames[oid], f) - 1
        if i < 0:
            return VISIBLE, None
        _, kind, container = self._vis[oid][i]
        return kind, container

    def is_visible(self, oid: str, f: FrameIndex) -> bool:
        return self.state_at(oid, f)[0] == VISIBLE

    def containment_chain(self, oid: str, f: FrameIndex) -> list:
        """``[oid, innermost container, ..., outermost visible container]``."""
        chain = [oid]
        kind, container = self.state_at(oid, f)
        while kind == CONTAINED:
            chain.append(container)
            kind, container = self.state_at(container, f)
        return chain

    def outermost_visible(self, oid: str, f: FrameIndex) -> Optional[str]:
        chain = self.containment_chain(oid, f)
        return chain[-1] if self.is_visible(chain[-1], f) else None

    def snapshot_at(self, f: FrameIndex) -> SceneSnapshot:
        self.meta.check_frame(f)
        snap = self._snapshots.get(f)
        if snap is None:
            entries = []
            for oid in self._order:
                obj = self.objects[oid]
                kind, container = self.state_at(oid, f)
                entries.append(SceneEntry(oid, obj.class_name, obj.attributes, self.box_at(oid, f), kind, container))
            snap = SceneSnapshot(f, tuple(entries), self.meta.frame_width, self.meta.frame_height)
            self._snapshots[f] = snap
        return snap

    def bind_box(self, box: BoundingBox, f: FrameIndex, threshold: float = 0.5) -> Optional[str]:
        """Visible object whose box best overlaps ``box`` (IoU >= threshold)."""
        best, best_iou = None, threshold
        for oid in self._order:
            if not self.is_visible(oid, f):
                continue
            v = iou(box, self.box_at(oid, f))
            if v > best_iou or (v == best_iou and best is None):
                best, best_iou = oid, v
        return best

    # -- oracles -------------------------------------------------------------

    def oracle_location(self, oid: str, f: FrameIndex) -> VisibilityState:
        self.meta.check_frame(f)
        kind, container = self.state_at(oid, f)
        if kind == VISIBLE:
            return VisibilityState.visible(self.box_at(oid, f))
        if kind == CONTAINED:
            return VisibilityState.contained_in(container, self.box_at(container, f))
        return VisibilityState.absent()

    def final_box(self, oid: str) -> Optional[BoundingBox]:
        """Box a correct grounding of ``oid`` should report at the last frame."""
        outer = self.outermost_visible(oid, self.last_frame)
        return None if outer is None else self.box_at(outer, self.last_frame)

    def event_matches(self, ev: InteractionEvent, ref: EventRef) -> bool:
        if ev.verb != ref.verb:
            return False
        oid = ev.role_object(ref.role)
        if oid is None:
            return False
        obj = self.objects[oid]
        if ref.noun != GENERIC_NOUN and obj.class_name != ref.noun:
            return False
        if not set(ref.attributes) <= set(obj.attributes):
            return False
        if ref.instrument is not None:
            if ev.instrument is None or self.objects[ev.instrument].class_name != ref.instrument:
                return False
        return True

    def _candidates(self, ref: EventRef) -> list:
        cands = [e for e in self.events if self.event_matches(e, ref)]
        if ref.anchor is not None:
            a = self.find_event(ref.anchor.event)
            if ref.anchor.relation == "after":
                cands = [e for e in cands if e is not a and e.start_s >= a.end_s]
                cands = cands[:1]
            else:
                cands = [e for e in cands if e is not a and e.end_s <= a.start_s]
                cands = cands[-1:]
        elif ref.ordinal is not None:
            pick = {"first": 0, "second": 1, "last": -1}[ref.ordinal]
            try:
                cands = [cands[pick]]
            except IndexError:
                cands = []
        return cands

    def find_event(self, ref: EventRef) -> InteractionEvent:
        cands = self._candidates(ref)
        if not cands:
            raise NotFoundError(f"no {ref.verb} event matches {ref}")
        if len(cands) > 1:
            raise AmbiguityError(f"{len(cands)} {ref.verb} events match an unqualified reference")
        return cands[0]

    def oracle_event_time(
        self,
        query: Union[EventRef, str],
        ordinal: Optional[str] = None,
        instrument: Optional[str] = None,
        role: str = "patient",
        noun: str = GENERIC_NOUN,
    ) -> Timestamp:
        """Representative second (span midpoint) of the referenced event."""
        if isinstance(query, str):
            query = EventRef(query, role, noun, ordinal=ordinal, instrument=instrument)
        return self.find_event(query).midpoint_s

    def oracle_target(self, query: Union[EventRef, PresentRef, str]) -> str:
        if isinstance(query, str):
            parsed = parse_any(query)
            if parsed is None:
                raise NotFoundError(f"cannot interpret query {query!r}")
            query = parsed
        if isinstance(query, PresentRef):
            f = self.last_frame
            hits = [
                oid
                for oid in self._order
                if self.is_visible(oid, f)
                and query.noun in (GENERIC_NOUN, self.objects[oid].class_name)
                and set(query.attributes) <= set(self.objects[oid].attributes)
            ]
            if not hits:
                raise NotFoundError(f"no visible {query.noun!r} in the current scene")
            if len(hits) > 1:
                raise AmbiguityError(f"{len(hits)} objects match {query.noun!r}")
            return hits[0]
        cands = self._candidates(query)
        owners = {e.role_object(query.role) for e in cands}
        if not owners:
            raise NotFoundError(f"no object fills the {query.role} of a {query.verb} event")
        if len(owners) > 1:
            raise AmbiguityError(f"objects {sorted(owners)} all satisfy the query")
        return owners.pop()
