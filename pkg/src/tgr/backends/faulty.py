"""Oracle backends with seeded, per-role corruption.

Each call derives its own RNG from a hash of the profile seed, the run seed,
the episode id, the role and a fingerprint of the call's inputs.  The first
draw is always the fault decision ``u`` and is compared against the rate, so
raising a rate only ever adds faulted calls; fault parameters come after.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from ..domain import BoundingBox
from ..language import ParsedInstruction
from .base import Backends, FaultProfile
from .oracle import (
    OracleDescriber,
    OracleDetector,
    OracleGrounder,
    OracleLocalizer,
    OracleParser,
    OracleTracker,
    check_track_range,
    follow,
)


@dataclass(frozen=True)
class _Faults:
    profile: FaultProfile
    run_seed: int

    def rng(self, video_id: str, role: str, *fingerprint) -> random.Random:
        key = "|".join(str(p) for p in (self.profile.seed, self.run_seed, video_id, role, *fingerprint))
        return random.Random(int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big"))


def _frame_ids(frames) -> str:
    return ",".join(str(f.frame) for f in frames)


def scramble(text: str) -> str:
    return " ".join(reversed(text.split()))


class FaultyParser(OracleParser):
    def __init__(self, faults: _Faults):
        self.faults = faults

    def parse(self, instruction: str) -> ParsedInstruction:
        parsed = super().parse(instruction)
        rng = self.faults.rng("-", "parser", instruction)
        if rng.random() < self.faults.profile.parser.scramble_rate:
            return ParsedInstruction(scramble(parsed.temporal_question), scramble(parsed.object_question), parsed.action)
        return parsed


class FaultyLocalizer(OracleLocalizer):
    def __init__(self, faults: _Faults):
        self.faults = faults

    def localize(self, video, temporal_question: str) -> int:
        k = super().localize(video, temporal_question)
        cfg = self.faults.profile.localizer
        rng = self.faults.rng(video.id, "localizer", temporal_question)
        if rng.random() < cfg.rate:
            k = min(max(k + rng.choice(cfg.offsets), 0), video.meta.duration_s)
        return k


class FaultyDetector(OracleDetector):
    def __init__(self, faults: _Faults):
        self.faults = faults

    def identify_class(self, video, frames, object_question: str) -> str:
        true_class = super().identify_class(video, frames, object_question)
        rng = self.faults.rng(video.id, "identify", object_question, _frame_ids(frames))
        if rng.random() < self.faults.profile.detector.wrong_class_rate:
            others = sorted({e.class_name for e in frames[-1].visible()} - {true_class})
            if others:
                return rng.choice(others)
        return true_class

    def select_option(self, video, frames, object_question: str, options) -> int:
        label = super().select_option(video, frames, object_question, options)
        fingerprint = ";".join(str(o.box.as_list()) for o in options)
        rng = self.faults.rng(video.id, "select", object_question, _frame_ids(frames), fingerprint)
        if rng.random() < self.faults.profile.detector.wrong_option_rate and len(options) > 1:
            return rng.choice([o.label for o in options if o.label != label])
        return label


class FaultyGrounder(OracleGrounder):
    def __init__(self, faults: _Faults):
        self.faults = faults

    def ground_phrase(self, video, frame, phrase: str) -> list:
        boxes = super().ground_phrase(video, frame, phrase)
        cfg = self.faults.profile.grounder
        rng = self.faults.rng(video.id, "grounder", frame.frame, phrase)
        if rng.random() < cfg.miss_rate:
            return []
        if cfg.jitter_px:
            boxes = [self._jitter(b, rng, cfg.jitter_px, frame.frame_width, frame.frame_height) for b in boxes]
        return boxes

    @staticmethod
    def _jitter(box: BoundingBox, rng: random.Random, px: int, width: int, height: int) -> BoundingBox:
        d = [rng.randint(-px, px) for _ in range(4)]
        x0 = min(max(box.x_min + d[0], 0), width - 1)
        y0 = min(max(box.y_min + d[1], 0), height - 1)
        x1 = min(max(box.x_max + d[2], x0 + 1), width)
        y1 = min(max(box.y_max + d[3], y0 + 1), height)
        return BoundingBox(x0, y0, x1, y1)


class FaultyTracker(OracleTracker):
    def __init__(self, faults: _Faults):
        self.faults = faults

    def track(self, video, start, end, box):
        world = video.world
        check_track_range(world, start, end)
        oid = self.bind(world, start, box)
        rng = self.faults.rng(video.id, "tracker", start, end, box.as_list())
        if rng.random() < self.faults.profile.tracker.swap_rate:
            oid = nearest_twin(world, oid, start) or oid
        return follow(world, oid, start, end)


def nearest_twin(world, oid: str, f: int):
    """Closest visible object of the same class, or None."""
    cls = world.objects[oid].class_name
    cx, cy = world.box_at(oid, f).center
    twins = []
    for other in world.objects.values():
        if other.id == oid or other.class_name != cls or not world.is_visible(other.id, f):
            continue
        ox, oy = world.box_at(other.id, f).center
        twins.append(((ox - cx) ** 2 + (oy - cy) ** 2, other.id))
    return min(twins)[1] if twins else None


def faulty_backends(profile: FaultProfile, run_seed: int = 0, ambiguity: int = 0) -> Backends:
    faults = _Faults(profile, run_seed)
    return Backends(
        FaultyParser(faults),
        FaultyLocalizer(faults),
        FaultyDetector(faults),
        FaultyGrounder(faults),
        FaultyTracker(faults),
        OracleDescriber(ambiguity),
        name="faulty",
    )


__all__ = ["faulty_backends", "nearest_twin", "scramble"]
