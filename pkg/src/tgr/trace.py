"""Per-stage record of one pipeline run."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .domain import BoundingBox
from .errors import TGRError

STAGES = (
    "temporal-parser",
    "event-localizer",
    "interval-constructor",
    "target-detector",
    "tracker",
    "grounding-propagation",
    "final",
)
BASELINE_STAGES = ("video-describer", "phrase-grounder", "final")


def digest(inputs: Any) -> str:
    text = json.dumps(inputs, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class StageRecord:
    stage: str
    inputs: dict
    inputs_digest: str
    output: Optional[dict] = None
    error: Optional[dict] = None
    duration_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self, durations: bool = True) -> dict:
        out = {
            "stage": self.stage,
            "inputs": self.inputs,
            "inputs_digest": self.inputs_digest,
            "output": self.output,
            "error": self.error,
        }
        if durations:
            out["duration_ms"] = self.duration_ms
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StageRecord":
        return cls(d["stage"], d["inputs"], d["inputs_digest"], d.get("output"), d.get("error"), d.get("duration_ms", 0.0))


@dataclass(frozen=True)
class GroundingTrace:
    pipeline: str
    episode_id: str
    records: tuple
    iterations: int = 0
    final_box: Optional[BoundingBox] = None
    action: Optional[str] = None
    notes: tuple = ()

    @property
    def error_stage(self) -> Optional[str]:
        for r in self.records:
            if not r.ok:
                return r.stage
        return None

    @property
    def error(self) -> Optional[dict]:
        return next((r.error for r in self.records if not r.ok), None)

    def stages(self) -> list:
        return [r.stage for r in self.records]

    def stage_durations_ms(self) -> dict:
        out = {}
        for r in self.records:
            out[r.stage] = round(out.get(r.stage, 0.0) + r.duration_ms, 3)
        return out

    def to_dict(self, durations: bool = True) -> dict:
        return {
            "pipeline": self.pipeline,
            "episode_id": self.episode_id,
            "iterations": self.iterations,
            "final_box": None if self.final_box is None else self.final_box.as_list(),
            "action": self.action,
            "notes": list(self.notes),
            "records": [r.to_dict(durations) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundingTrace":
        box = d.get("final_box")
        return cls(
            d["pipeline"],
            d["episode_id"],
            tuple(StageRecord.from_dict(r) for r in d["records"]),
            d.get("iterations", 0),
            None if box is None else BoundingBox.of(box),
            d.get("action"),
            tuple(d.get("notes", ())),
        )


class StageFailed(Exception):
    """Internal signal: a stage error was recorded and the run must stop."""


class TraceRecorder:
    """Mutable builder used while a run is in progress."""

    def __init__(self, pipeline: str, episode_id: str, clock: Callable[[], float] = time.perf_counter):
        self.pipeline = pipeline
        self.episode_id = episode_id
        self.records = []
        self.iterations = 0
        self.action = None
        self.notes = []
        self._clock = clock

    def run(self, stage: str, inputs: dict, fn: Callable[[], Any], show: Callable[[Any], dict]) -> Any:
        """Call ``fn`` as one stage; errors are recorded then raise StageFailed."""
        t0 = self._clock()
        try:
            value = fn()
        except TGRError as exc:
            self._add(stage, inputs, None, {"type": type(exc).__name__, "message": str(exc)}, t0)
            raise StageFailed(stage) from exc
        self._add(stage, inputs, show(value), None, t0)
        return value

    def fail(self, stage: str, inputs: dict, exc: TGRError) -> None:
        self._add(stage, inputs, None, {"type": type(exc).__name__, "message": str(exc)}, self._clock())
        raise StageFailed(stage) from exc

    def _add(self, stage, inputs, output, error, t0) -> None:
        ms = (self._clock() - t0) * 1000.0
        self.records.append(StageRecord(stage, inputs, digest(inputs), output, error, round(ms, 3)))

    def finish(self, final_box: Optional[BoundingBox]) -> GroundingTrace:
        if final_box is not None:
            self.records.append(StageRecord("final", {}, digest({}), {"box": final_box.as_list()}))
        return GroundingTrace(
            self.pipeline,
            self.episode_id,
            tuple(self.records),
            self.iterations,
            final_box,
            self.action,
            tuple(self.notes),
        )
