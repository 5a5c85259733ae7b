"""Direct and refined video grounding baselines.

Both ask a video describer for a description of the target and ground that
description on the final frame.  Neither tracks, so a target hidden at the
end of the video cannot be recovered.
"""

from __future__ import annotations

from dataclasses import dataclass

from .backends.base import Backends
from .errors import BaselineError, InvalidInputError
from .trace import GroundingTrace, StageFailed, TraceRecorder

AMBIGUOUS_FALLBACK = "ambiguous-fallback"


@dataclass(frozen=True)
class RefineBudget:
    max_rounds: int = 3

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise InvalidInputError("refine budget must be >= 1")


def _ground(video, description: str, backends: Backends) -> list:
    boxes = backends.grounder.ground_phrase(video, video.frame(video.meta.last_frame), description)
    if not boxes:
        raise BaselineError(f"nothing in the final frame matches {description!r}", stage="phrase-grounder")
    return boxes


def _boxes_out(boxes) -> dict:
    return {"boxes": [b.as_list() for b in boxes]}


def _run(pipeline: str, video, instruction: str, backends: Backends, rounds: int) -> GroundingTrace:
    if backends.describer is None:
        raise InvalidInputError("baselines need a describer backend")
    rec = TraceRecorder(pipeline, video.id)
    # The describer sees the instruction itself: these baselines have no parser.
    question = instruction
    try:
        description = rec.run(
            "video-describer",
            {"question": question},
            lambda: backends.describer.describe_target(video, question),
            lambda d: {"description": d},
        )
        boxes = rec.run("phrase-grounder", {"phrase": description}, lambda: _ground(video, description, backends), _boxes_out)
        for round_ in range(1, rounds + 1):
            if len(boxes) <= 1:
                break
            refined = rec.run(
                "video-describer",
                {"question": question, "previous": description, "round": round_},
                lambda: backends.describer.refine(video, question, description),
                lambda d: {"description": d},
            )
            rec.iterations = round_
            if refined == description:
                break
            narrower = rec.run(
                "phrase-grounder",
                {"phrase": refined},
                lambda: backends.grounder.ground_phrase(video, video.frame(video.meta.last_frame), refined),
                _boxes_out,
            )
            if not narrower:
                break
            description, boxes = refined, narrower
    except StageFailed:
        return rec.finish(None)
    if len(boxes) > 1:
        rec.notes.append(AMBIGUOUS_FALLBACK)
    return rec.finish(boxes[0])


def run_dtvg(video, instruction: str, backends: Backends) -> GroundingTrace:
    return _run("dtvg", video, instruction, backends, rounds=0)


def run_rtvg(video, instruction: str, backends: Backends, budget: RefineBudget = RefineBudget()) -> GroundingTrace:
    return _run("rtvg", video, instruction, backends, rounds=budget.max_rounds)
