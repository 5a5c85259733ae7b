"""The grounded temporal-reasoning pipeline.

parse -> localize -> interval -> subsample -> detect -> (track -> re-detect)*
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .backends.base import Backends, GroundedOption, TrackOutcome, label_options
from .domain import BoundingBox, EpisodeMeta, FrameRange, Timestamp
from .errors import (
    DetectorError,
    InvalidInputError,
    LocalizationError,
    OutOfRangeError,
    PropagationError,
)
from .language import ParsedInstruction, occluder_question
from .trace import GroundingTrace, StageFailed, TraceRecorder


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 15
    n_max: int = 8
    widen_s: int = 1

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidInputError("n must be >= 1")
        if self.n_max < 0:
            raise InvalidInputError("n_max must be >= 0")


@dataclass(frozen=True)
class SubsampleSet:
    frames: tuple
    source_range: FrameRange
    n: int

    @property
    def indices(self) -> list:
        return [f.frame for f in self.frames]

    @property
    def last(self):
        return self.frames[-1]

    def to_dict(self) -> dict:
        return {"range": self.source_range.to_dict(), "n": self.n, "frames": self.indices}


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    frame: int
    class_phrase: str
    candidates: int
    label: int
    samples: SubsampleSet
    widened: bool = False

    def to_dict(self) -> dict:
        return {
            "box": self.box.as_list(),
            "frame": self.frame,
            "class": self.class_phrase,
            "candidates": self.candidates,
            "label": self.label,
            "range": self.samples.source_range.to_dict(),
            "widened": self.widened,
        }


def construct_interval(meta: EpisodeMeta, k: Timestamp, widen_s: int = 0) -> FrameRange:
    """Frames from the start of second k-1 to the start of second k+1."""
    meta.check_second(k)
    pad = 1 + widen_s
    return FrameRange.clamped((k - pad) * meta.fps, (k + pad) * meta.fps, meta.total_frames)


def subsample_indices(rng: FrameRange, n: int) -> list:
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    length = len(rng)
    n = min(n, length)
    return [rng.start + (j * length) // n for j in range(n)]


def subsample(rng: FrameRange, n: int, video) -> SubsampleSet:
    idx = subsample_indices(rng, n)
    return SubsampleSet(tuple(video.frame(i) for i in idx), rng, len(idx))


def _detect_once(video, samples: SubsampleSet, question: str, backends: Backends):
    phrase = backends.detector.identify_class(video, samples.frames, question)
    if not isinstance(phrase, str) or not phrase.strip():
        raise DetectorError("class identification returned no phrase")
    boxes = backends.grounder.ground_phrase(video, samples.last, phrase)
    if not boxes:
        return phrase, None
    options = label_options(boxes)
    label = backends.detector.select_option(video, samples.frames, question, options)
    chosen = _option(options, label)
    return phrase, Detection(chosen.box, samples.last.frame, phrase, len(options), label, samples)


def _option(options, label) -> GroundedOption:
    for opt in options:
        if opt.label == label:
            return opt
    raise DetectorError(f"selected label {label!r} is not one of 1..{len(options)}")


def detect_target(video, samples: SubsampleSet, question: str, backends: Backends, widen_s: int = 1) -> Detection:
    """Identify the class, ground it on the last sampled frame, then pick
    among the labelled candidates.  An empty grounding is retried once on an
    interval widened by ``widen_s`` seconds each side."""
    phrase, det = _detect_once(video, samples, question, backends)
    if det is not None:
        return det
    meta = video.meta
    src = samples.source_range
    wider = FrameRange.clamped(src.start - widen_s * meta.fps, src.end + widen_s * meta.fps, meta.total_frames)
    phrase, det = _detect_once(video, subsample(wider, samples.n, video), question, backends)
    if det is None:
        raise DetectorError(f"no {phrase!r} found in the interval even after widening")
    return Detection(det.box, det.frame, det.class_phrase, det.candidates, det.label, det.samples, widened=True)


def track_to_present(video, from_frame: int, box: BoundingBox, backends: Backends) -> TrackOutcome:
    return backends.tracker.track(video, from_frame, video.meta.total_frames, box)


def propagate_grounding(
    video,
    detection: Detection,
    question: str,
    backends: Backends,
    config: PipelineConfig = PipelineConfig(),
    recorder: Optional[TraceRecorder] = None,
) -> tuple:
    """Track to the present, re-detecting whatever hides the target each time
    it is lost.  Returns ``(final box, N)``; N counts re-detections."""
    rec = recorder or TraceRecorder("propagation", getattr(video, "id", "?"))
    fps, total = video.meta.fps, video.meta.total_frames
    frame, box, n_iter = detection.frame, detection.box, 0
    while True:
        outcome = rec.run(
            "tracker",
            {"start": frame, "end": total, "box": box.as_list()},
            lambda: track_to_present(video, frame, box, backends),
            TrackOutcome.summary,
        )
        if not outcome.is_lost:
            return outcome.last_box, n_iter
        n_iter += 1
        rec.iterations = n_iter
        if n_iter > config.n_max:
            rec.fail(
                "grounding-propagation",
                {"iterations": n_iter, "n_max": config.n_max},
                PropagationError(f"target lost more than {config.n_max} times"),
            )
        k_lost = outcome.lost_frame
        interval = FrameRange.clamped(k_lost - fps, k_lost + fps, total)
        reprompt = occluder_question(question, outcome.last_box, outcome.last_frame)
        det = rec.run(
            "target-detector",
            {"question": reprompt, "range": interval.to_dict(), "n": config.n, "iteration": n_iter},
            lambda: detect_target(video, subsample(interval, config.n, video), reprompt, backends, config.widen_s),
            Detection.to_dict,
        )
        frame, box = det.frame, det.box


def _localize(video, question: str, backends: Backends) -> int:
    k = backends.localizer.localize(video, question)
    if isinstance(k, bool) or not isinstance(k, int):
        raise LocalizationError(f"localizer returned {k!r}, not a whole second")
    try:
        return video.meta.check_second(k)
    except OutOfRangeError as exc:
        raise LocalizationError(str(exc)) from None


def run_g2tr(video, instruction: str, backends: Backends, config: PipelineConfig = PipelineConfig()) -> GroundingTrace:
    rec = TraceRecorder("g2tr", video.id)
    try:
        parsed = rec.run(
            "temporal-parser",
            {"instruction": instruction},
            lambda: backends.parser.parse(instruction),
            ParsedInstruction.to_dict,
        )
        rec.action = parsed.action
        k = rec.run(
            "event-localizer",
            {"temporal_question": parsed.temporal_question},
            lambda: _localize(video, parsed.temporal_question, backends),
            lambda k: {"second": k},
        )
        samples = rec.run(
            "interval-constructor",
            {"second": k, "n": config.n},
            lambda: subsample(construct_interval(video.meta, k), config.n, video),
            SubsampleSet.to_dict,
        )
        det = rec.run(
            "target-detector",
            {"question": parsed.object_question, "range": samples.source_range.to_dict(), "n": config.n},
            lambda: detect_target(video, samples, parsed.object_question, backends, config.widen_s),
            Detection.to_dict,
        )
        final_box, _ = propagate_grounding(video, det, parsed.object_question, backends, config, rec)
    except StageFailed:
        return rec.finish(None)
    return rec.finish(final_box)
