"""Scoring, per-category aggregation, failure attribution and report output."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .backends.oracle import follow
from .domain import AXES, CELL_CODES, BoundingBox, iou
from .errors import ConsistencyError, InvalidInputError, UsageError
from .language import phrase_matches
from .runner import PIPELINE_ORDER
from .trace import GroundingTrace

COLUMNS = ("overall", "sh", "mh", "ss", "sc", "co", "po", "si", "mi")
COLUMN_TITLES = ("Overall", "SH", "MH", "SS", "SC", "CO", "PO", "SI", "MI")
STD_NOTE = "population standard deviation of per-seed accuracies (divide by run count)"
FORMATS = ("table", "csv", "json")


def score_episode(result_box: Optional[BoundingBox], truth: BoundingBox, threshold: float = 0.7) -> bool:
    """Correct iff a box was produced and its IoU with the truth reaches the threshold."""
    if result_box is None:
        return False
    return iou(result_box, truth) >= threshold


def _episode_cells(ep) -> list:
    return ["overall", *(CELL_CODES[(axis, getattr(ep.tags, axis))] for axis in AXES)]


def cell_accuracies(results, episodes, threshold: float = 0.7) -> dict:
    """Exact per-cell accuracy (as a Fraction, or None for an empty cell) of one run."""
    by_id = {ep.id: ep for ep in episodes}
    correct, total = Counter(), Counter()
    seen = set()
    for r in results:
        ep = by_id.get(r.episode_id)
        if ep is None:
            raise ConsistencyError(f"result for unknown episode {r.episode_id!r}")
        if r.episode_id in seen:
            raise ConsistencyError(f"duplicate result for episode {r.episode_id!r}")
        seen.add(r.episode_id)
        ok = score_episode(r.final_box, ep.ground_truth.final_box, threshold)
        for cell in _episode_cells(ep):
            total[cell] += 1
            correct[cell] += ok
    missing = set(by_id) - seen
    if missing:
        raise ConsistencyError(f"{len(missing)} corpus episodes have no result, e.g. {sorted(missing)[0]!r}")
    return {c: (Fraction(correct[c], total[c]) if total[c] else None) for c in COLUMNS}


@dataclass(frozen=True)
class CellStat:
    mean: Optional[float]
    std: Optional[float]

    def text(self) -> str:
        if self.mean is None:
            return "n/a"
        return f"{self.mean:.2f}±{self.std:.2f}"

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


def mean_std(values, scale: int = 100) -> CellStat:
    """Mean and population std of ``scale * value``, computed exactly then rounded."""
    vals = [v for v in values if v is not None]
    if not vals:
        return CellStat(None, None)
    pct = [Fraction(v) * scale for v in vals]
    mean = sum(pct) / len(pct)
    var = sum((p - mean) ** 2 for p in pct) / len(pct)
    return CellStat(round(float(mean), 6), round(math.sqrt(var), 6))


@dataclass(frozen=True)
class ReportRow:
    pipeline: str
    runs: int
    episodes: int
    cells: dict
    failures: dict = field(default_factory=dict)
    runtime_ms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "pipeline": self.pipeline,
            "runs": self.runs,
            "episodes": self.episodes,
            "cells": {c: self.cells[c].to_dict() for c in COLUMNS},
            "failures": dict(sorted(self.failures.items())),
        }
        if self.runtime_ms:
            out["runtime_ms"] = {k: v.to_dict() for k, v in sorted(self.runtime_ms.items())}
        return out


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    metadata: dict

    def row(self, pipeline: str) -> ReportRow:
        for r in self.rows:
            if r.pipeline == pipeline:
                return r
        raise KeyError(pipeline)

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        rows = []
        for r in d["rows"]:
            rows.append(
                ReportRow(
                    r["pipeline"],
                    r["runs"],
                    r["episodes"],
                    {c: CellStat(v["mean"], v["std"]) for c, v in r["cells"].items()},
                    r.get("failures", {}),
                    {k: CellStat(v["mean"], v["std"]) for k, v in r.get("runtime_ms", {}).items()},
                )
            )
        return cls(tuple(rows), d["metadata"])


def _pipeline_key(name: str):
    return (PIPELINE_ORDER.index(name), "") if name in PIPELINE_ORDER else (len(PIPELINE_ORDER), name)


def aggregate(runs: dict, episodes, threshold: float = 0.7, attribute: bool = True, timings: bool = False) -> EvalReport:
    """``runs`` maps pipeline -> seed -> list of results over the corpus."""
    episodes = list(episodes)
    by_id = {ep.id: ep for ep in episodes}
    rows = []
    seeds_seen = set()
    for pipeline in sorted(runs, key=_pipeline_key):
        per_seed = runs[pipeline]
        if not per_seed:
            raise InvalidInputError(f"no runs for pipeline {pipeline!r}")
        per_run = [cell_accuracies(per_seed[s], episodes, threshold) for s in sorted(per_seed)]
        cells = {c: mean_std([acc[c] for acc in per_run]) for c in COLUMNS}
        failures = Counter()
        if attribute:
            for s in sorted(per_seed):
                for r in per_seed[s]:
                    ep = by_id[r.episode_id]
                    if not score_episode(r.final_box, ep.ground_truth.final_box, threshold):
                        failures[attribute_failure(r.trace, ep, threshold)] += 1
        runtime = {}
        if timings:
            stages = sorted({st for s in per_seed for r in per_seed[s] for st in r.stage_durations_ms})
            for st in stages:
                per_run_mean = []
                for s in sorted(per_seed):
                    vals = [r.stage_durations_ms.get(st, 0.0) for r in per_seed[s]]
                    per_run_mean.append(Fraction(sum(vals)) / len(vals))
                runtime[st] = mean_std(per_run_mean, scale=1)
        seeds_seen.update(per_seed)
        rows.append(ReportRow(pipeline, len(per_seed), len(episodes), cells, dict(failures), runtime))
    metadata = {
        "threshold": threshold,
        "std": STD_NOTE,
        "seeds": sorted(seeds_seen),
        "corpus_size": len(episodes),
        "columns": list(COLUMNS),
        "tag_counts": _tag_counts(episodes),
    }
    return EvalReport(tuple(rows), metadata)


def _tag_counts(episodes) -> dict:
    counts = Counter()
    for ep in episodes:
        counts.update(_episode_cells(ep))
    return {c: counts[c] for c in COLUMNS}


# -- failure attribution ----------------------------------------------------------


def attribute_failure(trace: GroundingTrace, episode, threshold: float = 0.7) -> str:
    """Earliest stage whose output is wrong, or that raised, for a failed run."""
    truth = episode.ground_truth
    if score_episode(trace.final_box, truth.final_box, threshold):
        raise InvalidInputError(f"episode {episode.id} was scored correct; nothing to attribute")
    if trace.pipeline in ("dtvg", "rtvg"):
        return _attribute_baseline(trace, episode)
    world = episode.world
    expected = None
    for rec in trace.records:
        if not rec.ok:
            return rec.stage
        out = rec.output
        if rec.stage == "temporal-parser":
            if out != truth.parsed.to_dict():
                return rec.stage
        elif rec.stage == "event-localizer":
            if abs(out["second"] - truth.event_time_s) > 1:
                return rec.stage
        elif rec.stage == "target-detector":
            frame = out["frame"]
            want = truth.target_id if expected is None else world.outermost_visible(expected, frame)
            if world.bind_box(BoundingBox.of(out["box"]), frame) != want:
                return rec.stage
            expected = want
        elif rec.stage == "tracker":
            oracle = follow(world, expected, rec.inputs["start"], rec.inputs["end"])
            if (
                out["terminal"] != oracle.terminal
                or out["lost_frame"] != oracle.lost_frame
                or iou(BoundingBox.of(out["last_box"]), oracle.last_box) < threshold
            ):
                return rec.stage
    return "final"


def _attribute_baseline(trace: GroundingTrace, episode) -> str:
    target = episode.world.objects[episode.ground_truth.target_id]
    for rec in trace.records:
        if not rec.ok:
            return rec.stage
        if rec.stage == "video-describer" and not phrase_matches(
            rec.output["description"], target.class_name, target.attributes
        ):
            return rec.stage
    # The description fits the target, so the grounded box is what went wrong.
    return "phrase-grounder"


# -- report output ----------------------------------------------------------------


def emit_report(report: EvalReport, fmt: str = "table") -> str:
    if fmt == "json":
        from .schemas import REPORT_SCHEMA, validate

        doc = report.to_dict()
        validate(doc, REPORT_SCHEMA)
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pipeline", *COLUMNS])
        for row in report.rows:
            writer.writerow([row.pipeline, *(row.cells[c].text() for c in COLUMNS)])
        return buf.getvalue()
    if fmt == "table":
        header = ["Pipeline", *COLUMN_TITLES]
        body = [[row.pipeline, *(row.cells[c].text() for c in COLUMNS)] for row in report.rows]
        widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
        lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(r, widths))) for r in [header, *body]]
        lines.insert(1, "  ".join("-" * w for w in widths))
        meta = report.metadata
        lines.append("")
        lines.append(f"IoU threshold {meta['threshold']}; {len(meta['seeds'])} seed(s); ± is the {meta['std']}")
        for row in report.rows:
            if row.failures:
                parts = ", ".join(f"{k} {v}" for k, v in sorted(row.failures.items()))
                lines.append(f"{row.pipeline} failures by stage: {parts}")
        return "\n".join(lines) + "\n"
    raise UsageError(f"unknown report format {fmt!r}; expected one of {', '.join(FORMATS)}")
