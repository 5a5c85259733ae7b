"""Run a pipeline over many episodes and package the results."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

from .backends.base import Backends
from .baselines import RefineBudget, run_dtvg, run_rtvg
from .domain import BoundingBox
from .errors import UsageError
from .pipeline import PipelineConfig, run_g2tr
from .trace import GroundingTrace

PIPELINE_ORDER = ("g2tr", "dtvg", "rtvg")


@dataclass(frozen=True)
class RunResult:
    episode_id: str
    pipeline: str
    final_box: Optional[BoundingBox]
    error_stage: Optional[str]
    iterations: int
    stage_durations_ms: dict
    seed: int
    trace: GroundingTrace

    @classmethod
    def from_trace(cls, trace: GroundingTrace, seed: int) -> "RunResult":
        return cls(
            trace.episode_id,
            trace.pipeline,
            trace.final_box,
            trace.error_stage,
            trace.iterations,
            trace.stage_durations_ms(),
            seed,
            trace,
        )

    def to_dict(self, durations: bool = True) -> dict:
        out = {
            "episode_id": self.episode_id,
            "pipeline": self.pipeline,
            "final_box": None if self.final_box is None else self.final_box.as_list(),
            "error_stage": self.error_stage,
            "iterations": self.iterations,
            "seed": self.seed,
            "trace": self.trace.to_dict(durations),
        }
        if durations:
            out["stage_durations_ms"] = self.stage_durations_ms
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        box = d.get("final_box")
        return cls(
            d["episode_id"],
            d["pipeline"],
            None if box is None else BoundingBox.of(box),
            d.get("error_stage"),
            d.get("iterations", 0),
            d.get("stage_durations_ms", {}),
            d.get("seed", 0),
            GroundingTrace.from_dict(d["trace"]),
        )


def pipeline_fn(name: str, config: PipelineConfig = PipelineConfig(), budget: RefineBudget = RefineBudget()) -> Callable:
    if name == "g2tr":
        return lambda ep, backends: run_g2tr(ep, ep.instruction, backends, config)
    if name == "dtvg":
        return lambda ep, backends: run_dtvg(ep, ep.instruction, backends)
    if name == "rtvg":
        return lambda ep, backends: run_rtvg(ep, ep.instruction, backends, budget)
    raise UsageError(f"unknown pipeline {name!r}; expected one of {', '.join(PIPELINE_ORDER)}")


def expand_pipelines(name: str) -> list:
    if name == "all":
        return list(PIPELINE_ORDER)
    pipeline_fn(name)
    return [name]


def run_corpus(
    episodes,
    pipeline: str,
    backends: Backends,
    seed: int = 0,
    config: PipelineConfig = PipelineConfig(),
    budget: RefineBudget = RefineBudget(),
    parallel: int = 1,
) -> list:
    """One result per episode, in corpus order, with at most ``parallel``
    episodes in flight."""
    fn = pipeline_fn(pipeline, config, budget)

    def one(ep):
        return RunResult.from_trace(fn(ep, backends), seed)

    if parallel <= 1:
        return [one(ep) for ep in episodes]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(one, episodes))


def results_document(results, pipeline: str, seed: int, backend: str, durations: bool = True) -> dict:
    return {
        "meta": {"pipeline": pipeline, "seed": seed, "backend": backend, "count": len(results)},
        "results": [r.to_dict(durations) for r in results],
    }
