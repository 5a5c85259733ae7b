"""Accuracy as one fault-profile field is swept over a list of values."""

from __future__ import annotations

from dataclasses import dataclass

from .backends.base import FaultProfile
from .backends.faulty import faulty_backends
from .baselines import RefineBudget
from .errors import UsageError
from .eval import cell_accuracies, mean_std
from .pipeline import PipelineConfig
from .runner import run_corpus


@dataclass(frozen=True)
class SweepPoint:
    value: object
    mean: float
    std: float
    per_seed: tuple

    def to_dict(self) -> dict:
        return {"value": self.value, "mean": self.mean, "std": self.std, "per_seed": list(self.per_seed)}


def ablation_series(
    episodes,
    field: str,
    values,
    seeds,
    base: FaultProfile = FaultProfile(),
    pipeline: str = "g2tr",
    config: PipelineConfig = PipelineConfig(),
    budget: RefineBudget = RefineBudget(),
    threshold: float = 0.7,
    ambiguity: int = 0,
    parallel: int = 1,
) -> list:
    values = list(values)
    if not values:
        raise UsageError("the sweep needs at least one value")
    if not seeds:
        raise UsageError("the sweep needs at least one seed")
    if field not in FaultProfile.field_names():
        raise UsageError(f"unknown fault profile field {field!r}; choose from {', '.join(FaultProfile.field_names())}")
    episodes = list(episodes)
    points = []
    for value in values:
        profile = base.with_field(field, value)
        per_seed = []
        for seed in seeds:
            backends = faulty_backends(profile, seed, ambiguity)
            results = run_corpus(episodes, pipeline, backends, seed, config, budget, parallel)
            per_seed.append(cell_accuracies(results, episodes, threshold)["overall"])
        stat = mean_std(per_seed)
        points.append(SweepPoint(value, stat.mean, stat.std, tuple(round(float(a) * 100, 6) for a in per_seed)))
    return points


def is_non_increasing(points) -> bool:
    means = [p.mean for p in points]
    return all(b <= a for a, b in zip(means, means[1:]))
