"""Command-line entry point: simulate, run, eval, report, ablate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

from .ablation import ablation_series, is_non_increasing
from .backends import FaultProfile, faulty_backends, oracle_backends
from .baselines import RefineBudget
from .errors import ConfigError, ConsistencyError, TGRError, UsageError
from .eval import FORMATS, aggregate, emit_report, EvalReport
from .pipeline import PipelineConfig
from .runner import RunResult, expand_pipelines, results_document, run_corpus
from .schemas import CORPUS_SCHEMA, FAULT_PROFILE_SCHEMA, REPORT_SCHEMA, RESULTS_SCHEMA, validate
from .world.corpus import CorpusConfig, corpus_to_dict, generate_corpus, load_corpus, tag_marginals

log = logging.getLogger("tgr")

DEFAULTS = {
    "common": {"config": None, "out": None, "force": False, "verbose": False},
    "simulate": {"seed": [1], "count": None, "all_tags": None, "fps": 30, "raster": None},
    "run": {
        "corpus": None,
        "seed": [1],
        "pipeline": "g2tr",
        "backend": "oracle",
        "fault_profile": None,
        "endpoint_config": None,
        "n": 15,
        "fps": None,
        "n_max": 8,
        "ambiguity": 0,
        "refine_budget": 3,
        "parallel": 1,
    },
    "eval": {"corpus": None, "results": None, "threshold": 0.7, "format": "table", "timings": False},
    "report": {"report": None, "format": "table"},
    "ablate": {
        "corpus": None,
        "seed": [1, 2, 3, 4, 5],
        "pipeline": "g2tr",
        "fault_profile": None,
        "field": None,
        "values": None,
        "n": 15,
        "n_max": 8,
        "ambiguity": 0,
        "refine_budget": 3,
        "threshold": 0.7,
        "parallel": 1,
        "format": "table",
    },
}


def _parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = argparse.ArgumentParser(prog="tgr", description="Grounded temporal reasoning: simulate, run, evaluate.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=S, help="JSON file with flag values; command-line flags override it")
        sp.add_argument("--out", default=S, help="output path")
        sp.add_argument("--force", action="store_true", default=S, help="overwrite existing outputs")
        sp.add_argument("-v", "--verbose", action="store_true", default=S)

    def seeds(sp):
        sp.add_argument("--seed", type=int, action="append", default=S, help="seed (repeatable)")

    def engine(sp):
        sp.add_argument("--corpus", default=S)
        sp.add_argument("--pipeline", choices=["g2tr", "dtvg", "rtvg", "all"], default=S)
        sp.add_argument("--fault-profile", dest="fault_profile", default=S)
        sp.add_argument("--n", type=int, default=S, help="frames sub-sampled per interval")
        sp.add_argument("--n-max", dest="n_max", type=int, default=S, help="cap on re-detection iterations")
        sp.add_argument("--ambiguity", type=int, default=S, help="attributes the oracle describer leaves out")
        sp.add_argument("--refine-budget", dest="refine_budget", type=int, default=S)
        sp.add_argument("--parallel", type=int, default=S, help="episodes in flight")

    sp = sub.add_parser("simulate", help="generate a synthetic corpus")
    common(sp)
    seeds(sp)
    sp.add_argument("--count", type=int, default=S)
    sp.add_argument("--all-tags", dest="all_tags", choices=["uniform"], default=S)
    sp.add_argument("--fps", type=int, default=S)
    sp.add_argument("--raster", default=S, help="directory for one PNG per second of every episode")

    sp = sub.add_parser("run", help="run pipelines over a corpus")
    common(sp)
    seeds(sp)
    engine(sp)
    sp.add_argument("--backend", choices=["oracle", "faulty", "remote"], default=S)
    sp.add_argument("--endpoint-config", dest="endpoint_config", default=S)
    sp.add_argument("--fps", type=int, default=S, help="expected corpus frame rate")

    sp = sub.add_parser("eval", help="score results against a corpus")
    common(sp)
    sp.add_argument("--corpus", default=S)
    sp.add_argument("--results", nargs="+", default=S, help="results files or directories")
    sp.add_argument("--threshold", type=float, default=S)
    sp.add_argument("--format", choices=FORMATS, default=S)
    sp.add_argument("--timings", action="store_true", default=S, help="add per-stage runtime (not reproducible)")

    sp = sub.add_parser("report", help="render a saved JSON report")
    common(sp)
    sp.add_argument("--report", default=S)
    sp.add_argument("--format", choices=FORMATS, default=S)

    sp = sub.add_parser("ablate", help="sweep one fault-profile field")
    common(sp)
    seeds(sp)
    engine(sp)
    sp.add_argument("--field", default=S, help="dotted field, e.g. localizer.rate")
    sp.add_argument("--values", default=S, help="comma-separated values")
    sp.add_argument("--threshold", type=float, default=S)
    sp.add_argument("--format", choices=FORMATS, default=S)
    return p


def resolve_options(argv) -> argparse.Namespace:
    """Defaults, then the config file, then explicit flags."""
    ns = _parser().parse_args(argv)
    given = vars(ns)
    command = given.pop("command")
    opts = {**DEFAULTS["common"], **DEFAULTS[command]}
    if given.get("config"):
        try:
            file_opts = json.loads(Path(given["config"]).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {given['config']}: {exc}") from None
        for key, value in file_opts.items():
            key = key.replace("-", "_")
            if key not in opts:
                raise ConfigError(f"config key {key!r} is not a {command} option")
            opts[key] = value
    opts.update(given)
    if isinstance(opts.get("seed"), int):
        opts["seed"] = [opts["seed"]]
    opts["command"] = command
    return argparse.Namespace(**opts)


def _require(opts, *names) -> None:
    for name in names:
        if getattr(opts, name) in (None, []):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _writable(path, force: bool) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write(path, text: str) -> None:
    Path(path).write_text(text)


def _load_profile(path) -> FaultProfile:
    if path is None:
        return FaultProfile()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read fault profile {path}: {exc}") from None
    validate(data, FAULT_PROFILE_SCHEMA, ConfigError)
    return FaultProfile.from_dict(data)


def _load_corpus(path):
    if path is None:
        raise UsageError("--corpus is required")
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read corpus {path}: {exc}") from None
    validate(data, CORPUS_SCHEMA)
    return load_corpus(path)


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# -- commands --------------------------------------------------------------------


def cmd_simulate(opts) -> int:
    _require(opts, "out")
    out = _writable(opts.out, opts.force)
    seed = opts.seed[0]
    if len(opts.seed) > 1:
        raise UsageError("simulate takes a single --seed")
    extra = {"fps": opts.fps}
    if opts.all_tags == "uniform":
        config = CorpusConfig.uniform(opts.count or 155, **extra)
    elif opts.count is not None and opts.count != 155:
        raise UsageError("--count other than 155 needs --all-tags uniform (the default marginals assume 155)")
    else:
        config = CorpusConfig(**extra)
    episodes = generate_corpus(config, seed)
    doc = corpus_to_dict(episodes, config, seed)
    validate(doc, CORPUS_SCHEMA)
    _write(out, _dump(doc))
    if opts.raster:
        from .world.raster import write_episode_frames

        for ep in episodes:
            write_episode_frames(ep, opts.raster)
    print(f"wrote {len(episodes)} episodes to {out}")
    for axis, counts in tag_marginals(episodes).items():
        print(f"  {axis}: " + ":".join(f"{v} {k}" for k, v in counts.items()))
    return 0


def _backends_factory(opts):
    if opts.backend == "oracle":
        backends = oracle_backends(opts.ambiguity)
        return lambda seed: backends
    if opts.backend == "faulty":
        profile = _load_profile(opts.fault_profile)
        return lambda seed: faulty_backends(profile, seed, opts.ambiguity)
    if opts.backend == "remote":
        from .backends.remote import RemoteConfig, remote_backends

        config = RemoteConfig.from_file(opts.endpoint_config) if opts.endpoint_config else RemoteConfig()
        backends = remote_backends(config)
        return lambda seed: backends
    raise UsageError(f"unknown backend {opts.backend!r}")


def cmd_run(opts) -> int:
    _require(opts, "corpus", "out", "seed")
    episodes = _load_corpus(opts.corpus)
    if opts.fps is not None:
        off = [ep.id for ep in episodes if ep.meta.fps != opts.fps]
        if off:
            raise ConfigError(f"{len(off)} episodes are not at {opts.fps} fps (e.g. {off[0]})")
    out_dir = Path(opts.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    make = _backends_factory(opts)
    config = PipelineConfig(n=opts.n, n_max=opts.n_max)
    budget = RefineBudget(opts.refine_budget)
    for pipeline in expand_pipelines(opts.pipeline):
        for seed in opts.seed:
            path = _writable(out_dir / f"{pipeline}_seed{seed}.json", opts.force)
            results = run_corpus(episodes, pipeline, make(seed), seed, config, budget, opts.parallel)
            doc = results_document(results, pipeline, seed, opts.backend)
            validate(doc, RESULTS_SCHEMA)
            _write(path, _dump(doc))
            errors = defaultdict(int)
            for r in results:
                if r.error_stage:
                    errors[r.error_stage] += 1
            summary = ", ".join(f"{k} {v}" for k, v in sorted(errors.items())) or "none"
            print(f"{pipeline} seed {seed}: {len(results)} results -> {path}; stage errors: {summary}")
    return 0


def _results_files(paths) -> list:
    files = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    if not files:
        raise UsageError("no results files found")
    return files


def load_results(paths) -> dict:
    runs = defaultdict(dict)
    for path in _results_files(paths):
        try:
            doc = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read results {path}: {exc}") from None
        validate(doc, RESULTS_SCHEMA)
        pipeline, seed = doc["meta"]["pipeline"], doc["meta"]["seed"]
        if seed in runs[pipeline]:
            raise ConsistencyError(f"two results files for {pipeline} seed {seed}")
        runs[pipeline][seed] = [RunResult.from_dict(r) for r in doc["results"]]
    return dict(runs)


def cmd_eval(opts) -> int:
    _require(opts, "corpus", "results")
    episodes = _load_corpus(opts.corpus)
    report = aggregate(load_results(opts.results), episodes, opts.threshold, timings=opts.timings)
    text = emit_report(report, opts.format)
    if opts.out:
        out = _writable(opts.out, opts.force)
        _write(out, text)
        # Keep a machine-readable copy next to non-JSON renderings for `tgr report`.
        if opts.format != "json":
            _write(_writable(out.with_suffix(".json"), opts.force), emit_report(report, "json"))
    sys.stdout.write(text)
    return 0


def cmd_report(opts) -> int:
    _require(opts, "report")
    try:
        doc = json.loads(Path(opts.report).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report {opts.report}: {exc}") from None
    validate(doc, REPORT_SCHEMA)
    text = emit_report(EvalReport.from_dict(doc), opts.format)
    if opts.out:
        _write(_writable(opts.out, opts.force), text)
    sys.stdout.write(text)
    return 0


def _parse_values(text) -> list:
    if isinstance(text, list):
        return text
    items = [t.strip() for t in str(text or "").split(",") if t.strip()]
    try:
        return [json.loads(t) for t in items]
    except ValueError:
        raise UsageError(f"sweep values must be numbers: {text!r}") from None


def cmd_ablate(opts) -> int:
    _require(opts, "corpus", "field", "seed")
    values = _parse_values(opts.values)
    if not values:
        raise UsageError("--values must list at least one value")
    if opts.field not in FaultProfile.field_names():
        raise UsageError(f"unknown fault profile field {opts.field!r}")
    episodes = _load_corpus(opts.corpus)
    points = ablation_series(
        episodes,
        opts.field,
        values,
        opts.seed,
        _load_profile(opts.fault_profile),
        opts.pipeline,
        PipelineConfig(n=opts.n, n_max=opts.n_max),
        RefineBudget(opts.refine_budget),
        opts.threshold,
        opts.ambiguity,
        opts.parallel,
    )
    doc = {
        "field": opts.field,
        "pipeline": opts.pipeline,
        "seeds": list(opts.seed),
        "threshold": opts.threshold,
        "non_increasing": is_non_increasing(points),
        "points": [p.to_dict() for p in points],
    }
    if opts.format == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    elif opts.format == "csv":
        text = "value,mean,std\n" + "".join(f"{p.value},{p.mean:.2f},{p.std:.2f}\n" for p in points)
    else:
        lines = [f"{opts.field:>20}  accuracy (%)"]
        lines += [f"{json.dumps(p.value):>20}  {p.mean:.2f}±{p.std:.2f}" for p in points]
        lines.append(f"non-increasing: {'yes' if doc['non_increasing'] else 'no'}")
        text = "\n".join(lines) + "\n"
    if opts.out:
        _write(_writable(opts.out, opts.force), text)
    sys.stdout.write(text)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "run": cmd_run,
    "eval": cmd_eval,
    "report": cmd_report,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    try:
        opts = resolve_options(argv)
        logging.basicConfig(level=logging.INFO if opts.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return COMMANDS[opts.command](opts)
    except TGRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
