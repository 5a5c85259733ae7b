"""Synthetic video-instruction corpus with bifurcation tags.

Each episode is a scripted tabletop world plus a templated instruction whose
ground truth is read back from the world oracles.  Tag semantics:

* hops: ``multi`` when the referenced interaction is located relative to an
  anchor interaction on another object ("... after the apple was dropped").
* spatial: ``complex`` when at least two other objects share the target's
  class; ``simple`` when the target's class is unique in the scene.
* interactions: number of interactions the target itself takes part in.
* observability: ``partial`` when the target ends up inside a container.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

from ..domain import AXES, AXIS_VALUES, BifurcationTags, BoundingBox, EpisodeMeta
from ..errors import ConfigError, TGRError
from ..language import Anchor, EventRef, ParsedInstruction, parse_instruction, render
from .script import InteractionEvent, WorldObject, WorldScript
from .world import World, centered_cover_box

CORPUS_VERSION = 1

CLASS_SIZES = {
    "cloth": (60, 40),
    "sponge": (44, 30),
    "cup": (50, 60),
    "glass": (40, 56),
    "apple": (40, 40),
    "banana": (70, 30),
    "marker": (60, 20),
    "notebook": (80, 60),
    "pillbox": (50, 36),
    "spectacles": (60, 26),
    "bottle": (36, 84),
    "jug": (56, 76),
    "plate": (90, 90),
    "board": (110, 70),
    "bowl": (100, 86),
    "box": (124, 110),
    "tray": (150, 140),
}
CONTAINERS = ("bowl", "box", "tray")
RECEPTACLES = ("cup", "glass", "bowl")
POURERS = ("bottle", "jug")
WIPERS = ("cloth", "sponge")
SURFACES = ("plate", "board")
STACK_BASES = ("plate", "notebook", "board")
MOVABLES = (
    "cloth", "sponge", "cup", "glass", "apple", "banana", "marker",
    "notebook", "pillbox", "spectacles", "bottle", "jug",
)
STACKABLE = ("cup", "glass", "apple", "pillbox", "bottle")
COLORS = ("red", "green", "blue", "yellow", "white", "black")
ACTION_KEYS = ("remove", "pick up", "point to", "bring me", "hand me")

MOVE_VERBS = ("pick", "place", "reposition", "drop")
REFERENCE_KINDS = {
    ("wipe", "instrument"): WIPERS,
    ("pour", "patient"): RECEPTACLES,
    ("pour", "instrument"): POURERS,
    ("place", "patient"): MOVABLES,
    ("pick", "patient"): MOVABLES,
    ("reposition", "patient"): MOVABLES,
    ("drop", "patient"): MOVABLES,
    ("stack", "patient"): STACKABLE,
    ("swap", "patient"): MOVABLES,
    ("cover", "instrument"): ("bowl", "box"),
}
# Reference kinds for which a same-verb decoy interaction can be staged.
DECOY_KINDS = {k for k in REFERENCE_KINDS if k[0] in MOVE_VERBS + ("pour", "wipe")}

GRID_COLS, GRID_ROWS = 4, 3


@dataclass(frozen=True)
class GroundTruth:
    parsed: ParsedInstruction
    event_time_s: int
    target_id: str
    final_box: BoundingBox
    visibility_chain: tuple

    def to_dict(self) -> dict:
        return {
            "parsed": self.parsed.to_dict(),
            "event_time_s": self.event_time_s,
            "target_id": self.target_id,
            "final_box": self.final_box.to_dict(),
            "visibility_chain": list(self.visibility_chain),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(
            ParsedInstruction.from_dict(d["parsed"]),
            d["event_time_s"],
            d["target_id"],
            BoundingBox.of(d["final_box"]),
            tuple(d["visibility_chain"]),
        )


@dataclass(frozen=True)
class Episode:
    """One video-instruction pair."""

    id: str
    script: WorldScript
    instruction: str
    ground_truth: GroundTruth
    tags: BifurcationTags

    @cached_property
    def world(self) -> World:
        return World(self.script)

    @property
    def meta(self) -> EpisodeMeta:
        return self.script.meta

    def frame(self, f: int):
        return self.world.snapshot_at(f)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "script": self.script.to_dict(),
            "instruction": self.instruction,
            "ground_truth": self.ground_truth.to_dict(),
            "tags": self.tags.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Episode":
        return cls(
            d["id"],
            WorldScript.from_dict(d["script"]),
            d["instruction"],
            GroundTruth.from_dict(d["ground_truth"]),
            BifurcationTags.from_dict(d["tags"]),
        )


@dataclass(frozen=True)
class CorpusConfig:
    """Corpus size and per-axis tag counts, each given as ``(first, second)``
    in the order of :data:`tgr.domain.AXIS_VALUES`."""

    count: int = 155
    hops: tuple = (56, 99)
    spatial: tuple = (98, 57)
    interactions: tuple = (62, 93)
    observability: tuple = (119, 36)
    fps: int = 30
    frame_width: int = 640
    frame_height: int = 480
    container_classes: tuple = CONTAINERS

    @classmethod
    def uniform(cls, count: int, **kw) -> "CorpusConfig":
        half = (count - count // 2, count // 2)
        return cls(count, half, half, half, half, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        d = dict(d)
        for key in (*AXES, "container_classes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "hops": list(self.hops),
            "spatial": list(self.spatial),
            "interactions": list(self.interactions),
            "observability": list(self.observability),
            "fps": self.fps,
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "container_classes": list(self.container_classes),
        }

    def validate(self) -> None:
        if self.count < 1:
            raise ConfigError("corpus count must be positive")
        for axis in AXES:
            counts = getattr(self, axis)
            if len(counts) != 2 or min(counts) < 0 or sum(counts) != self.count:
                raise ConfigError(f"{axis} counts {counts} must be two non-negative numbers summing to {self.count}")
        partial = self.observability[1]
        if partial and not self.container_classes:
            raise ConfigError("partial-observability episodes requested but no container classes configured")
        unknown = set(self.container_classes) - set(CONTAINERS)
        if unknown:
            raise ConfigError(f"unknown container classes {sorted(unknown)}")
        if partial > self.interactions[1]:
            raise ConfigError(
                "every partially observable episode has a containment interaction on its target, "
                f"so partial ({partial}) cannot exceed multi-interaction ({self.interactions[1]})"
            )


def assign_tags(config: CorpusConfig, rng: random.Random) -> list:
    columns = {}
    for axis in AXES:
        first, second = AXIS_VALUES[axis]
        column = [first] * getattr(config, axis)[0] + [second] * getattr(config, axis)[1]
        rng.shuffle(column)
        columns[axis] = column
    obs, inter = columns["observability"], columns["interactions"]
    clash = [i for i in range(config.count) if obs[i] == "partial" and inter[i] == "single"]
    spare = [i for i in range(config.count) if obs[i] == "full" and inter[i] == "multi"]
    for i, j in zip(clash, spare):
        inter[i], inter[j] = inter[j], inter[i]
    return [BifurcationTags(*(columns[a][i] for a in AXES)) for i in range(config.count)]


class _Retry(Exception):
    pass


def _slot_center(slot: int) -> tuple:
    r, c = divmod(slot, GRID_COLS)
    return 80 + 160 * c, 80 + 160 * r


def _slot_position(slot: int) -> str:
    c = slot % GRID_COLS
    return "left" if c == 0 else "right" if c == GRID_COLS - 1 else "middle"


def _box_at_center(cls: str, cx: float, cy: float, width: int, height: int) -> BoundingBox:
    w, h = CLASS_SIZES[cls]
    x0 = min(max(cx - w / 2, 0), width - w)
    y0 = min(max(cy - h / 2, 0), height - h)
    x0, y0 = int(x0), int(y0)
    return BoundingBox(x0, y0, x0 + w, y0 + h)


class _EpisodeBuilder:
    """Stages objects and a sequential interaction timeline."""

    def __init__(self, rng: random.Random, config: CorpusConfig, compact: bool):
        self.rng = rng
        self.config = config
        self.compact = compact
        self.objects = []  # dicts: id, cls, color, slot
        self.by_id = {}
        self.box = {}
        self.slot_of = {}
        self.free = set(range(GRID_COLS * GRID_ROWS))
        self.events = []
        self.t = rng.choice((1, 2))
        self._counts = {}

    # objects

    def add(self, cls: str, color: Optional[str] = None, positions=None, slot: Optional[int] = None) -> str:
        if slot is None:
            choices = sorted(s for s in self.free if positions is None or _slot_position(s) in positions)
            if not choices:
                raise _Retry("no free slot")
            slot = self.rng.choice(choices)
        self.free.discard(slot)
        self._counts[cls] = self._counts.get(cls, 0) + 1
        oid = f"{cls}#{self._counts[cls]}"
        color = color or self.rng.choice(COLORS)
        rec = {"id": oid, "cls": cls, "color": color, "slot": slot}
        self.objects.append(rec)
        self.by_id[oid] = rec
        cx, cy = _slot_center(slot)
        self.box[oid] = _box_at_center(cls, cx, cy, self.config.frame_width, self.config.frame_height)
        self.slot_of[oid] = slot
        return oid

    def cls(self, oid: str) -> str:
        return self.by_id[oid]["cls"]

    def classes(self) -> set:
        return {o["cls"] for o in self.objects}

    # motions

    def _to_free_slot(self, oid: str) -> BoundingBox:
        if not self.free:
            raise _Retry("no free slot to move into")
        slot = self.rng.choice(sorted(self.free))
        self.free.discard(slot)
        self._release(oid)
        self.slot_of[oid] = slot
        cx, cy = _slot_center(slot)
        return _box_at_center(self.cls(oid), cx, cy, self.config.frame_width, self.config.frame_height)

    def _release(self, oid: str) -> None:
        slot = self.slot_of.get(oid)
        if slot is not None:
            self.free.add(slot)
        self.slot_of[oid] = None

    def event(self, verb: str, patient: str, instrument: Optional[str] = None) -> InteractionEvent:
        W, H = self.config.frame_width, self.config.frame_height
        motion = {}
        if verb in MOVE_VERBS:
            motion[patient] = self._to_free_slot(patient)
        elif verb == "wipe":
            motion[instrument] = self._to_free_slot(instrument)
        elif verb == "stack":
            base = self.box[instrument]
            bx, by = base.center
            self._release(patient)
            motion[patient] = _box_at_center(self.cls(patient), bx, by - base.height / 4, W, H)
        elif verb == "swap":
            (px, py), (qx, qy) = self.box[patient].center, self.box[instrument].center
            motion[patient] = _box_at_center(self.cls(patient), qx, qy, W, H)
            motion[instrument] = _box_at_center(self.cls(instrument), px, py, W, H)
            self.slot_of[patient], self.slot_of[instrument] = self.slot_of[instrument], self.slot_of[patient]
        elif verb == "cover":
            self._release(instrument)
            motion[instrument] = centered_cover_box(self.box[instrument], self.box[patient], W, H)
        elif verb == "remove":
            self._release(patient)
        self.box.update(motion)
        duration = 2 if self.compact else self.rng.choice((2, 3))
        ev = InteractionEvent(verb, patient, self.t, self.t + duration, instrument, motion)
        self.t += duration + (1 if self.compact else self.rng.choice((1, 2)))
        self.events.append(ev)
        return ev

    def script(self, seed: int) -> WorldScript:
        last_end = max(e.end_s for e in self.events)
        duration = max(6, last_end + (2 if self.compact else self.rng.choice((2, 3))))
        if duration > 30:
            raise _Retry("episode longer than 30 s")
        meta = EpisodeMeta(self.config.fps, duration, self.config.frame_width, self.config.frame_height)
        objects = [
            WorldObject(o["id"], o["cls"], (o["color"], _slot_position(o["slot"])), self._initial[o["id"]])
            for o in self.objects
        ]
        return WorldScript(meta, tuple(objects), tuple(self.events), seed)

    def freeze_initial(self) -> None:
        self._initial = dict(self.box)


def _container_chain(target_cls: str, containers, rng: random.Random, want: int) -> list:
    """Up to ``want`` container classes, each strictly larger than the last."""
    chain, inner = [], CLASS_SIZES[target_cls]
    for _ in range(want):
        bigger = [
            c
            for c in containers
            if c != target_cls and c not in chain
            and CLASS_SIZES[c][0] > inner[0] and CLASS_SIZES[c][1] > inner[1]
        ]
        if not bigger:
            break
        c = rng.choice(sorted(bigger))
        chain.append(c)
        inner = CLASS_SIZES[c]
    return chain


def _build(index: int, tags: BifurcationTags, rng: random.Random, config: CorpusConfig, compact: bool) -> Episode:
    b = _EpisodeBuilder(rng, config, compact)
    partial = tags.observability == "partial"
    complex_ = tags.spatial == "complex"
    multi_hop = tags.hops == "multi"
    multi_inter = tags.interactions == "multi"

    kind = rng.choice(sorted(REFERENCE_KINDS))
    verb, role = kind
    target_cls = rng.choice(REFERENCE_KINDS[kind])
    n_covers = rng.choice((1, 2)) if partial else 0
    chain = _container_chain(target_cls, config.container_classes, rng, n_covers) if partial else []
    if partial and not chain:
        raise _Retry("target class cannot be contained")

    # target and same-class distractors
    if complex_:
        colors = list(COLORS)
        rng.shuffle(colors)
        target = b.add(target_cls, colors[0])
        tpos = _slot_position(b.slot_of[target])
        twin_color = b.add(target_cls, colors[0], positions=[p for p in ("left", "middle", "right") if p != tpos])
        distractors = [twin_color]
        for extra in range(rng.choice((1, 2))):
            distractors.append(b.add(target_cls, colors[1 + extra]))
    else:
        target = b.add(target_cls)
        distractors = []

    def fresh(pool) -> str:
        options = sorted(set(pool) - b.classes() - set(chain))
        if not options:
            raise _Retry("no class left for a participant")
        return rng.choice(options)

    # partner object of the referenced interaction
    partner = None
    if kind == ("wipe", "instrument"):
        partner = b.add(fresh(SURFACES))
    elif kind == ("pour", "patient"):
        partner = b.add(fresh(POURERS))
    elif kind == ("pour", "instrument"):
        partner = b.add(fresh(RECEPTACLES))
    elif verb == "stack":
        partner = b.add(fresh(STACK_BASES))
    elif verb == "swap":
        partner = b.add(fresh(MOVABLES))
    elif verb == "cover":
        small = [c for c in MOVABLES if CLASS_SIZES[c][0] < CLASS_SIZES[target_cls][0]
                 and CLASS_SIZES[c][1] < CLASS_SIZES[target_cls][1]]
        partner = b.add(fresh(small))

    def referenced(actor: str):
        if role == "instrument":
            return b.event(verb, partner, actor)
        return b.event(verb, actor, partner)

    # anchor and decoy for multi-hop references
    anchor_obj = anchor_verb = relation = decoy = None
    noun = target_cls
    if multi_hop:
        anchor_verb = rng.choice(sorted(set(MOVE_VERBS) - {verb}))
        anchor_obj = b.add(fresh(MOVABLES))
        relation = rng.choice(("after", "before"))
        if kind in DECOY_KINDS:
            if complex_:
                decoy = rng.choice(distractors)
            else:
                pool = {
                    ("wipe", "instrument"): WIPERS,
                    ("pour", "patient"): RECEPTACLES,
                    ("pour", "instrument"): POURERS,
                }.get(kind, MOVABLES)
                decoy = b.add(fresh(pool))
                noun = "object"
    elif complex_ and kind in DECOY_KINDS and rng.random() < 0.4:
        decoy = rng.choice(distractors)

    filler_pool = [c for c in MOVABLES if c not in chain]
    while len(b.objects) < 3 or (len(b.objects) < 6 and rng.random() < 0.3):
        options = sorted(set(filler_pool) - b.classes())
        if not options:
            break
        b.add(rng.choice(options))
    special = {target, partner, anchor_obj, decoy, *distractors}
    fillers = [o["id"] for o in b.objects if o["id"] not in special]
    containers = [b.add(c) for c in chain]
    b.freeze_initial()

    # timeline
    steps = []
    if multi_hop and relation == "after":
        if decoy:
            steps.append(("decoy", decoy))
        steps += [("anchor", anchor_obj), ("target", target)]
    elif multi_hop:
        steps += [("target", target), ("anchor", anchor_obj)]
        if decoy:
            steps.append(("decoy", decoy))
    else:
        steps.append(("target", target))
        if decoy:
            steps.insert(rng.choice((0, 1)), ("decoy", decoy))
    if multi_inter and (not partial or rng.random() < 0.3):
        extra_verb = rng.choice(sorted(set(MOVE_VERBS) - {verb, anchor_verb}))
        steps.append(("extra", extra_verb))
    if fillers and rng.random() < 0.5:
        filler_verb = rng.choice(sorted({"remove", "reposition"} - {verb, anchor_verb}))
        pos = rng.randint(0, len(steps))
        steps.insert(pos, ("filler", (rng.choice(fillers), filler_verb)))

    target_event = None
    for step, arg in steps:
        if step == "target":
            target_event = referenced(target)
        elif step == "decoy":
            referenced(arg)
        elif step == "anchor":
            b.event(anchor_verb, anchor_obj)
        elif step == "extra":
            b.event(arg, target)
        elif step == "filler":
            oid, fverb = arg
            b.event(fverb, oid)
    inner = target
    for c in containers:
        b.event("cover", inner, c)
        inner = c

    script = b.script(seed=index)
    world = World(script)

    anchor = None
    if multi_hop:
        anchor = Anchor(relation, EventRef(anchor_verb, "patient", b.cls(anchor_obj)))
    ref = _resolving_ref(world, target_event, EventRef(verb, role, noun, anchor=anchor))
    action = rng.choice(ACTION_KEYS)
    text = render(ref, action)
    if parse_instruction(text.instruction) != (ref, action):
        raise _Retry("instruction does not round-trip")
    if world.oracle_target(ref) != target:
        raise _Retry("label unsound")

    episode = build_episode(f"ep{index:03d}", script, text.instruction, world=world)
    if episode.tags != tags:
        raise _Retry(f"tags drifted: {episode.tags} vs {tags}")
    if episode.ground_truth.target_id != target:
        raise _Retry("label unsound")
    return episode


def observed_tags(world: World, ref, target: str) -> BifurcationTags:
    """Tags an episode earns from its world and reference."""
    cls = world.objects[target].class_name
    same_class = sum(1 for o in world.objects.values() if o.class_name == cls and o.id != target)
    return BifurcationTags(
        "multi" if getattr(ref, "anchor", None) is not None else "single",
        "complex" if same_class >= 2 else "simple",
        "multi" if sum(target in e.participants for e in world.events) > 1 else "single",
        "full" if world.is_visible(target, world.last_frame) else "partial",
    )


def build_episode(episode_id: str, script: WorldScript, instruction: str, tags=None, world=None) -> Episode:
    """Episode whose ground truth is read from the world oracles.

    ``tags`` default to the ones the script and instruction earn.
    """
    world = world or World(script)
    parsed = parse_instruction(instruction)
    if parsed is None:
        raise ConfigError(f"instruction fits no template: {instruction!r}")
    ref, action = parsed
    target = world.oracle_target(ref)
    final_box = world.final_box(target)
    if final_box is None:
        raise ConfigError(f"target {target} is not recoverable at the last frame")
    if isinstance(ref, EventRef):
        event_time = world.find_event(ref).midpoint_s
    else:
        event_time = world.meta.duration_s
    truth = GroundTruth(
        render(ref, action).parsed,
        event_time,
        target,
        final_box,
        tuple(world.containment_chain(target, world.last_frame)),
    )
    episode = Episode(episode_id, script, instruction, truth, tags or observed_tags(world, ref, target))
    episode.__dict__["world"] = world  # reuse the compiled world in the cached property
    return episode


def _resolving_ref(world: World, wanted: InteractionEvent, ref: EventRef) -> EventRef:
    def hits(r: EventRef) -> bool:
        try:
            ev = world.find_event(r)
        except TGRError:
            return False
        return (ev.verb, ev.patient, ev.start_s) == (wanted.verb, wanted.patient, wanted.start_s)

    if hits(ref):
        return ref
    if ref.anchor is None:
        for ordinal in ("last", "first", "second"):
            r = EventRef(ref.verb, ref.role, ref.noun, ordinal=ordinal)
            if hits(r):
                return r
    raise _Retry("no template reference isolates the interaction")


def generate_episode(index: int, tags: BifurcationTags, seed: int, config: Optional[CorpusConfig] = None) -> Episode:
    config = config or CorpusConfig()
    rng = random.Random(f"tgr-corpus:{seed}:{index}")
    for attempt in range(200):
        try:
            return _build(index, tags, rng, config, compact=attempt >= 20)
        except (_Retry, TGRError, ValueError):
            continue
    raise ConfigError(f"could not stage episode {index} with tags {tags}")


def generate_corpus(config: Optional[CorpusConfig] = None, seed: int = 1) -> list:
    config = config or CorpusConfig()
    config.validate()
    tags = assign_tags(config, random.Random(f"tgr-tags:{seed}"))
    return [generate_episode(i, t, seed, config) for i, t in enumerate(tags)]


def corpus_to_dict(episodes, config: Optional[CorpusConfig] = None, seed: Optional[int] = None) -> dict:
    meta = {"version": CORPUS_VERSION, "count": len(episodes)}
    if config is not None:
        meta["config"] = config.to_dict()
    if seed is not None:
        meta["seed"] = seed
    return {"meta": meta, "episodes": [e.to_dict() for e in episodes]}


def dump_corpus(episodes, config=None, seed=None) -> str:
    return json.dumps(corpus_to_dict(episodes, config, seed), indent=1, sort_keys=True) + "\n"


def save_corpus(path, episodes, config=None, seed=None) -> None:
    Path(path).write_text(dump_corpus(episodes, config, seed))


def load_corpus(path) -> list:
    data = json.loads(Path(path).read_text())
    return [Episode.from_dict(e) for e in data["episodes"]]


def tag_marginals(episodes) -> dict:
    out = {axis: {v: 0 for v in AXIS_VALUES[axis]} for axis in AXES}
    for ep in episodes:
        for axis in AXES:
            out[axis][getattr(ep.tags, axis)] += 1
    return out
