"""Template grammar for instructions and the questions derived from them.

A reference to a past interaction is held as an :class:`EventRef`; a
reference to something in the present scene as a :class:`PresentRef`.
Every text form produced here parses back to the structure that made it.

Instruction forms::

    Robot, <action> the <np> that was [<ord>] <participle>[ with the <noun>][<anchor>]
    Robot, <action> the <np> [<ord>] used for <gerund>[<anchor>]
    Robot, <action> the <np>

where ``<anchor>`` is `` after|before the <np> was <participle>|used for <gerund>``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Union

from .domain import BoundingBox

VERBS = ("pick", "place", "pour", "wipe", "stack", "swap", "reposition", "drop", "cover", "remove")
PARTICIPLES = {
    "pick": "picked up",
    "place": "placed",
    "pour": "poured into",
    "wipe": "wiped",
    "stack": "stacked",
    "swap": "swapped",
    "reposition": "repositioned",
    "drop": "dropped",
    "cover": "covered",
    "remove": "removed",
}
# Verbs whose instrument can be the thing referred to.
GERUNDS = {"wipe": "wiping", "pour": "pouring", "cover": "covering"}
ORDINALS = ("first", "second", "last")
ACTIONS = {
    "remove": "Remove",
    "pick up": "Pick up",
    "point to": "Point",
    "bring me": "Bring",
    "hand me": "Hand",
}
POSITIONS = ("left", "middle", "right")
GENERIC_NOUN = "object"

_PART_TO_VERB = {v: k for k, v in PARTICIPLES.items()}
_GER_TO_VERB = {v: k for k, v in GERUNDS.items()}


@dataclass(frozen=True)
class EventRef:
    verb: str
    role: str = "patient"
    noun: str = GENERIC_NOUN
    attributes: tuple = ()
    ordinal: Optional[str] = None
    instrument: Optional[str] = None
    anchor: Optional["Anchor"] = None

    def __post_init__(self) -> None:
        if self.verb not in PARTICIPLES:
            raise ValueError(f"unknown verb {self.verb!r}")
        if self.role not in ("patient", "instrument"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "instrument" and self.verb not in GERUNDS:
            raise ValueError(f"verb {self.verb!r} cannot refer to its instrument")
        if self.ordinal is not None and self.ordinal not in ORDINALS:
            raise ValueError(f"unknown ordinal {self.ordinal!r}")

    @property
    def hops(self) -> int:
        return 1 if self.anchor is None else 2

    def local(self) -> "EventRef":
        """The reference without qualifiers that need the whole video."""
        return EventRef(self.verb, self.role, self.noun, self.attributes, instrument=self.instrument)


@dataclass(frozen=True)
class Anchor:
    relation: str  # "after" | "before"
    event: EventRef

    def __post_init__(self) -> None:
        if self.relation not in ("after", "before"):
            raise ValueError(f"unknown relation {self.relation!r}")
        if self.event.anchor is not None:
            raise ValueError("anchors do not nest")
        if self.event.ordinal is not None or self.event.instrument is not None:
            raise ValueError("anchor events take no ordinal or instrument")


@dataclass(frozen=True)
class PresentRef:
    noun: str
    attributes: tuple = ()


@dataclass(frozen=True)
class OccluderRef:
    """Re-prompt asking for whatever now hides a previously tracked object."""

    base_question: str
    last_box: BoundingBox
    last_frame: int


Ref = Union[EventRef, PresentRef]


@dataclass(frozen=True)
class ParsedInstruction:
    """Temporal question, object question and robot action of one instruction."""

    temporal_question: str
    object_question: str
    action: str

    def __post_init__(self) -> None:
        for name in ("temporal_question", "object_question", "action"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"{name} must be non-empty text")

    def to_dict(self) -> dict:
        return {
            "temporal_question": self.temporal_question,
            "object_question": self.object_question,
            "action": self.action,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParsedInstruction":
        return cls(d["temporal_question"], d["object_question"], d["action"])


@dataclass(frozen=True)
class RenderedInstruction:
    instruction: str
    temporal_question: str
    object_question: str
    action: str

    @property
    def parsed(self) -> ParsedInstruction:
        return ParsedInstruction(self.temporal_question, self.object_question, self.action)


def noun_phrase(noun: str, attributes=()) -> str:
    return " ".join([*attributes, noun])


def describe(class_name: str, attributes) -> str:
    """Render an object description, e.g. ``green cloth on the left``."""
    adjectives = [a for a in attributes if a not in POSITIONS]
    positions = [a for a in attributes if a in POSITIONS]
    text = noun_phrase(class_name, adjectives)
    for pos in positions:
        text += " in the middle" if pos == "middle" else f" on the {pos}"
    return text


def _ord(ordinal: Optional[str]) -> str:
    return f"{ordinal} " if ordinal else ""


def _anchor_text(anchor: Optional[Anchor]) -> str:
    if anchor is None:
        return ""
    ev = anchor.event
    np_ = noun_phrase(ev.noun, ev.attributes)
    if ev.role == "instrument":
        clause = f"used for {GERUNDS[ev.verb]}"
    else:
        clause = PARTICIPLES[ev.verb]
    return f" {anchor.relation} the {np_} was {clause}"


def _patient_clause(ref: EventRef) -> str:
    with_ = f" with the {ref.instrument}" if ref.instrument else ""
    return f"{_ord(ref.ordinal)}{PARTICIPLES[ref.verb]}{with_}{_anchor_text(ref.anchor)}"


def render(ref: Ref, action: str = "remove") -> RenderedInstruction:
    if action not in ACTIONS:
        raise ValueError(f"unknown action {action!r}")
    if isinstance(ref, PresentRef):
        np_ = noun_phrase(ref.noun, ref.attributes)
        return RenderedInstruction(
            f"Robot, {action} the {np_}",
            f"Where is the {np_} in the current scene",
            f"Identify the {np_} in the current scene",
            ACTIONS[action],
        )
    np_ = noun_phrase(ref.noun, ref.attributes)
    if ref.role == "patient":
        clause = _patient_clause(ref)
        return RenderedInstruction(
            f"Robot, {action} the {np_} that was {clause}",
            f"When was the {np_} {clause}",
            f"Identify the {np_} that was {clause}",
            ACTIONS[action],
        )
    ger = GERUNDS[ref.verb]
    ord_, anchor = _ord(ref.ordinal), _anchor_text(ref.anchor)
    return RenderedInstruction(
        f"Robot, {action} the {np_} {ord_}used for {ger}{anchor}",
        f"When was the {np_} {ord_}being used for {ger}{anchor}",
        f"Identify the {np_} that was {ord_}used for {ger}{anchor}",
        ACTIONS[action],
    )


def occluder_question(base_question: str, last_box: BoundingBox, last_frame: int) -> str:
    box = json.dumps(last_box.as_list())
    return (
        f"{base_question}. The object was last seen at {box} in frame {last_frame} "
        "and is now out of view; identify the object occluding or containing it"
    )


# -- parsing ---------------------------------------------------------------

def _alt(words) -> str:
    return "|".join(re.escape(w) for w in sorted(words, key=len, reverse=True))


_NP = r"[a-z]+(?: [a-z]+)*?"
_PART = _alt(PARTICIPLES.values())
_GER = _alt(GERUNDS.values())
_ORDRE = rf"(?:(?P<ord>{_alt(ORDINALS)}) )?"
_ANCHOR = (
    rf"(?: (?P<rel>after|before) the (?P<anp>{_NP}) was "
    rf"(?:(?P<apart>{_PART})|used for (?P<ager>{_GER})))?"
)
_PBODY = rf"{_ORDRE}(?P<part>{_PART})(?: with the (?P<instr>[a-z]+))?{_ANCHOR}"
_ACT = _alt(ACTIONS)

_INSTRUCTION = [
    re.compile(rf"robot,? (?P<action>{_ACT}) the (?P<np>{_NP}) that was {_PBODY}"),
    re.compile(rf"robot,? (?P<action>{_ACT}) the (?P<np>{_NP}) {_ORDRE}used for (?P<ger>{_GER}){_ANCHOR}"),
    re.compile(rf"robot,? (?P<action>{_ACT}) the (?P<np>{_NP})"),
]
_TEMPORAL = [
    re.compile(rf"when was the (?P<np>{_NP}) {_ORDRE}being used for (?P<ger>{_GER}){_ANCHOR}"),
    re.compile(rf"when was the (?P<np>{_NP}) {_PBODY}"),
    re.compile(rf"where is the (?P<np>{_NP}) in the current scene"),
]
_OBJECT = [
    re.compile(rf"identify the (?P<np>{_NP}) that was {_ORDRE}used for (?P<ger>{_GER}){_ANCHOR}"),
    re.compile(rf"identify the (?P<np>{_NP}) that was {_PBODY}"),
    re.compile(rf"identify the (?P<np>{_NP}) in the current scene"),
]
_OCCLUDER = re.compile(
    r"(?P<base>.*)\. The object was last seen at (?P<box>\[[^\]]*\]) in frame (?P<frame>\d+) "
    r"and is now out of view; identify the object occluding or containing it",
    re.S,
)


def normalize(text: str) -> str:
    text = re.sub(r"\s+", " ", text.strip()).lower()
    return text.rstrip(".?! ")


def _split_np(np_: str) -> tuple[str, tuple]:
    words = np_.split(" ")
    return words[-1], tuple(words[:-1])


def _ref_from_match(m: re.Match) -> Ref:
    groups = m.groupdict()
    noun, attrs = _split_np(groups["np"])
    if groups.get("part"):
        verb, role = _PART_TO_VERB[groups["part"]], "patient"
    elif groups.get("ger"):
        verb, role = _GER_TO_VERB[groups["ger"]], "instrument"
    else:
        return PresentRef(noun, attrs)
    anchor = None
    if groups.get("rel"):
        anoun, aattrs = _split_np(groups["anp"])
        if groups.get("apart"):
            aref = EventRef(_PART_TO_VERB[groups["apart"]], "patient", anoun, aattrs)
        else:
            aref = EventRef(_GER_TO_VERB[groups["ager"]], "instrument", anoun, aattrs)
        anchor = Anchor(groups["rel"], aref)
    return EventRef(
        verb,
        role,
        noun,
        attrs,
        ordinal=groups.get("ord"),
        instrument=groups.get("instr"),
        anchor=anchor,
    )


def _parse(text: str, patterns) -> Optional[Ref]:
    norm = normalize(text)
    for pattern in patterns:
        m = pattern.fullmatch(norm)
        if m:
            return _ref_from_match(m)
    return None


def parse_instruction(text: str) -> Optional[tuple[Ref, str]]:
    """Return ``(ref, action_key)`` or None if the text fits no template."""
    norm = normalize(text)
    for pattern in _INSTRUCTION:
        m = pattern.fullmatch(norm)
        if m:
            return _ref_from_match(m), m.group("action")
    return None


def parse_temporal_question(text: str) -> Optional[Ref]:
    return _parse(text, _TEMPORAL)


def parse_object_question(text: str) -> Optional[Union[Ref, OccluderRef]]:
    m = _OCCLUDER.fullmatch(text.strip())
    if m:
        try:
            box = BoundingBox.of(json.loads(m.group("box")))
        except (ValueError, TypeError):
            return None
        return OccluderRef(m.group("base"), box, int(m.group("frame")))
    return _parse(text, _OBJECT)


def parse_any(text: str) -> Optional[Ref]:
    """Resolve instruction or question text to a reference, whichever fits."""
    parsed = parse_instruction(text)
    if parsed is not None:
        return parsed[0]
    ref = parse_object_question(text)
    if isinstance(ref, OccluderRef):
        return parse_any(ref.base_question)
    if ref is not None:
        return ref
    return parse_temporal_question(text)


def phrase_tokens(phrase: str) -> list[str]:
    stop = {"the", "on", "in", "a", "an", "of", "at"}
    return [w for w in re.findall(r"[a-z]+", phrase.lower()) if w not in stop]


def phrase_matches(phrase: str, class_name: str, attributes) -> bool:
    """True when an object of this class and attributes fits the phrase."""
    tokens = phrase_tokens(phrase)
    if class_name not in tokens:
        return False
    rest = list(tokens)
    rest.remove(class_name)
    return all(t in attributes for t in rest)
