"""Fixed role prompts, request content builders and tolerant reply extractors."""

from __future__ import annotations

import json
import re

from ..errors import BaselineError, DetectorError, LocalizationError, ParseError

PARSE_PROMPT = (
    "Split the robot instruction into a temporal question about the past interaction, "
    "an object identification question and the robot action. Reply with JSON having the keys "
    "temporal_question, object_question and action."
)
LOCALIZE_PROMPT = (
    "The images are one video frame per second, starting at second 0. "
    "Reply with the second at which the asked interaction takes place."
)
IDENTIFY_PROMPT = "Name the class of the object the question asks about. Reply with the noun only."
SELECT_PROMPT = "The candidate objects are numbered. Reply with the number of the object the question asks about."
DESCRIBE_PROMPT = "Describe the object the instruction refers to by colour, class and position on the table."
REFINE_PROMPT = "The description matches several objects. Repeat it with one more distinguishing detail."

ROLE_PROMPTS = {
    "parse": PARSE_PROMPT,
    "localize": LOCALIZE_PROMPT,
    "identify": IDENTIFY_PROMPT,
    "select": SELECT_PROMPT,
    "describe": DESCRIBE_PROMPT,
    "refine": REFINE_PROMPT,
}
PROMPT_ROLES = {v: k for k, v in ROLE_PROMPTS.items()}

_REF = re.compile(r"^snapshot://(?P<episode>[^/]+)/(?P<frame>\d+)$")


def frame_ref(episode_id: str, frame: int) -> str:
    return f"snapshot://{episode_id}/{frame}"


def split_frame_ref(ref: str) -> tuple:
    m = _REF.match(ref)
    if not m:
        raise ValueError(f"bad frame reference {ref!r}")
    return m.group("episode"), int(m.group("frame"))


def text_part(text: str) -> dict:
    return {"type": "text", "text": text}


def image_part(ref: str) -> dict:
    return {"type": "image_ref", "image_ref": ref}


def chat_body(model: str, role: str, user_parts: list) -> dict:
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": [text_part(ROLE_PROMPTS[role])]},
            {"role": "user", "content": user_parts},
        ],
    }


def options_text(question: str, options) -> str:
    lines = [question]
    for opt in options:
        lines.append(f"Object {opt.label}: {json.dumps(opt.box.as_list())}")
    return "\n".join(lines)


def refine_text(question: str, description: str) -> str:
    return f"{question}\nPrevious description: {description}"


# -- reply extraction ----------------------------------------------------------

def extract_json(reply: str) -> dict:
    decoder = json.JSONDecoder()
    for i, ch in enumerate(reply):
        if ch == "{":
            try:
                obj, _ = decoder.raw_decode(reply, i)
            except json.JSONDecodeError:
                continue
            if isinstance(obj, dict):
                return obj
    raise ParseError(f"no JSON object in reply {reply[:80]!r}")


_SECOND_PATTERNS = (
    re.compile(r"\b(\d+)(?:st|nd|rd|th)?\s*(?:s|sec|secs|second|seconds)\b", re.I),
    re.compile(r"\bsecond\s+(\d+)\b", re.I),
)


def extract_second(reply: str) -> int:
    """First ``12th second`` / ``12 s`` / ``second 12`` style mention."""
    hits = []
    for pat in _SECOND_PATTERNS:
        m = pat.search(reply)
        if m:
            hits.append((m.start(), int(m.group(1))))
    if not hits:
        raise LocalizationError(f"no timestamp in reply {reply[:80]!r}")
    return min(hits)[1]


def extract_label(reply: str) -> int:
    m = re.search(r"\d+", reply)
    if not m:
        raise DetectorError(f"no option number in reply {reply[:80]!r}")
    return int(m.group())


def extract_phrase(reply: str, error=DetectorError) -> str:
    line = reply.strip().splitlines()[0] if reply.strip() else ""
    words = re.findall(r"[a-z]+", line.lower())
    while words and words[0] in ("the", "a", "an"):
        words.pop(0)
    if not words:
        raise error(f"no noun phrase in reply {reply[:80]!r}")
    return " ".join(words)


def extract_description(reply: str) -> str:
    text = reply.strip().splitlines()[0].strip().rstrip(".") if reply.strip() else ""
    if not re.search(r"[a-z]", text.lower()):
        raise BaselineError(f"empty description in reply {reply[:80]!r}", stage="video-describer")
    return text.lower()
