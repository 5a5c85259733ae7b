"""JSON schemas for the corpus, results, report and fault-profile documents."""

from __future__ import annotations

import jsonschema

from .errors import ConsistencyError

_BOX_LIST = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 4, "maxItems": 4}
_BOX_DICT = {
    "type": "object",
    "required": ["x_min", "y_min", "x_max", "y_max"],
    "properties": {k: {"type": "number", "minimum": 0} for k in ("x_min", "y_min", "x_max", "y_max")},
    "additionalProperties": False,
}
_NULLABLE_BOX = {"anyOf": [_BOX_LIST, {"type": "null"}]}

_EVENT = {
    "type": "object",
    "required": ["verb", "actor_role", "patient", "instrument", "start_s", "end_s", "motion"],
    "properties": {
        "verb": {
            "enum": ["pick", "place", "pour", "wipe", "stack", "swap", "reposition", "drop", "cover", "remove"]
        },
        "actor_role": {"const": "human"},
        "patient": {"type": "string"},
        "instrument": {"type": ["string", "null"]},
        "start_s": {"type": "integer", "minimum": 0},
        "end_s": {"type": "integer", "minimum": 1},
        "motion": {"type": "object", "additionalProperties": _BOX_DICT},
    },
    "additionalProperties": False,
}

_SCRIPT = {
    "type": "object",
    "required": ["meta", "objects", "events", "seed"],
    "properties": {
        "meta": {
            "type": "object",
            "required": ["fps", "duration_s", "frame_width", "frame_height"],
            "properties": {
                "fps": {"type": "integer", "minimum": 1},
                "duration_s": {"type": "integer", "minimum": 1},
                "frame_width": {"type": "integer", "minimum": 1},
                "frame_height": {"type": "integer", "minimum": 1},
            },
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "class_name", "attributes", "initial_box"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "class_name": {"type": "string", "minLength": 1},
                    "attributes": {"type": "array", "items": {"type": "string"}},
                    "initial_box": _BOX_DICT,
                },
            },
        },
        "events": {"type": "array", "items": _EVENT},
        "seed": {"type": "integer"},
    },
}

_TAGS = {
    "type": "object",
    "required": ["hops", "spatial", "interactions", "observability"],
    "properties": {
        "hops": {"enum": ["single", "multi"]},
        "spatial": {"enum": ["simple", "complex"]},
        "interactions": {"enum": ["single", "multi"]},
        "observability": {"enum": ["full", "partial"]},
    },
    "additionalProperties": False,
}

CORPUS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["meta", "episodes"],
    "properties": {
        "meta": {"type": "object", "required": ["version", "count"]},
        "episodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "script", "instruction", "ground_truth", "tags"],
                "properties": {
                    "id": {"type": "string"},
                    "script": _SCRIPT,
                    "instruction": {"type": "string", "minLength": 1},
                    "ground_truth": {
                        "type": "object",
                        "required": ["parsed", "event_time_s", "target_id", "final_box", "visibility_chain"],
                        "properties": {
                            "parsed": {
                                "type": "object",
                                "required": ["temporal_question", "object_question", "action"],
                                "properties": {
                                    k: {"type": "string", "minLength": 1}
                                    for k in ("temporal_question", "object_question", "action")
                                },
                            },
                            "event_time_s": {"type": "integer", "minimum": 0},
                            "target_id": {"type": "string"},
                            "final_box": _BOX_DICT,
                            "visibility_chain": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                        },
                    },
                    "tags": _TAGS,
                },
            },
        },
    },
}

RESULT_SCHEMA = {
    "type": "object",
    "required": ["episode_id", "pipeline", "final_box", "error_stage", "iterations", "seed", "trace"],
    "properties": {
        "episode_id": {"type": "string"},
        "pipeline": {"enum": ["g2tr", "dtvg", "rtvg"]},
        "final_box": _NULLABLE_BOX,
        "error_stage": {"type": ["string", "null"]},
        "iterations": {"type": "integer", "minimum": 0},
        "stage_durations_ms": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
        "seed": {"type": "integer"},
        "trace": {"type": "object", "required": ["records"]},
    },
}

RESULTS_SCHEMA = {
    "type": "object",
    "required": ["meta", "results"],
    "properties": {
        "meta": {"type": "object", "required": ["pipeline", "seed"]},
        "results": {"type": "array", "items": RESULT_SCHEMA},
    },
}

_STAT = {
    "type": "object",
    "required": ["mean", "std"],
    "properties": {
        "mean": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
        "std": {"type": ["number", "null"], "minimum": 0},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["metadata", "rows"],
    "properties": {
        "metadata": {"type": "object", "required": ["threshold", "std", "seeds", "corpus_size", "columns"]},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["pipeline", "runs", "episodes", "cells", "failures"],
                "properties": {
                    "pipeline": {"type": "string"},
                    "runs": {"type": "integer", "minimum": 1},
                    "episodes": {"type": "integer", "minimum": 0},
                    "cells": {
                        "type": "object",
                        "required": ["overall", "sh", "mh", "ss", "sc", "co", "po", "si", "mi"],
                        "additionalProperties": _STAT,
                    },
                    "failures": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
                },
            },
        },
    },
}

_RATE = {"type": "number", "minimum": 0, "maximum": 1}
FAULT_PROFILE_SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer"},
        "parser": {"type": "object", "properties": {"scramble_rate": _RATE}, "additionalProperties": False},
        "localizer": {
            "type": "object",
            "properties": {"rate": _RATE, "offsets": {"type": "array", "items": {"type": "integer"}}},
            "additionalProperties": False,
        },
        "detector": {
            "type": "object",
            "properties": {"wrong_class_rate": _RATE, "wrong_option_rate": _RATE},
            "additionalProperties": False,
        },
        "grounder": {
            "type": "object",
            "properties": {"jitter_px": {"type": "integer", "minimum": 0}, "miss_rate": _RATE},
            "additionalProperties": False,
        },
        "tracker": {"type": "object", "properties": {"swap_rate": _RATE}, "additionalProperties": False},
    },
    "additionalProperties": False,
}


def validate(doc, schema, error=ConsistencyError) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise error(f"schema violation at {where}: {exc.message}") from None
