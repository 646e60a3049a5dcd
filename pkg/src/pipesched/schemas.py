"""Published JSON schemas of every artifact the CLI writes."""
from __future__ import annotations

import jsonschema

from .errors import InvalidConfig

_ver = {"const": 1}
_num = {"type": "number"}
_nums = {"type": "array", "items": _num}
_config = {
    "type": "object",
    "additionalProperties": False,
    "required": ["k", "b", "M"],
    "properties": {"k": {"type": "integer"}, "b": {"type": "integer"}, "M": {"type": "integer"}},
}
_estimate = {
    "type": "object",
    "required": ["k", "b", "M", "estimated_length", "estimated_throughput"],
    "properties": {
        "k": {"type": "integer"},
        "b": {"type": "integer"},
        "M": {"type": "integer"},
        "estimated_length": _num,
        "estimated_throughput": _num,
        "inputs": {"type": "object"},
    },
    "additionalProperties": False,
}


def _obj(required: dict, optional: dict | None = None) -> dict:
    props = {"schema_version": _ver, **required, **(optional or {})}
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["schema_version", *required],
        "properties": props,
    }


SUMMARY = _obj({
    "plan": {"type": "string"},
    "time_unit": {"type": "string"},
    "config": _config,
    "pipeline_length": _num,
    "throughput": _num,
    "per_device_busy": _nums,
    "per_device_bubble": _nums,
    "bubble_fraction": _nums,
    "observed_peak_bytes": _nums,
    "queue_nonempty_launches": {"type": "array", "items": {"type": "integer"}},
})

TIMELINE = _obj({
    "config": _config,
    "pipeline_length": _num,
    "events": {
        "type": "array",
        "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["node", "device", "stream", "start", "end"],
            "properties": {
                "node": {"type": "string"},
                "device": {"type": "integer"},
                "stream": {"enum": ["compute", "send", "recv"]},
                "start": _num,
                "end": _num,
            },
        },
    },
})

PLAN = _obj({
    "name": {"type": "string"},
    "config": _config,
    "devices": {
        "type": "array",
        "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["device", "actions", "units"],
            "properties": {
                "device": {"type": "integer"},
                "actions": {"type": "array", "items": {"type": "string"}},
                "units": {"type": "array", "items": {"type": "array", "items": {"type": "string"}}},
            },
        },
    },
})

GRAPH = _obj({
    "config": _config,
    "num_stages": {"type": "integer"},
    "nodes": {"type": "array", "items": {"type": "object", "required": ["id", "kind"]}},
    "edges": {"type": "array", "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}},
})

CANDIDATES = _obj({
    "device_memory_limit": {"type": ["number", "null"]},
    "candidates": {
        "type": "array",
        "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["k", "b", "M", "per_device_peak", "limiting_device"],
            "properties": {
                "k": {"type": "integer"},
                "b": {"type": "integer"},
                "M": {"type": "integer"},
                "per_device_peak": _nums,
                "limiting_device": {"type": "integer"},
                "limit_margin": _num,
            },
        },
    },
})

RANKING = _obj({
    "profiling_time": _num,
    "ranking": {"type": "array", "items": _estimate},
    "profiles": {"type": "object"},
})

TUNING_DECISION = _obj({
    "round": {"type": "integer"},
    "time": _num,
    "profiling_time": _num,
    "estimates": {"type": "array", "items": _estimate},
    "chosen": _config,
    "previous": {"anyOf": [_config, {"type": "null"}]},
    "switched": {"type": "boolean"},
})

THROUGHPUT = _obj({
    "elapsed": _num,
    "samples": {"type": "integer"},
    "throughput": _num,
    "profiling_time": _num,
    "switch_time": _num,
    "iterations": {
        "type": "array",
        "items": {
            "type": "object",
            "additionalProperties": False,
            "required": ["start", "end", "k", "b", "M", "round", "throughput"],
            "properties": {
                "start": _num,
                "end": _num,
                "k": {"type": "integer"},
                "b": {"type": "integer"},
                "M": {"type": "integer"},
                "round": {"type": "integer"},
                "throughput": _num,
            },
        },
    },
})

ARTIFACTS = {
    "summary.json": SUMMARY,
    "timeline.json": TIMELINE,
    "plan.json": PLAN,
    "graph.json": GRAPH,
    "candidates.json": CANDIDATES,
    "ranking.json": RANKING,
    "tuning_log.jsonl": TUNING_DECISION,
    "throughput.json": THROUGHPUT,
}


def validate_artifact(name: str, data) -> None:
    try:
        jsonschema.validate(data, ARTIFACTS[name], cls=jsonschema.Draft202012Validator)
    except jsonschema.ValidationError as exc:
        raise InvalidConfig(f"{name}: {exc.message}") from None
