"""Scenario config files: JSON schema, validation and conversion to domain objects."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .errors import InvalidConfig
from .model import ClusterSpec, LinkId, ModelSpec, PlanConfig, StageProfile, pipeline_links
from .network import LinkTrace, preemption_trace
from .tuner import TuningPolicy

SCHEMA_VERSION = 1

_num = {"type": "number", "minimum": 0}
_pos_int = {"type": "integer", "minimum": 1}

_STAGE_FIELDS = {
    "forward_fixed": _num,
    "forward_per_sample": _num,
    "backward_fixed": _num,
    "backward_per_sample": _num,
    "weight_bytes": _num,
    "activation_bytes_per_sample": _num,
    "output_bytes_per_sample_fwd": _num,
    "output_bytes_per_sample_bwd": _num,
}

_LINK = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "base_bandwidth": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "latency": _num,
        "segments": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        },
        "utilization_curve": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        },
    },
}

LINK_KEY = r"^[0-9]+->[0-9]+$"

TRACE_FILE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["links"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "links": {"type": "object", "patternProperties": {LINK_KEY: _LINK}, "additionalProperties": False},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "model"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "time_unit": {"type": "string"},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["global_batch"],
            "properties": {
                "global_batch": _pos_int,
                "num_stages": _pos_int,
                "stage": {"type": "object", "additionalProperties": False, "properties": _STAGE_FIELDS},
                "stages": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "object", "additionalProperties": False, "properties": _STAGE_FIELDS},
                },
            },
        },
        "cluster": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"device_memory_limit": {"type": ["number", "null"], "exclusiveMinimum": 0}},
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "selector": {"enum": ["gpipe", "1f1b", "kfkb"]},
                "k": _pos_int,
                "b": _pos_int,
            },
        },
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "default": _LINK,
                "links": {"type": "object", "patternProperties": {LINK_KEY: _LINK}, "additionalProperties": False},
                "trace_file": {"type": "string"},
                "generator": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "horizon", "period"],
                    "properties": {
                        "kind": {"const": "preemption"},
                        "seed": {"type": "integer"},
                        "horizon": {"type": "number", "exclusiveMinimum": 0},
                        "period": {"type": "number", "exclusiveMinimum": 0},
                        "low": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "high": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "p_preempt": {"type": "number", "minimum": 0, "maximum": 1},
                        "links": {"type": "array", "items": {"type": "string", "pattern": LINK_KEY}},
                    },
                },
            },
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "interval": {"type": "number", "exclusiveMinimum": 0},
                "profile_repeats": _pos_int,
                "window_size": _pos_int,
                "switch_overhead": _num,
                "hysteresis": _num,
                "k_max": _pos_int,
            },
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "enumerate": {"type": "object", "additionalProperties": False, "properties": {"k_max": _pos_int}},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "timeline": {"type": "boolean"},
                "gantt": {"type": "boolean"},
                "plan": {"type": "boolean"},
                "graph": {"type": "boolean"},
            },
        },
    },
}

DEFAULT_K_MAX = 6


def _locate(text: str, path: list) -> Optional[int]:
    """Best-effort line number of the JSON element at ``path``."""
    pos = 0
    line_pos = None
    for key in path:
        if not isinstance(key, str):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.start()
        line_pos = pos
    if line_pos is None:
        return None
    return text.count("\n", 0, line_pos) + 1


def _schema_error(text: str, err: jsonschema.ValidationError, source: str) -> InvalidConfig:
    path = list(err.absolute_path)
    if err.validator == "additionalProperties":
        extra = re.findall(r"'([^']+)' was unexpected", err.message)
        if extra:
            path = path + [extra[0]]
    line = _locate(text, path)
    where = f"{source}:{line}" if line else source
    dotted = ".".join(str(p) for p in path) or "<root>"
    return InvalidConfig(f"{where}: {dotted}: {err.message}")


def load_json(text: str, source: str, schema: dict) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise _schema_error(text, errors[0], source)
    return data


@dataclass
class Scenario:
    model: ModelSpec
    cluster: ClusterSpec
    traces: dict[LinkId, LinkTrace]
    plan_selector: str = "kfkb"
    plan_k: int = 1
    plan_b: Optional[int] = None
    policy: Optional[TuningPolicy] = None
    horizon: Optional[float] = None
    k_max: int = DEFAULT_K_MAX
    outputs: dict = field(default_factory=dict)
    time_unit: str = "units"
    raw: dict = field(default_factory=dict, repr=False)

    def plan_config(self, selector: Optional[str] = None, k: Optional[int] = None, b: Optional[int] = None) -> PlanConfig:
        selector = selector or self.plan_selector
        b = b or self.plan_b or 1
        cfg = PlanConfig.for_model(self.model, 1, b)
        if selector == "gpipe":
            return PlanConfig(cfg.micro_batches, b, cfg.micro_batches)
        if selector == "1f1b":
            return cfg
        k = k or self.plan_k
        if not 1 <= k <= cfg.micro_batches:
            raise InvalidConfig(f"k={k} outside [1, M={cfg.micro_batches}]")
        return PlanConfig(k, b, cfg.micro_batches)


def _link_trace(link: LinkId, fields: dict, base: Optional[dict] = None) -> LinkTrace:
    merged = {**(base or {}), **fields}
    bw = merged.get("base_bandwidth")
    return LinkTrace(
        link,
        math.inf if bw is None else float(bw),
        float(merged.get("latency", 0.0)),
        tuple(tuple(s) for s in merged.get("segments", ())),
        tuple(tuple(c) for c in merged.get("utilization_curve", ())),
    )


def build_traces(net: dict, num_stages: int, base_dir: Path, seed: Optional[int] = None) -> dict[LinkId, LinkTrace]:
    links = pipeline_links(num_stages)
    default = net.get("default")
    per_link: dict[str, dict] = {}
    if "trace_file" in net:
        path = base_dir / net["trace_file"]
        try:
            text = path.read_text()
        except OSError as exc:
            raise InvalidConfig(f"cannot read trace file {path}: {exc.strerror}") from None
        per_link.update(load_json(text, str(path), TRACE_FILE_SCHEMA)["links"])
    per_link.update(net.get("links", {}))
    for key in per_link:
        link = LinkId.parse(key)
        if link not in links:
            raise InvalidConfig(f"network.links: {key} is not an adjacent-stage link")

    traces: dict[LinkId, LinkTrace] = {}
    for link in links:
        fields = per_link.get(str(link))
        if fields is not None or default is not None:
            traces[link] = _link_trace(link, fields or {}, default)

    gen = net.get("generator")
    if gen is not None:
        gen_seed = seed if seed is not None else gen.get("seed", 0)
        targets = [LinkId.parse(k) for k in gen["links"]] if "links" in gen else list(links)
        for link in targets:
            basis = traces.get(link) or LinkTrace(link, 1.0)
            generated = preemption_trace(
                link,
                basis.base_bandwidth,
                seed=gen_seed,
                horizon=gen["horizon"],
                period=gen["period"],
                low=gen.get("low", 0.2),
                high=gen.get("high", 1.0),
                p_preempt=gen.get("p_preempt", 0.5),
                latency=basis.latency,
            )
            traces[link] = LinkTrace(link, basis.base_bandwidth, basis.latency, generated.segments, basis.utilization_curve)
    return traces


def parse_scenario(data: dict, base_dir: Path = Path("."), seed: Optional[int] = None) -> Scenario:
    m = data["model"]
    if "stages" in m:
        if "stage" in m or "num_stages" in m:
            raise InvalidConfig("model: give either 'stages' or 'num_stages' + 'stage', not both")
        stages = tuple(StageProfile(i, **s) for i, s in enumerate(m["stages"]))
    elif "num_stages" in m:
        stages = tuple(StageProfile(i, **m.get("stage", {})) for i in range(m["num_stages"]))
    else:
        raise InvalidConfig("model: needs 'stages' or 'num_stages'")
    model = ModelSpec(stages, m["global_batch"])
    limit = data.get("cluster", {}).get("device_memory_limit")
    cluster = ClusterSpec(math.inf if limit is None else float(limit), model.num_stages)
    traces = build_traces(data.get("network", {}), model.num_stages, base_dir, seed)

    plan = data.get("plan", {})
    b = plan.get("b")
    if b is not None and model.global_batch % b:
        raise InvalidConfig(f"plan.b={b} does not divide model.global_batch={model.global_batch}")
    policy = None
    if "policy" in data:
        p = dict(data["policy"])
        policy = TuningPolicy(interval=p.pop("interval", 100.0), **p)
    return Scenario(
        model=model,
        cluster=cluster,
        traces=traces,
        plan_selector=plan.get("selector", "kfkb"),
        plan_k=plan.get("k", 1),
        plan_b=b,
        policy=policy,
        horizon=data.get("horizon"),
        k_max=data.get("enumerate", {}).get("k_max", (policy.k_max if policy and policy.k_max else DEFAULT_K_MAX)),
        outputs=data.get("outputs", {}),
        time_unit=data.get("time_unit", "units"),
        raw=data,
    )


def load_scenario(path: str | Path, seed: Optional[int] = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc.strerror}") from None
    data = load_json(text, str(path), SCENARIO_SCHEMA)
    return parse_scenario(data, path.parent, seed)
