"""Stage, model and cluster descriptions plus the per-stage cost functions.

Durations are dimensionless time units. Inside the simulator they are held
as integer ticks (``TICKS_PER_UNIT`` per unit) so that event ordering is
exact and reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, NamedTuple

from .errors import InvalidConfig

TICKS_PER_UNIT = 1_000_000_000


def to_ticks(value: float) -> int:
    """Round a duration/time in units to the nearest tick (halves round up)."""
    return int(math.floor(value * TICKS_PER_UNIT + 0.5))


def from_ticks(ticks: int) -> float:
    return ticks / TICKS_PER_UNIT


class Direction(str, Enum):
    FORWARD = "F"
    BACKWARD = "B"


class LinkId(NamedTuple):
    """A directed inter-stage link, ``src -> dst``."""

    src: int
    dst: int

    def __str__(self) -> str:
        return f"{self.src}->{self.dst}"

    @classmethod
    def parse(cls, text: str) -> "LinkId":
        try:
            src, dst = text.split("->")
            return cls(int(src), int(dst))
        except ValueError:
            raise InvalidConfig(f"malformed link id {text!r}, expected 'SRC->DST'") from None

    @property
    def is_forward(self) -> bool:
        return self.dst == self.src + 1


def _check_nonneg(obj: Any, names: Iterable[str]) -> None:
    for name in names:
        value = getattr(obj, name)
        if not (value >= 0) or math.isnan(value):
            raise InvalidConfig(f"{type(obj).__name__}.{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class StageProfile:
    stage_id: int
    forward_fixed: float = 0.0
    forward_per_sample: float = 1.0
    backward_fixed: float = 0.0
    backward_per_sample: float = 2.0
    weight_bytes: float = 0.0
    activation_bytes_per_sample: float = 0.0
    output_bytes_per_sample_fwd: float = 0.0
    output_bytes_per_sample_bwd: float = 0.0

    def __post_init__(self) -> None:
        if self.stage_id < 0:
            raise InvalidConfig(f"stage_id must be >= 0, got {self.stage_id}")
        _check_nonneg(
            self,
            (
                "forward_fixed",
                "forward_per_sample",
                "backward_fixed",
                "backward_per_sample",
                "weight_bytes",
                "activation_bytes_per_sample",
                "output_bytes_per_sample_fwd",
                "output_bytes_per_sample_bwd",
            ),
        )
        # compute_duration must be strictly increasing in b
        if self.forward_per_sample == 0 or self.backward_per_sample == 0:
            raise InvalidConfig(f"stage {self.stage_id}: per-sample compute cost must be > 0")


def compute_duration(stage: StageProfile, b: int, direction: Direction) -> float:
    """Affine compute cost: launch overhead plus a per-sample term."""
    if b < 1:
        raise InvalidConfig(f"micro-batch size must be >= 1, got {b}")
    if direction is Direction.FORWARD:
        return stage.forward_fixed + b * stage.forward_per_sample
    return stage.backward_fixed + b * stage.backward_per_sample


def transfer_bytes(stage: StageProfile, b: int, direction: Direction) -> float:
    """Bytes the stage sends downstream (forward) or upstream (backward) per micro-batch."""
    if b < 1:
        raise InvalidConfig(f"micro-batch size must be >= 1, got {b}")
    if direction is Direction.FORWARD:
        return b * stage.output_bytes_per_sample_fwd
    return b * stage.output_bytes_per_sample_bwd


@dataclass(frozen=True)
class ModelSpec:
    stages: tuple[StageProfile, ...]
    global_batch: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise InvalidConfig("a model needs at least one stage")
        if int(self.global_batch) != self.global_batch or self.global_batch < 1:
            raise InvalidConfig(f"global_batch must be a positive integer, got {self.global_batch!r}")
        for i, stage in enumerate(self.stages):
            if stage.stage_id != i:
                raise InvalidConfig(f"stage ids must be contiguous from 0; position {i} has id {stage.stage_id}")

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def divisors(self) -> list[int]:
        """Admissible micro-batch sizes, ascending."""
        g = self.global_batch
        return [b for b in range(1, g + 1) if g % b == 0]

    @classmethod
    def uniform(cls, num_stages: int, global_batch: int, **stage_fields: float) -> "ModelSpec":
        return cls(tuple(StageProfile(s, **stage_fields) for s in range(num_stages)), global_batch)


@dataclass(frozen=True)
class ClusterSpec:
    device_memory_limit: float
    devices: int
    links: tuple[LinkId, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.device_memory_limit > 0:
            raise InvalidConfig(f"device_memory_limit must be > 0, got {self.device_memory_limit!r}")
        if self.devices < 1:
            raise InvalidConfig("a cluster needs at least one device")
        if not self.links:
            object.__setattr__(self, "links", pipeline_links(self.devices))
        else:
            object.__setattr__(self, "links", tuple(self.links))

    @classmethod
    def for_model(cls, model: ModelSpec, device_memory_limit: float = math.inf) -> "ClusterSpec":
        return cls(device_memory_limit, model.num_stages)

    def check_model(self, model: ModelSpec) -> None:
        if self.devices != model.num_stages:
            raise InvalidConfig(
                f"one stage per device: cluster has {self.devices} devices, model has {model.num_stages} stages"
            )


def pipeline_links(num_stages: int) -> tuple[LinkId, ...]:
    links = []
    for s in range(num_stages - 1):
        links.append(LinkId(s, s + 1))
        links.append(LinkId(s + 1, s))
    return tuple(links)


@dataclass(frozen=True, order=True)
class PlanConfig:
    """Group member count ``k`` and micro-batch size ``b`` for one global batch."""

    k: int
    b: int
    micro_batches: int

    def __post_init__(self) -> None:
        if self.b < 1 or self.micro_batches < 1:
            raise InvalidConfig(f"invalid plan config b={self.b}, M={self.micro_batches}")
        if not 1 <= self.k <= self.micro_batches:
            raise InvalidConfig(f"k must satisfy 1 <= k <= M={self.micro_batches}, got {self.k}")

    @property
    def M(self) -> int:
        return self.micro_batches

    @classmethod
    def for_model(cls, model: ModelSpec, k: int, b: int) -> "PlanConfig":
        if b < 1 or model.global_batch % b:
            raise InvalidConfig(f"micro-batch size {b} does not divide global batch {model.global_batch}")
        return cls(k, b, model.global_batch // b)

    def to_dict(self) -> dict:
        return {"k": self.k, "b": self.b, "M": self.micro_batches}
