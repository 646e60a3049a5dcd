"""Liveness-based peak memory and the memory-limit candidate frontier."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import InfeasibleModel, InvalidConfig
from .model import ClusterSpec, Direction, ModelSpec, PlanConfig
from .planner import SchedulePlan, UnitOrder, kfkb_order

PeakFn = Callable[[int, int], Sequence[float]]


@dataclass(frozen=True)
class PeakMemoryReport:
    per_device_peak: tuple[float, ...]

    @property
    def limiting_device(self) -> int:
        peaks = self.per_device_peak
        return max(range(len(peaks)), key=lambda d: (peaks[d], -d))

    @property
    def peak(self) -> float:
        return max(self.per_device_peak)

    def fits(self, limit: float) -> bool:
        return all(p <= limit for p in self.per_device_peak)

    def to_dict(self) -> dict:
        return {"per_device_peak": list(self.per_device_peak), "limiting_device": self.limiting_device}


def _walk(model: ModelSpec, b: int, order: UnitOrder) -> PeakMemoryReport:
    peaks = []
    for s, seq in enumerate(order):
        stage = model.stages[s]
        act = stage.activation_bytes_per_sample * b
        live = 0
        high = 0
        for direction, _ in seq:
            live += 1 if direction is Direction.FORWARD else -1
            high = max(high, live)
        peaks.append(stage.weight_bytes + high * act)
    return PeakMemoryReport(tuple(peaks))


def peak_memory(plan: SchedulePlan, model: ModelSpec) -> PeakMemoryReport:
    """Walk each device's action list: a forward allocates its activations,
    the matching backward frees them, weights stay resident."""
    b = plan.config.b
    peaks = []
    for d, actions in enumerate(plan.per_device):
        stage = model.stages[d]
        act = stage.activation_bytes_per_sample * b
        live: set[int] = set()
        high = 0
        for nid in actions:
            node = plan.graph.nodes[nid]
            if node.direction is Direction.FORWARD:
                live.add(node.micro_batch)
                high = max(high, len(live))
            else:
                live.discard(node.micro_batch)
        # count in-flight activations, then scale once: exact and order-free
        peaks.append(stage.weight_bytes + high * act)
    return PeakMemoryReport(tuple(peaks))


def kfkb_peak(model: ModelSpec, k: int, b: int) -> PeakMemoryReport:
    """Peak memory of the kFkB plan for (k, b) without materialising the task graph."""
    M = model.global_batch // b
    return _walk(model, b, kfkb_order(model.num_stages, M, k))


@dataclass(frozen=True)
class Candidate:
    config: PlanConfig
    memory: PeakMemoryReport

    def to_dict(self, limit: Optional[float] = None) -> dict:
        out = {**self.config.to_dict(), **self.memory.to_dict()}
        if limit is not None and math.isfinite(limit):
            out["limit_margin"] = limit - self.memory.peak
        return out


@dataclass(frozen=True)
class CandidateSet:
    entries: tuple[Candidate, ...]
    limit: float

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def configs(self) -> list[PlanConfig]:
        return [c.config for c in self.entries]

    def find(self, config: PlanConfig) -> Optional[Candidate]:
        for c in self.entries:
            if c.config == config:
                return c
        return None

    def to_dict(self) -> dict:
        limit = self.limit if math.isfinite(self.limit) else None
        return {
            "schema_version": 1,
            "device_memory_limit": limit,
            "candidates": [c.to_dict(self.limit) for c in self.entries],
        }


def enumerate_candidates(
    model: ModelSpec,
    cluster: ClusterSpec,
    k_max: Optional[int] = None,
    peak_fn: Optional[PeakFn] = None,
) -> CandidateSet:
    """Greedy walk along the memory-limit curve.

    For each k from 1 upward, take the largest micro-batch size (a divisor of
    the global batch) whose plan fits on every device. Points under the curve
    are never emitted. ``peak_fn(k, b)`` may replace the liveness estimate,
    returning per-device peaks.
    """
    cluster.check_model(model)
    limit = cluster.device_memory_limit
    divisors = model.divisors()
    if k_max is None:
        k_max = model.global_batch // divisors[0]
    if k_max < 1:
        raise InvalidConfig(f"k_max must be >= 1, got {k_max}")

    def evaluate(k: int, b: int) -> PeakMemoryReport:
        if peak_fn is None:
            return kfkb_peak(model, k, b)
        return PeakMemoryReport(tuple(peak_fn(k, b)))

    if not evaluate(1, divisors[0]).fits(limit):
        raise InfeasibleModel(f"even k=1, b={divisors[0]} exceeds the device memory limit {limit}")

    entries = []
    for k in range(1, k_max + 1):
        for b in reversed(divisors):
            M = model.global_batch // b
            if k > M:
                continue
            report = evaluate(k, b)
            if report.fits(limit):
                entries.append(Candidate(PlanConfig(k, b, M), report))
                break
    return CandidateSet(tuple(entries), limit)
