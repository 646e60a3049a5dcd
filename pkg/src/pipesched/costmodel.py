"""Pipeline-length estimates from profiled compute and communication times.

The estimator replays the plan in the simulator with every computation and
every transfer replaced by its profiled (moving-average) duration. On a link
whose real behaviour is constant the estimate is therefore exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import NoProfileData
from .memory import CandidateSet
from .model import Direction, ModelSpec, PlanConfig, compute_duration
from .network import LinkTrace, ProfileStore, plan_buckets
from .planner import SchedulePlan, plan_for
from .simulator import simulate

ComputeProfiles = Mapping[tuple[int, int, Direction], float]


@dataclass(frozen=True)
class PlanEstimate:
    config: PlanConfig
    estimated_length: float
    inputs_digest: dict = field(default_factory=dict, compare=False)

    @property
    def throughput(self) -> float:
        return self.config.b * self.config.micro_batches / self.estimated_length

    def to_dict(self) -> dict:
        return {
            **self.config.to_dict(),
            "estimated_length": self.estimated_length,
            "estimated_throughput": self.throughput,
            "inputs": self.inputs_digest,
        }


def profile_compute(model: ModelSpec, batch_sizes: Iterable[int]) -> dict[tuple[int, int, Direction], float]:
    """Stage execution times; compute is never preempted so one pass suffices."""
    out = {}
    for b in sorted(set(batch_sizes)):
        for stage in model.stages:
            for direction in Direction:
                out[(stage.stage_id, b, direction)] = compute_duration(stage, b, direction)
    return out


def estimate_length(
    plan: SchedulePlan,
    model: ModelSpec,
    compute_profiles: ComputeProfiles,
    comm_profiles: ProfileStore,
) -> PlanEstimate:
    b = plan.config.b
    durations = {}
    for stage in range(plan.num_devices):
        for direction in Direction:
            key = (stage, b, direction)
            if key not in compute_profiles:
                raise NoProfileData(("compute", stage, b, direction.value))
            durations[(stage, direction)] = compute_profiles[key]
    traces = {}
    comm_digest = {}
    for link, nbytes in plan_buckets(plan):
        est = comm_profiles.estimate(link, nbytes)
        traces[link] = LinkTrace.fixed_duration(link, est)
        comm_digest[str(link)] = est
    result = simulate(plan, model, traces, compute_durations=durations)
    digest = {
        "compute": {f"{s}{d.value}": v for (s, d), v in sorted(durations.items(), key=lambda kv: (kv[0][0], kv[0][1].value))},
        "comm": comm_digest,
    }
    return PlanEstimate(plan.config, result.pipeline_length, digest)


def rank_key(est: PlanEstimate) -> tuple:
    # shorter first; ties prefer less memory pressure (small k), then larger b
    return (est.estimated_length, est.config.k, -est.config.b)


def rank_candidates(
    candidates: CandidateSet | Iterable[PlanConfig],
    model: ModelSpec,
    compute_profiles: ComputeProfiles,
    comm_profiles: ProfileStore,
) -> list[PlanEstimate]:
    configs = candidates.configs if isinstance(candidates, CandidateSet) else list(candidates)
    estimates = [estimate_length(plan_for(model, c), model, compute_profiles, comm_profiles) for c in configs]
    return sorted(estimates, key=rank_key)
