"""Online re-planning loop.

At every round the tuner suspends training, re-measures each (link, payload)
bucket used by any candidate, ranks the candidates with the cost model and
possibly switches plan. Between rounds it runs whole iterations of the
current plan against the true traces. Everything runs on one simulated
clock held in integer ticks.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .costmodel import PlanEstimate, profile_compute, rank_candidates
from .errors import InvalidConfig, UnknownCandidate
from .memory import CandidateSet, enumerate_candidates
from .model import ClusterSpec, LinkId, ModelSpec, PlanConfig, from_ticks, to_ticks
from .network import DEFAULT_REPEATS, DEFAULT_WINDOW, LinkTrace, ProfileStore, plan_buckets, profile_links
from .planner import plan_for
from .simulator import simulate_ticks

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TuningPolicy:
    interval: float
    profile_repeats: int = DEFAULT_REPEATS
    window_size: int = DEFAULT_WINDOW
    switch_overhead: float = 0.0
    hysteresis: float = 0.02
    k_max: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.interval > 0:
            raise InvalidConfig("interval must be > 0")
        if not self.hysteresis >= 0:
            raise InvalidConfig("hysteresis must be >= 0")
        if self.profile_repeats < 1 or self.window_size < 1:
            raise InvalidConfig("profile_repeats and window_size must be >= 1")
        if self.switch_overhead < 0:
            raise InvalidConfig("switch_overhead must be >= 0")


@dataclass(frozen=True)
class TuningDecision:
    round: int
    time: float
    profiling_time: float
    estimates: tuple[PlanEstimate, ...]
    chosen: PlanConfig
    previous: Optional[PlanConfig]
    switched: bool

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "round": self.round,
            "time": self.time,
            "profiling_time": self.profiling_time,
            "estimates": [
                {**e.config.to_dict(), "estimated_length": e.estimated_length, "estimated_throughput": e.throughput}
                for e in self.estimates
            ],
            "chosen": self.chosen.to_dict(),
            "previous": None if self.previous is None else self.previous.to_dict(),
            "switched": self.switched,
        }


@dataclass(frozen=True)
class IterationRecord:
    start: float
    end: float
    config: PlanConfig
    decision_round: int
    samples: int

    @property
    def throughput(self) -> float:
        return self.samples / (self.end - self.start)

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            **self.config.to_dict(),
            "round": self.decision_round,
            "throughput": self.throughput,
        }


@dataclass
class ExecutionState:
    """Which plan is live; switches only land on iteration boundaries."""

    config: PlanConfig
    candidates: CandidateSet
    in_iteration: bool = False
    pending: Optional[PlanConfig] = None
    overhead_charged: float = 0.0


def switch_plan(state: ExecutionState, new: PlanConfig, overhead: float = 0.0) -> ExecutionState:
    """Request a plan switch. Parameters are untouched by construction; the only
    cost is ``overhead``. Mid-iteration requests are deferred to the boundary."""
    if state.candidates.find(new) is None:
        raise UnknownCandidate(f"{new} is not in the candidate set")
    if new == state.config and state.pending is None:
        return state
    if state.in_iteration:
        state.pending = new
        return state
    state.config = new
    state.overhead_charged += overhead
    return state


def finish_iteration(state: ExecutionState, overhead: float = 0.0) -> ExecutionState:
    state.in_iteration = False
    if state.pending is not None:
        new, state.pending = state.pending, None
        switch_plan(state, new, overhead)
    return state


@dataclass
class AdaptiveRun:
    decisions: list[TuningDecision]
    iterations: list[IterationRecord]
    elapsed: float
    profiling_time: float = 0.0
    switch_time: float = 0.0

    @property
    def samples(self) -> int:
        return sum(it.samples for it in self.iterations)

    @property
    def throughput(self) -> float:
        return self.samples / self.elapsed if self.elapsed > 0 else 0.0

    @property
    def overhead_time(self) -> float:
        return self.profiling_time + self.switch_time

    def log_lines(self) -> list[str]:
        return [json.dumps(d.to_dict(), sort_keys=True) for d in self.decisions]

    def throughput_dict(self) -> dict:
        return {
            "schema_version": 1,
            "elapsed": self.elapsed,
            "samples": self.samples,
            "throughput": self.throughput,
            "profiling_time": self.profiling_time,
            "switch_time": self.switch_time,
            "iterations": [it.to_dict() for it in self.iterations],
        }


def run_fixed(
    model: ModelSpec,
    config: PlanConfig,
    traces: Optional[Mapping[LinkId, LinkTrace]],
    horizon: float,
) -> AdaptiveRun:
    """Baseline: one plan for the whole horizon, no profiling."""
    plan = plan_for(model, config)
    t, H = 0, to_ticks(horizon)
    iterations = []
    while t < H:
        res = simulate_ticks(plan, model, traces, offset=t)
        iterations.append(IterationRecord(from_ticks(t), from_ticks(res.end), config, -1, model.global_batch))
        t = res.end
    return AdaptiveRun([], iterations, from_ticks(t))


def run_adaptive(
    model: ModelSpec,
    cluster: ClusterSpec,
    traces: Optional[Mapping[LinkId, LinkTrace]],
    policy: TuningPolicy,
    horizon: float,
    candidates: Optional[CandidateSet] = None,
) -> AdaptiveRun:
    if candidates is None:
        candidates = enumerate_candidates(model, cluster, policy.k_max)
    configs = candidates.configs
    compute_profiles = profile_compute(model, {c.b for c in configs})
    buckets = sorted({bk for c in configs for bk in plan_buckets(plan_for(model, c))})
    store = ProfileStore(policy.window_size)
    H = to_ticks(horizon)
    interval = to_ticks(policy.interval)
    overhead = to_ticks(policy.switch_overhead)

    t = 0
    state: Optional[ExecutionState] = None
    current_est: Optional[float] = None
    decisions: list[TuningDecision] = []
    iterations: list[IterationRecord] = []
    profiling_ticks = switch_ticks = 0
    rnd = 0
    while t < H:
        round_start = t
        t = to_ticks(profile_links(buckets, traces, from_ticks(t), store, policy.profile_repeats))
        profiling_ticks += t - round_start
        ranked = rank_candidates(configs, model, compute_profiles, store)
        best = ranked[0]
        previous = None if state is None else state.config
        switched = False
        if state is None:
            state = ExecutionState(best.config, candidates)
        else:
            current = next(e for e in ranked if e.config == state.config)
            if best.config != state.config and best.estimated_length < current.estimated_length * (1 - policy.hysteresis):
                switch_plan(state, best.config, policy.switch_overhead)
                t += overhead
                switch_ticks += overhead
                switched = True
        current_est = next(e.estimated_length for e in ranked if e.config == state.config)
        decisions.append(
            TuningDecision(rnd, from_ticks(round_start), from_ticks(t - round_start), tuple(ranked), state.config, previous, switched)
        )
        log.debug("round %d at %.3f: chose %s (est %.4f)", rnd, from_ticks(round_start), state.config, current_est)

        plan = plan_for(model, state.config)
        next_round = round_start + interval
        # at least one iteration per round, even if profiling overran the interval
        ran = False
        while t < H and (t < next_round or not ran):
            ran = True
            state.in_iteration = True
            res = simulate_ticks(plan, model, traces, offset=t)
            finish_iteration(state)
            iterations.append(IterationRecord(from_ticks(t), from_ticks(res.end), state.config, rnd, model.global_batch))
            t = res.end
        rnd += 1
    return AdaptiveRun(decisions, iterations, from_ticks(t), from_ticks(profiling_ticks), from_ticks(switch_ticks))
