"""kFkB pipeline schedule generation, simulation and online plan tuning."""
from .costmodel import PlanEstimate, estimate_length, profile_compute, rank_candidates
from .errors import (
    DeadlockDetected,
    InfeasibleModel,
    InvalidConfig,
    NoProfileData,
    PipeschedError,
    UnknownCandidate,
)
from .kernel import BACKEND
from .memory import CandidateSet, PeakMemoryReport, enumerate_candidates, peak_memory
from .model import ClusterSpec, Direction, LinkId, ModelSpec, PlanConfig, StageProfile
from .network import LinkTrace, ProfileStore, preemption_trace, profile_links, transfer_duration
from .planner import SchedulePlan, plan_1f1b, plan_gpipe, plan_kfkb, validate_plan
from .simulator import SimResult, bubble_report, queue_analysis, simulate
from .taskgraph import TaskGraph, TaskNode, build_task_graph, validate
from .tuner import AdaptiveRun, TuningPolicy, run_adaptive, run_fixed, switch_plan

__version__ = "0.1.0"

__all__ = [
    "AdaptiveRun", "BACKEND", "CandidateSet", "ClusterSpec", "DeadlockDetected", "Direction",
    "InfeasibleModel", "InvalidConfig", "LinkId", "LinkTrace", "ModelSpec", "NoProfileData",
    "PeakMemoryReport", "PipeschedError", "PlanConfig", "PlanEstimate", "ProfileStore",
    "SchedulePlan", "SimResult", "StageProfile", "TaskGraph", "TaskNode", "TuningPolicy",
    "UnknownCandidate", "bubble_report", "build_task_graph", "enumerate_candidates",
    "estimate_length", "peak_memory", "plan_1f1b", "plan_gpipe", "plan_kfkb", "preemption_trace",
    "profile_compute", "profile_links", "queue_analysis", "rank_candidates", "run_adaptive",
    "run_fixed", "simulate", "switch_plan", "transfer_duration", "validate", "validate_plan",
]
