"""Preempted link model, direct transfer-time measurement and moving-average profiles.

A link's usable bandwidth is ``base_bandwidth * availability(t) * efficiency(bytes)``
where availability is piecewise constant in time (other tenants' traffic) and
efficiency depends on message size only. Times outside every segment see
full availability.
"""
from __future__ import annotations

import bisect
import math
import random
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from statistics import fmean
from typing import Iterable, Mapping, Optional

from .errors import InvalidConfig, NoProfileData
from .model import TICKS_PER_UNIT, LinkId, from_ticks, to_ticks

DEFAULT_WINDOW = 8
DEFAULT_REPEATS = 3


@dataclass(frozen=True)
class LinkTrace:
    link: LinkId
    base_bandwidth: float = math.inf
    latency: float = 0.0
    segments: tuple[tuple[float, float, float], ...] = ()
    # (upper message size in bytes, efficiency); larger messages run at 1.0
    utilization_curve: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "link", LinkId(*self.link))
        segs = tuple((float(a), float(b), float(v)) for a, b, v in self.segments)
        curve = tuple(sorted((float(a), float(e)) for a, e in self.utilization_curve))
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "utilization_curve", curve)
        if not self.base_bandwidth > 0:
            raise InvalidConfig(f"link {self.link}: base_bandwidth must be > 0")
        if not self.latency >= 0:
            raise InvalidConfig(f"link {self.link}: latency must be >= 0")
        prev_end = -math.inf
        for start, end, avail in segs:
            if not start < end:
                raise InvalidConfig(f"link {self.link}: empty segment [{start}, {end})")
            if start < prev_end:
                raise InvalidConfig(f"link {self.link}: segments overlap or are unsorted at {start}")
            if not 0 < avail <= 1:
                raise InvalidConfig(f"link {self.link}: availability {avail} outside (0, 1]")
            prev_end = end
        for _, eff in curve:
            if not 0 < eff <= 1:
                raise InvalidConfig(f"link {self.link}: efficiency {eff} outside (0, 1]")

    @classmethod
    def fixed_duration(cls, link: LinkId, duration: float) -> "LinkTrace":
        """A link on which every message takes exactly ``duration``."""
        return cls(link, math.inf, duration)

    def efficiency(self, nbytes: float) -> float:
        for upper, eff in self.utilization_curve:
            if nbytes <= upper:
                return eff
        return 1.0

    def availability(self, t: float) -> float:
        i = bisect.bisect_right(self._ends, t)
        if i < len(self.segments) and self.segments[i][0] <= t:
            return self.segments[i][2]
        return 1.0

    @cached_property
    def _ends(self) -> list[float]:
        return [seg[1] for seg in self.segments]

    @cached_property
    def tick_segments(self) -> tuple[list[int], list[int], list[float]]:
        starts = [to_ticks(s) for s, _, _ in self.segments]
        ends = [to_ticks(e) for _, e, _ in self.segments]
        avails = [v for _, _, v in self.segments]
        return starts, ends, avails

    @cached_property
    def latency_ticks(self) -> int:
        return to_ticks(self.latency)

    def to_dict(self) -> dict:
        return {
            "link": str(self.link),
            "base_bandwidth": None if math.isinf(self.base_bandwidth) else self.base_bandwidth,
            "latency": self.latency,
            "segments": [list(s) for s in self.segments],
            "utilization_curve": [list(c) for c in self.utilization_curve],
        }


def ideal_link(link: LinkId) -> LinkTrace:
    return LinkTrace(link)


def transfer_duration(trace: LinkTrace, nbytes: float, start: float) -> float:
    """Time to push ``nbytes`` over the link starting at ``start`` (exact float walk)."""
    if nbytes < 0:
        raise ValueError("nbytes must be >= 0")
    if nbytes == 0 or math.isinf(trace.base_bandwidth):
        return trace.latency
    eff = trace.efficiency(nbytes)
    segs = trace.segments
    ends = trace._ends
    t0 = t = start + trace.latency
    remaining = float(nbytes)
    while True:
        i = bisect.bisect_right(ends, t)
        if i < len(segs) and segs[i][0] <= t:
            avail, boundary = segs[i][2], segs[i][1]
        elif i < len(segs):
            avail, boundary = 1.0, segs[i][0]
        else:
            avail, boundary = 1.0, math.inf
        rate = trace.base_bandwidth * avail * eff
        if math.isinf(boundary) or remaining <= rate * (boundary - t):
            return trace.latency + (t + remaining / rate - t0)
        remaining -= rate * (boundary - t)
        t = boundary


def transfer_ticks(
    latency_ticks: int,
    base_bandwidth: float,
    efficiency: float,
    seg_starts: list[int],
    seg_ends: list[int],
    seg_avails: list[float],
    nbytes: float,
    start: int,
) -> int:
    """Integer-tick twin of :func:`transfer_duration` used by the simulator.

    The compiled kernel reimplements this operation-for-operation; both must
    stay in lockstep for results to be bit-identical.
    """
    if nbytes == 0 or math.isinf(base_bandwidth):
        return latency_ticks
    t = start + latency_ticks
    remaining = nbytes
    n = len(seg_ends)
    while True:
        i = bisect.bisect_right(seg_ends, t)
        if i < n and seg_starts[i] <= t:
            avail = seg_avails[i]
            boundary = seg_ends[i]
        elif i < n:
            avail = 1.0
            boundary = seg_starts[i]
        else:
            rate = base_bandwidth * 1.0 * efficiency
            return t + math.floor(remaining * TICKS_PER_UNIT / rate + 0.5) - start
        rate = base_bandwidth * avail * efficiency
        cap = rate * (boundary - t) / TICKS_PER_UNIT
        if remaining <= cap:
            return t + math.floor(remaining * TICKS_PER_UNIT / rate + 0.5) - start
        remaining -= cap
        t = boundary


def trace_transfer_ticks(trace: LinkTrace, nbytes: float, start: int) -> int:
    starts, ends, avails = trace.tick_segments
    return transfer_ticks(
        trace.latency_ticks, trace.base_bandwidth, trace.efficiency(nbytes), starts, ends, avails, nbytes, start
    )


def lookup_trace(traces: Optional[Mapping[LinkId, LinkTrace]], link: LinkId) -> LinkTrace:
    """Links absent from ``traces`` are ideal: no latency, unbounded bandwidth."""
    if traces and link in traces:
        return traces[link]
    return ideal_link(link)


def constant_traces(links: Iterable[LinkId], base_bandwidth: float, latency: float = 0.0) -> dict[LinkId, LinkTrace]:
    return {link: LinkTrace(link, base_bandwidth, latency) for link in links}


def preemption_trace(
    link: LinkId,
    base_bandwidth: float,
    *,
    seed: int,
    horizon: float,
    period: float,
    low: float = 0.2,
    high: float = 1.0,
    p_preempt: float = 0.5,
    latency: float = 0.0,
    start: float = 0.0,
) -> LinkTrace:
    """Seeded piecewise-constant trace: each ``period`` slot is preempted with
    probability ``p_preempt`` and then gets availability ~ U(low, high)."""
    rng = random.Random(f"{seed}:{link}")
    segs = []
    t = start
    while t < horizon:
        end = min(t + period, horizon)
        if rng.random() < p_preempt:
            segs.append((t, end, rng.uniform(low, high)))
        t = end
    return LinkTrace(link, base_bandwidth, latency, tuple(segs))


@dataclass(frozen=True)
class CommSample:
    link: LinkId
    nbytes: float
    start_time: float
    measured_duration: float


@dataclass
class ProfileStore:
    """Per-(link, payload) ring buffers of measured durations."""

    window_size: int = DEFAULT_WINDOW
    _buffers: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.window_size < 1:
            raise InvalidConfig("window_size must be >= 1")

    def record_sample(self, sample: CommSample) -> "ProfileStore":
        key = (LinkId(*sample.link), float(sample.nbytes))
        buf = self._buffers.get(key)
        if buf is None:
            buf = self._buffers[key] = deque(maxlen=self.window_size)
        buf.append(sample.measured_duration)
        return self

    def estimate(self, link: LinkId, nbytes: float) -> float:
        buf = self._buffers.get((LinkId(*link), float(nbytes)))
        if not buf:
            raise NoProfileData((str(link), nbytes))
        return fmean(buf)

    def samples(self, link: LinkId, nbytes: float) -> list[float]:
        return list(self._buffers.get((LinkId(*link), float(nbytes)), ()))

    def buckets(self) -> list[tuple[LinkId, float]]:
        return sorted(self._buffers)

    def copy(self) -> "ProfileStore":
        new = ProfileStore(self.window_size)
        for key, buf in self._buffers.items():
            new._buffers[key] = deque(buf, maxlen=self.window_size)
        return new

    def to_dict(self) -> dict:
        return {
            "window_size": self.window_size,
            "buckets": [
                {"link": str(link), "bytes": nbytes, "samples": list(buf), "mean": fmean(buf)}
                for (link, nbytes), buf in sorted(self._buffers.items())
            ],
        }


def plan_buckets(plan) -> list[tuple[LinkId, float]]:
    """(link, payload) pairs a plan sends over, in deterministic order."""
    from .taskgraph import NodeKind

    found = {(n.link, n.payload_bytes) for n in plan.graph.nodes.values() if n.kind is NodeKind.SEND}
    return sorted(found)


def profile_links(
    plan_or_buckets,
    traces: Optional[Mapping[LinkId, LinkTrace]],
    clock: float,
    store: ProfileStore,
    repeats: int = DEFAULT_REPEATS,
) -> float:
    """Measure each (link, payload) bucket ``repeats`` times back to back,
    starting at ``clock``; returns the clock after the last measurement."""
    if repeats < 1:
        raise InvalidConfig("repeats must be >= 1")
    buckets = plan_or_buckets if isinstance(plan_or_buckets, list) else plan_buckets(plan_or_buckets)
    t = to_ticks(clock)
    for link, nbytes in buckets:
        trace = lookup_trace(traces, link)
        for _ in range(repeats):
            d = trace_transfer_ticks(trace, nbytes, t)
            store.record_sample(CommSample(link, nbytes, from_ticks(t), from_ticks(d)))
            t += d
    return from_ticks(t)
