"""Deterministic discrete-event execution of a schedule plan.

Every device has three streams: compute, send and recv. A compute action
starts once the device is free and its input has arrived; its output is
queued on the device's send stream the moment it finishes. A transfer holds
the producer's send stream and the consumer's recv stream for its whole
duration, so sends leave a device in completion order and each link is FIFO.
Arrived inputs wait in the consumer's buffer queue until the computation
that uses them finishes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import kernel
from .errors import DeadlockDetected
from .model import Direction, LinkId, ModelSpec, PlanConfig, compute_duration, from_ticks, to_ticks
from .network import LinkTrace, lookup_trace
from .planner import SchedulePlan
from .taskgraph import NodeKind

ComputeDurations = Mapping[tuple[int, Direction], float]
Traces = Mapping[LinkId, LinkTrace]


@dataclass
class Program:
    """Flat integer-tick description of one plan execution, consumed by the kernels."""

    num_devices: int
    op_ids: list
    op_device: np.ndarray
    op_dur: np.ndarray
    op_dep: np.ndarray
    op_in: np.ndarray
    dev_op_start: np.ndarray
    dev_op_count: np.ndarray
    x_ids: list
    x_src: np.ndarray
    x_dst: np.ndarray
    x_link: np.ndarray
    x_bytes: np.ndarray
    x_eff: np.ndarray
    x_producer: np.ndarray
    x_consumer: np.ndarray
    send_order: np.ndarray
    dev_send_start: np.ndarray
    dev_send_count: np.ndarray
    links: list
    l_latency: np.ndarray
    l_base: np.ndarray
    l_seg_off: np.ndarray
    l_seg_cnt: np.ndarray
    seg_start: np.ndarray
    seg_end: np.ndarray
    seg_avail: np.ndarray
    offset: int


def _i64(values) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.int64)


def _f64(values) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=np.float64)


def lower(
    plan: SchedulePlan,
    model: ModelSpec,
    traces: Optional[Traces] = None,
    *,
    offset: int = 0,
    compute_durations: Optional[ComputeDurations] = None,
) -> Program:
    graph = plan.graph
    nodes = graph.nodes
    b = plan.config.b
    op_index: dict[str, int] = {}
    op_ids, op_device, op_dur = [], [], []
    dev_op_start, dev_op_count = [], []
    for d, actions in enumerate(plan.per_device):
        dev_op_start.append(len(op_ids))
        dev_op_count.append(len(actions))
        for nid in actions:
            node = nodes[nid]
            op_index[nid] = len(op_ids)
            op_ids.append(nid)
            op_device.append(d)
            if compute_durations is not None:
                dur = compute_durations[(node.stage_id, node.direction)]
            else:
                dur = compute_duration(model.stages[node.stage_id], b, node.direction)
            op_dur.append(to_ticks(dur))

    links = sorted({nodes[n].link for n in nodes if nodes[n].kind is NodeKind.SEND})
    link_index = {link: i for i, link in enumerate(links)}
    link_traces = [lookup_trace(traces, link) for link in links]

    x_index: dict[str, int] = {}
    x_ids, x_src, x_dst, x_link, x_bytes, x_eff, x_producer, x_consumer = [], [], [], [], [], [], [], []
    send_order, dev_send_start, dev_send_count = [], [], []
    op_dep = [-1] * len(op_ids)
    op_in = [-1] * len(op_ids)
    for d, actions in enumerate(plan.per_device):
        dev_send_start.append(len(send_order))
        for nid in actions:
            send = graph.send_output(nid)
            if send is None:
                continue
            recv = graph.successors(send)[0]
            consumer = graph.successors(recv)[0]
            node = nodes[send]
            x = len(x_ids)
            x_index[recv] = x
            x_ids.append((send, recv))
            x_src.append(node.device)
            x_dst.append(nodes[recv].device)
            x_link.append(link_index[node.link])
            x_bytes.append(float(node.payload_bytes))
            x_eff.append(link_traces[link_index[node.link]].efficiency(node.payload_bytes))
            x_producer.append(op_index[nid])
            x_consumer.append(op_index.get(consumer, -1))
            send_order.append(x)
        dev_send_count.append(len(send_order) - dev_send_start[-1])

    for nid, j in op_index.items():
        for pred in graph.predecessors(nid):
            kind = nodes[pred].kind
            if kind is NodeKind.RECV:
                op_in[j] = x_index[pred]
            elif kind in (NodeKind.FORWARD, NodeKind.BACKWARD):
                op_dep[j] = op_index[pred]

    l_latency, l_base, l_seg_off, l_seg_cnt = [], [], [], []
    seg_start, seg_end, seg_avail = [], [], []
    for trace in link_traces:
        starts, ends, avails = trace.tick_segments
        l_latency.append(trace.latency_ticks)
        l_base.append(trace.base_bandwidth)
        l_seg_off.append(len(seg_start))
        l_seg_cnt.append(len(starts))
        seg_start.extend(starts)
        seg_end.extend(ends)
        seg_avail.extend(avails)

    return Program(
        num_devices=plan.num_devices,
        op_ids=op_ids,
        op_device=_i64(op_device),
        op_dur=_i64(op_dur),
        op_dep=_i64(op_dep),
        op_in=_i64(op_in),
        dev_op_start=_i64(dev_op_start),
        dev_op_count=_i64(dev_op_count),
        x_ids=x_ids,
        x_src=_i64(x_src),
        x_dst=_i64(x_dst),
        x_link=_i64(x_link),
        x_bytes=_f64(x_bytes),
        x_eff=_f64(x_eff),
        x_producer=_i64(x_producer),
        x_consumer=_i64(x_consumer),
        send_order=_i64(send_order),
        dev_send_start=_i64(dev_send_start),
        dev_send_count=_i64(dev_send_count),
        links=links,
        l_latency=_i64(l_latency),
        l_base=_f64(l_base),
        l_seg_off=_i64(l_seg_off),
        l_seg_cnt=_i64(l_seg_cnt),
        seg_start=_i64(seg_start),
        seg_end=_i64(seg_end),
        seg_avail=_f64(seg_avail),
        offset=int(offset),
    )


@dataclass(frozen=True)
class TimelineEntry:
    node: str
    device: int
    stream: str
    start: int
    end: int

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "device": self.device,
            "stream": self.stream,
            "start": from_ticks(self.start),
            "end": from_ticks(self.end),
        }


@dataclass(frozen=True)
class LaunchRecord:
    """One compute launch that consumes a cross-stage input."""

    node: str
    launch: float
    compute_free_at: float
    arrival: float
    queue_depth: int

    @property
    def queue_nonempty(self) -> bool:
        # the input was already waiting when the device became ready for it
        return self.arrival < self.compute_free_at

    @property
    def delayed(self) -> bool:
        return self.launch > self.compute_free_at


@dataclass
class SimResult:
    config: PlanConfig
    offset: int
    end: int
    per_device_busy: list[int]
    per_device_span: list[int]
    observed_peak_bytes: list[float]
    timeline: list[TimelineEntry]
    queue_depth_trace: list[list[tuple[int, int]]]
    launches: list[list[tuple[str, int, int, int]]] = field(repr=False)

    @property
    def pipeline_length(self) -> float:
        return from_ticks(self.end - self.offset)

    @property
    def pipeline_length_ticks(self) -> int:
        return self.end - self.offset

    @property
    def per_device_bubble(self) -> list[float]:
        return [from_ticks(span - busy) for span, busy in zip(self.per_device_span, self.per_device_busy)]

    @property
    def throughput(self) -> float:
        return self.config.b * self.config.micro_batches / self.pipeline_length

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "pipeline_length": self.pipeline_length,
            "throughput": self.throughput,
            "per_device_busy": [from_ticks(b) for b in self.per_device_busy],
            "per_device_bubble": self.per_device_bubble,
            "bubble_fraction": bubble_report(self),
            "observed_peak_bytes": self.observed_peak_bytes,
        }

    def timeline_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "pipeline_length": self.pipeline_length,
            "events": [e.to_dict() for e in self.timeline],
        }


def simulate(
    plan: SchedulePlan,
    model: ModelSpec,
    traces: Optional[Traces] = None,
    *,
    start_time: float = 0.0,
    compute_durations: Optional[ComputeDurations] = None,
    backend=None,
) -> SimResult:
    """Run one iteration of ``plan``. ``start_time`` places it on the traces' clock."""
    return simulate_ticks(
        plan, model, traces, offset=to_ticks(start_time), compute_durations=compute_durations, backend=backend
    )


def simulate_ticks(plan, model, traces=None, *, offset=0, compute_durations=None, backend=None) -> SimResult:
    prog = lower(plan, model, traces, offset=offset, compute_durations=compute_durations)
    run = backend or kernel.run
    status, op_start, op_end, x_start, x_end = run(prog)
    op_start, op_end = np.asarray(op_start).tolist(), np.asarray(op_end).tolist()
    x_start, x_end = np.asarray(x_start).tolist(), np.asarray(x_end).tolist()
    if status:
        stuck = [
            f"device {d}: {prog.op_ids[prog.dev_op_start[d] + i]}"
            for d in range(prog.num_devices)
            for i in range(int(prog.dev_op_count[d]))
            if op_start[prog.dev_op_start[d] + i] < 0
        ][: prog.num_devices]
        raise DeadlockDetected(f"{status} actions cannot start; first blocked: {', '.join(stuck)}")
    return _assemble(plan, model, prog, op_start, op_end, x_start, x_end)


def _assemble(plan, model, prog: Program, op_start, op_end, x_start, x_end) -> SimResult:
    nd = prog.num_devices
    offset = prog.offset
    b = plan.config.b
    nodes = plan.graph.nodes
    timeline: list[TimelineEntry] = []
    busy = [0] * nd
    last_end = [offset] * nd
    peaks = []
    for d in range(nd):
        stage = model.stages[d]
        act = stage.activation_bytes_per_sample * b
        live = high = 0
        a = int(prog.dev_op_start[d])
        for j in range(a, a + int(prog.dev_op_count[d])):
            nid = prog.op_ids[j]
            timeline.append(TimelineEntry(nid, d, "compute", op_start[j], op_end[j]))
            busy[d] += op_end[j] - op_start[j]
            last_end[d] = max(last_end[d], op_end[j])
            # compute is serial, so execution order is plan order
            live += 1 if nodes[nid].direction is Direction.FORWARD else -1
            high = max(high, live)
        peaks.append(stage.weight_bytes + high * act)
        # zero-cost gradient accumulation closes the device's iteration
        timeline.append(TimelineEntry(f"ACC@{d}", d, "compute", last_end[d], last_end[d]))

    for x, (send, recv) in enumerate(prog.x_ids):
        timeline.append(TimelineEntry(send, int(prog.x_src[x]), "send", x_start[x], x_end[x]))
        timeline.append(TimelineEntry(recv, int(prog.x_dst[x]), "recv", x_start[x], x_end[x]))
    stream_rank = {"compute": 0, "send": 1, "recv": 2}
    timeline.sort(key=lambda e: (e.start, e.device, stream_rank[e.stream], e.end, e.node))

    # buffer queues: push on arrival, pop when the consuming computation ends
    events: list[list[tuple[int, int]]] = [[] for _ in range(nd)]
    launches: list[list[tuple[str, int, int, int]]] = [[] for _ in range(nd)]
    for x in range(len(prog.x_ids)):
        dst = int(prog.x_dst[x])
        events[dst].append((x_end[x], +1))
        consumer = int(prog.x_consumer[x])
        events[dst].append((op_end[consumer], -1))
    queue_trace = []
    for d in range(nd):
        depth = 0
        trace = [(offset, 0)]
        for t, delta in sorted(events[d], key=lambda e: (e[0], -e[1])):
            depth += delta
            trace.append((t, depth))
        queue_trace.append(trace)

    for d in range(nd):
        a = int(prog.dev_op_start[d])
        free = offset
        for j in range(a, a + int(prog.dev_op_count[d])):
            xin = int(prog.op_in[j])
            if xin >= 0:
                launches[d].append((prog.op_ids[j], op_start[j], free, x_end[xin]))
            free = op_end[j]

    end = max(last_end)
    return SimResult(
        config=plan.config,
        offset=offset,
        end=end,
        per_device_busy=busy,
        per_device_span=[e - offset for e in last_end],
        observed_peak_bytes=peaks,
        timeline=timeline,
        queue_depth_trace=queue_trace,
        launches=launches,
    )


def bubble_report(result: SimResult) -> list[float]:
    """Idle fraction of each device between pipeline start and its last computation."""
    out = []
    for span, busy in zip(result.per_device_span, result.per_device_busy):
        out.append(0.0 if span == 0 else (span - busy) / span)
    return out


def _depth_at(trace: list[tuple[int, int]], t: int) -> int:
    depth = 0
    for when, value in trace:
        if when > t:
            break
        depth = value
    return depth


def queue_analysis(result: SimResult, device: int) -> list[LaunchRecord]:
    """Per launch with a cross-stage input: was that input already buffered
    when the device became free for it?"""
    trace = result.queue_depth_trace[device]
    out = []
    for node, launch, free, arrival in result.launches[device]:
        out.append(
            LaunchRecord(
                node=node,
                launch=from_ticks(launch - result.offset),
                compute_free_at=from_ticks(free - result.offset),
                arrival=from_ticks(arrival - result.offset),
                queue_depth=_depth_at(trace, launch),
            )
        )
    return out


def busy_intervals(result: SimResult, device: int, stream: str) -> list[tuple[int, int]]:
    return [(e.start, e.end) for e in result.timeline if e.device == device and e.stream == stream and e.end > e.start]


def has_compute_send_overlap(result: SimResult, device: int) -> bool:
    """True when some instant has the device computing and sending at once."""
    compute = busy_intervals(result, device, "compute")
    sends = busy_intervals(result, device, "send")
    return any(a < d and c < b for a, b in compute for c, d in sends)
