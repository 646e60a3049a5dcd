"""GPipe, 1F1B and kFkB schedule plans.

A kFkB plan is 1F1B lifted to groups of ``k`` consecutive micro-batches: the
device of stage ``s`` runs ``S - s`` forward groups as warm-up, then
alternates one backward group with one forward group, then drains the
remaining backward groups. Inside a group micro-batches run in ascending
order. ``k = 1`` is plain 1F1B and ``k = M`` is GPipe.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .errors import InvalidConfig
from .model import Direction, PlanConfig
from .taskgraph import TaskGraph, Violation, build_task_graph, bwd_id, fwd_id

# (direction, micro_batch) per slot, per stage
UnitOrder = tuple[tuple[tuple[Direction, int], ...], ...]


def groups_of(M: int, k: int) -> list[range]:
    return [range(start, min(start + k, M)) for start in range(0, M, k)]


@lru_cache(maxsize=4096)
def kfkb_order(S: int, M: int, k: int) -> UnitOrder:
    """Per-stage compute order for ``S`` stages, ``M`` micro-batches, group size ``k``."""
    if not 1 <= k <= M:
        raise InvalidConfig(f"k must satisfy 1 <= k <= M={M}, got {k}")
    groups = groups_of(M, k)
    G = len(groups)
    per_stage = []
    for s in range(S):
        warmup = min(S - s, G)
        seq: list[tuple[Direction, int]] = []
        for g in range(warmup):
            seq.extend((Direction.FORWARD, m) for m in groups[g])
        for g in range(G):
            seq.extend((Direction.BACKWARD, m) for m in groups[g])
            if g + warmup < G:
                seq.extend((Direction.FORWARD, m) for m in groups[g + warmup])
        per_stage.append(tuple(seq))
    return tuple(per_stage)


@dataclass(frozen=True)
class SchedulePlan:
    config: PlanConfig
    graph: TaskGraph
    per_device: tuple[tuple[str, ...], ...]
    schedule_units: tuple[tuple[tuple[str, ...], ...], ...]
    name: str = "kfkb"

    @property
    def num_devices(self) -> int:
        return len(self.per_device)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "name": self.name,
            "config": self.config.to_dict(),
            "devices": [
                {"device": d, "actions": list(actions), "units": [list(u) for u in self.schedule_units[d]]}
                for d, actions in enumerate(self.per_device)
            ],
        }


def order_1f1b(S: int, M: int) -> UnitOrder:
    """Per-micro-batch early backward: S - s warm-up forwards, then one backward
    per forward, then drain."""
    per_stage = []
    for s in range(S):
        warmup = min(S - s, M)
        seq = [(Direction.FORWARD, m) for m in range(warmup)]
        for m in range(M):
            seq.append((Direction.BACKWARD, m))
            if m + warmup < M:
                seq.append((Direction.FORWARD, m + warmup))
        per_stage.append(tuple(seq))
    return tuple(per_stage)


def order_gpipe(S: int, M: int) -> UnitOrder:
    seq = tuple((Direction.FORWARD, m) for m in range(M)) + tuple((Direction.BACKWARD, m) for m in range(M))
    return (seq,) * S


def _plan_from_order(graph: TaskGraph, k: int, name: str, order: Optional[UnitOrder] = None) -> SchedulePlan:
    S, M = graph.num_stages, graph.config.micro_batches
    if order is None:
        order = kfkb_order(S, M, k)
    per_device = []
    units = []
    for s, seq in enumerate(order):
        ids = tuple(fwd_id(s, m) if d is Direction.FORWARD else bwd_id(s, m) for d, m in seq)
        per_device.append(ids)
        dev_units: list[tuple[str, ...]] = []
        i = 0
        for group in _unit_lengths(seq, k):
            dev_units.append(ids[i : i + group])
            i += group
        units.append(tuple(dev_units))
    config = PlanConfig(k, graph.config.b, M)
    return SchedulePlan(config, graph, tuple(per_device), tuple(units), name)


def _unit_lengths(seq, k):
    """Split a per-device sequence into runs of same direction, each at most k long."""
    out = []
    run_dir, run_len = None, 0
    for direction, _ in seq:
        if direction is run_dir and run_len < k:
            run_len += 1
            continue
        if run_len:
            out.append(run_len)
        run_dir, run_len = direction, 1
    if run_len:
        out.append(run_len)
    return out


def plan_kfkb(graph: TaskGraph, k: int) -> SchedulePlan:
    M = graph.config.micro_batches
    if not 1 <= k <= M:
        raise InvalidConfig(f"k must satisfy 1 <= k <= M={M}, got {k}")
    return _plan_from_order(graph, k, "1f1b" if k == 1 else "gpipe" if k == M else f"{k}f{k}b")


def plan_1f1b(graph: TaskGraph) -> SchedulePlan:
    return _plan_from_order(graph, 1, "1f1b", order_1f1b(graph.num_stages, graph.config.micro_batches))


def plan_gpipe(graph: TaskGraph) -> SchedulePlan:
    S, M = graph.num_stages, graph.config.micro_batches
    return _plan_from_order(graph, M, "gpipe", order_gpipe(S, M))


def plan_by_name(graph: TaskGraph, selector: str, k: Optional[int] = None) -> SchedulePlan:
    if selector == "gpipe":
        return plan_gpipe(graph)
    if selector == "1f1b":
        return plan_1f1b(graph)
    if selector == "kfkb":
        return plan_kfkb(graph, graph.config.k if k is None else k)
    raise InvalidConfig(f"unknown plan selector {selector!r}")


def validate_plan(plan: SchedulePlan) -> list[Violation]:
    """Linear-extension, coverage and send/recv pairing checks."""
    graph = plan.graph
    out: list[Violation] = []
    position: dict[str, tuple[int, int]] = {}
    for d, actions in enumerate(plan.per_device):
        for i, nid in enumerate(actions):
            node = graph.nodes.get(nid)
            if node is None or not node.is_compute:
                out.append(Violation("NotAComputeNode", nid))
            elif node.device != d:
                out.append(Violation("WrongDevice", nid, f"scheduled on {d}, owned by {node.device}"))
            if nid in position:
                out.append(Violation("DuplicateAction", nid))
            position[nid] = (d, i)
    for nid, node in graph.nodes.items():
        if node.is_compute and nid not in position:
            out.append(Violation("MissingAction", nid))
    if out:
        return out

    # reachability between compute nodes, propagated in reverse topological order
    topo = graph.topological_order()
    reach: dict[str, int] = {}
    bit = {nid: 1 << i for i, nid in enumerate(sorted(position))}
    for nid in reversed(topo):
        mask = 0
        for succ in graph.successors(nid):
            mask |= reach[succ] | bit.get(succ, 0)
        reach[nid] = mask
    for d, actions in enumerate(plan.per_device):
        seen = 0
        for nid in actions:
            if reach[nid] & seen:
                out.append(Violation("NotLinearExtension", nid, f"device {d} runs it after one of its dependents"))
            seen |= bit[nid]

    # pairing: sends leave a link in producer order, recvs drain it in consumer order
    send_order: dict = {}
    recv_order: dict = {}
    for d, actions in enumerate(plan.per_device):
        for nid in actions:
            send = graph.send_output(nid)
            if send is not None:
                node = graph.nodes[send]
                send_order.setdefault(node.link, []).append(node.micro_batch)
            recv = graph.recv_input(nid)
            if recv is not None:
                node = graph.nodes[recv]
                recv_order.setdefault(node.link, []).append(node.micro_batch)
    for link in sorted(set(send_order) | set(recv_order)):
        if send_order.get(link) != recv_order.get(link):
            out.append(Violation("PairingMismatch", None, f"link {link}"))
    return out


def format_order(plan: SchedulePlan, device: int) -> str:
    """Compact ``F0 F1 B0 ...`` rendering of one device's sequence."""
    return " ".join(nid.split("@")[0] for nid in plan.per_device[device])


@lru_cache(maxsize=256)
def plan_for(model, config: PlanConfig) -> SchedulePlan:
    """Cached task graph + kFkB plan for a (model, config) pair."""
    return plan_kfkb(build_task_graph(model, config), config.k)
