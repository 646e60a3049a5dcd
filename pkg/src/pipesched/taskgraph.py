"""Dependency DAG of per-micro-batch stage computations.

Node ids are short readable strings::

    F3@1        forward of micro-batch 3 on stage 1
    B3@1        backward of micro-batch 3 on stage 1
    SF3@1       send of F3@1's output over 1->2   (owned by device 1)
    RF3@2       matching recv                     (owned by device 2)
    SB3@2/RB3@1 same for the backward direction (2->1)
    ACC@1       gradient accumulation sink of stage 1
"""
from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Optional

from .errors import InvalidConfig
from .model import Direction, LinkId, ModelSpec, PlanConfig, transfer_bytes


class NodeKind(str, Enum):
    FORWARD = "ForwardCompute"
    BACKWARD = "BackwardCompute"
    SEND = "Send"
    RECV = "Recv"
    GRAD_ACCUM = "GradAccum"


COMPUTE_KINDS = (NodeKind.FORWARD, NodeKind.BACKWARD)


@dataclass(frozen=True)
class TaskNode:
    id: str
    kind: NodeKind
    stage_id: int
    device: int
    micro_batch: Optional[int] = None
    link: Optional[LinkId] = None
    payload_bytes: float = 0.0
    direction: Optional[Direction] = None

    @property
    def is_compute(self) -> bool:
        return self.kind in COMPUTE_KINDS

    def to_dict(self) -> dict:
        out = {"id": self.id, "kind": self.kind.value, "stage": self.stage_id, "device": self.device}
        if self.micro_batch is not None:
            out["micro_batch"] = self.micro_batch
        if self.link is not None:
            out["link"] = str(self.link)
            out["payload_bytes"] = self.payload_bytes
        return out


def fwd_id(stage: int, mb: int) -> str:
    return f"F{mb}@{stage}"


def bwd_id(stage: int, mb: int) -> str:
    return f"B{mb}@{stage}"


def acc_id(stage: int) -> str:
    return f"ACC@{stage}"


@dataclass(frozen=True)
class TaskGraph:
    nodes: dict[str, TaskNode]
    edges: frozenset[tuple[str, str]]
    config: PlanConfig
    num_stages: int

    def __post_init__(self) -> None:
        preds: dict[str, list[str]] = defaultdict(list)
        succs: dict[str, list[str]] = defaultdict(list)
        for u, v in sorted(self.edges):
            succs[u].append(v)
            preds[v].append(u)
        object.__setattr__(self, "_preds", dict(preds))
        object.__setattr__(self, "_succs", dict(succs))

    def predecessors(self, node_id: str) -> list[str]:
        return self._preds.get(node_id, [])

    def successors(self, node_id: str) -> list[str]:
        return self._succs.get(node_id, [])

    def count(self, kind: NodeKind) -> int:
        return sum(1 for n in self.nodes.values() if n.kind is kind)

    def recv_input(self, node_id: str) -> Optional[str]:
        """The Recv node feeding a compute node, if any."""
        for p in self.predecessors(node_id):
            if self.nodes[p].kind is NodeKind.RECV:
                return p
        return None

    def send_output(self, node_id: str) -> Optional[str]:
        for s in self.successors(node_id):
            if self.nodes[s].kind is NodeKind.SEND:
                return s
        return None

    def without_node(self, node_id: str) -> "TaskGraph":
        nodes = {k: v for k, v in self.nodes.items() if k != node_id}
        edges = frozenset(e for e in self.edges if node_id not in e)
        return dataclasses.replace(self, nodes=nodes, edges=edges)

    def with_edge(self, u: str, v: str) -> "TaskGraph":
        return dataclasses.replace(self, edges=self.edges | {(u, v)})

    def topological_order(self) -> list[str]:
        ts = TopologicalSorter({n: self.predecessors(n) for n in sorted(self.nodes)})
        return list(ts.static_order())

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config.to_dict(),
            "num_stages": self.num_stages,
            "nodes": [self.nodes[k].to_dict() for k in sorted(self.nodes)],
            "edges": [list(e) for e in sorted(self.edges)],
        }


def build_task_graph(model: ModelSpec, config: PlanConfig) -> TaskGraph:
    if model.global_batch % config.b or model.global_batch // config.b != config.micro_batches:
        raise InvalidConfig(
            f"plan config b={config.b}, M={config.micro_batches} does not partition global batch {model.global_batch}"
        )
    S, M, b = model.num_stages, config.micro_batches, config.b
    nodes: dict[str, TaskNode] = {}
    edges: set[tuple[str, str]] = set()

    def add(node: TaskNode) -> str:
        nodes[node.id] = node
        return node.id

    def add_transfer(src_node: str, dst_node: str, src: int, dst: int, mb: int, direction: Direction) -> None:
        link = LinkId(src, dst)
        payload = transfer_bytes(model.stages[src], b, direction)
        tag = direction.value
        send = add(TaskNode(f"S{tag}{mb}@{src}", NodeKind.SEND, src, src, mb, link, payload, direction))
        recv = add(TaskNode(f"R{tag}{mb}@{dst}", NodeKind.RECV, dst, dst, mb, link, payload, direction))
        edges.update({(src_node, send), (send, recv), (recv, dst_node)})

    for s in range(S):
        acc = add(TaskNode(acc_id(s), NodeKind.GRAD_ACCUM, s, s))
        for m in range(M):
            f = add(TaskNode(fwd_id(s, m), NodeKind.FORWARD, s, s, m, direction=Direction.FORWARD))
            bw = add(TaskNode(bwd_id(s, m), NodeKind.BACKWARD, s, s, m, direction=Direction.BACKWARD))
            # backward consumes the stage's own forward activations
            edges.add((f, bw))
            edges.add((bw, acc))
    for m in range(M):
        for s in range(S - 1):
            add_transfer(fwd_id(s, m), fwd_id(s + 1, m), s, s + 1, m, Direction.FORWARD)
            add_transfer(bwd_id(s + 1, m), bwd_id(s, m), s + 1, s, m, Direction.BACKWARD)
    return TaskGraph(nodes, frozenset(edges), config, S)


@dataclass(frozen=True)
class Violation:
    kind: str
    node: Optional[str] = None
    detail: str = ""

    def __str__(self) -> str:
        where = f" at {self.node}" if self.node else ""
        return f"{self.kind}{where}: {self.detail}" if self.detail else f"{self.kind}{where}"


def validate(graph: TaskGraph) -> list[Violation]:
    """Check every structural invariant; returns an empty list for a sound graph."""
    out: list[Violation] = []
    nodes = graph.nodes
    S = graph.num_stages
    for u, v in sorted(graph.edges):
        if u not in nodes or v not in nodes:
            out.append(Violation("DanglingEdge", u if u not in nodes else v, f"{u} -> {v}"))
    try:
        TopologicalSorter({n: [p for p in graph.predecessors(n) if p in nodes] for n in nodes}).prepare()
    except CycleError as exc:
        cycle = exc.args[1] if len(exc.args) > 1 else []
        out.append(Violation("CycleDetected", cycle[0] if cycle else None, " -> ".join(cycle)))

    for nid in sorted(nodes):
        node = nodes[nid]
        if node.kind is NodeKind.SEND:
            recvs = [v for v in graph.successors(nid) if v in nodes and nodes[v].kind is NodeKind.RECV]
            if len(recvs) != 1:
                out.append(Violation("UnpairedSend", nid))
            elif nodes[recvs[0]].link != node.link or nodes[recvs[0]].payload_bytes != node.payload_bytes:
                out.append(Violation("PairMismatch", nid, f"paired with {recvs[0]}"))
        elif node.kind is NodeKind.RECV:
            sends = [u for u in graph.predecessors(nid) if u in nodes and nodes[u].kind is NodeKind.SEND]
            if len(sends) != 1:
                out.append(Violation("UnpairedRecv", nid))
        elif node.is_compute:
            if not 0 <= node.stage_id < S:
                out.append(Violation("InvalidStage", nid))
                continue
            recvs = [u for u in graph.predecessors(nid) if u in nodes and nodes[u].kind is NodeKind.RECV]
            needs_recv = node.stage_id > 0 if node.kind is NodeKind.FORWARD else node.stage_id < S - 1
            if needs_recv and len(recvs) != 1:
                out.append(Violation("MissingRecvPredecessor", nid, f"{len(recvs)} recv inputs"))
            elif not needs_recv and recvs:
                out.append(Violation("UnexpectedRecvPredecessor", nid))
            if node.kind is NodeKind.BACKWARD and node.stage_id == S - 1:
                if fwd_id(node.stage_id, node.micro_batch) not in graph.predecessors(nid):
                    out.append(Violation("MissingForwardPredecessor", nid))
        elif node.kind is NodeKind.GRAD_ACCUM:
            expected = {bwd_id(node.stage_id, m) for m in range(graph.config.micro_batches)}
            missing = expected - set(graph.predecessors(nid))
            if missing:
                out.append(Violation("GradAccumIncomplete", nid, f"{len(missing)} backward inputs missing"))
    return out


def compute_nodes(graph: TaskGraph, device: int) -> Iterable[TaskNode]:
    return (n for n in graph.nodes.values() if n.is_compute and n.device == device)
