"""Greedy threshold partitioning of a latency graph into homogeneous subnets.

Edges are scanned cheapest first.  An edge joins the subnets of its two
endpoints unless one of these holds, checked in this order:

1. both endpoints already share a subnet;
2. the edge is more than ``tolerance`` times the cheapest edge incident on
   either endpoint;
3. an endpoint already belongs to a (multi-node) subnet and the edge is
   more than ``tolerance`` times that subnet's cheapest accepted edge.

The comparisons are strict, so an edge sitting exactly on a bound is
accepted.  Ties in weight are broken by ``(smaller endpoint, larger
endpoint)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import documents
from .errors import ValidationError
from .model import Edge, NodeId, Partition, Subnet

TRACE_FORMAT = "logiclusters/merge-trace"

SAME_SUBNET = "same subnet"
NODE_BOUND = "exceeds node min_edge bound"
SUBNET_BOUND = "exceeds subnet min_edge bound"


@dataclass(frozen=True)
class PartitionConfig:
    tolerance: float = 1.20

    def __post_init__(self):
        if not (self.tolerance >= 1 and math.isfinite(self.tolerance)):
            raise ValidationError(f"tolerance must be a finite number >= 1, got {self.tolerance!r}")


@dataclass(frozen=True)
class Decision:
    """One step of the scan.

    On a bound skip, ``endpoint`` is the node whose check failed and ``bound``
    is the unscaled min_edge it was compared against.
    """

    edge: Edge
    accepted: bool
    reason: str | None = None
    endpoint: NodeId | None = None
    bound: float | None = None


class _DisjointSubnets:
    """Union-find keeping the cheapest accepted edge at each representative."""

    def __init__(self, nodes):
        self.parent = {n: n for n in nodes}
        self.size = {n: 1 for n in nodes}
        self.min_edge = {n: math.inf for n in nodes}

    def find(self, node):
        root = node
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[node] != root:
            self.parent[node], node = root, self.parent[node]
        return root

    def in_subnet(self, node):
        return self.size[self.find(node)] > 1

    def subnet_min_edge(self, node):
        return self.min_edge[self.find(node)]

    def merge(self, a, b, weight):
        ra, rb = self.find(a), self.find(b)
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.min_edge[ra] = min(weight, self.min_edge[ra], self.min_edge[rb])

    def subnets(self):
        groups: dict[NodeId, list[NodeId]] = {}
        for node in self.parent:
            groups.setdefault(self.find(node), []).append(node)
        return [Subnet(tuple(members), self.min_edge[root]) for root, members in groups.items()]


def node_min_edges(edges: Iterable[Edge], nodes: Iterable[NodeId]) -> dict[NodeId, float]:
    """Cheapest incident edge per node; isolated nodes get ``inf``."""
    best = {n: math.inf for n in nodes}
    for e in edges:
        best[e.a] = min(best[e.a], e.weight)
        best[e.b] = min(best[e.b], e.weight)
    return best


def _check_edges(edges: Sequence[Edge], nodes: Iterable[NodeId]) -> tuple[list[Edge], list[NodeId]]:
    nodes = sorted(set(nodes))
    known = set(nodes)
    seen = set()
    for e in edges:
        for end in (e.a, e.b):
            if end not in known:
                raise ValidationError(f"edge {e.a}-{e.b} references unknown node {end!r}")
        if (e.a, e.b) in seen:
            raise ValidationError(f"duplicate edge {e.a}-{e.b}")
        seen.add((e.a, e.b))
    return sorted(edges, key=lambda e: e.sort_key), nodes


def _scan(edges, nodes, config):
    ordered, nodes = _check_edges(list(edges), nodes)
    t = config.tolerance
    min_edge = node_min_edges(ordered, nodes)
    state = _DisjointSubnets(nodes)
    trace = []
    for e in ordered:
        a, b, w = e.a, e.b, e.weight
        if state.find(a) == state.find(b):
            trace.append(Decision(e, False, SAME_SUBNET))
            continue
        failed = next((n for n in (a, b) if w > t * min_edge[n]), None)
        if failed is not None:
            trace.append(Decision(e, False, NODE_BOUND, failed, min_edge[failed]))
            continue
        failed = next((n for n in (a, b)
                       if state.in_subnet(n) and w > t * state.subnet_min_edge(n)), None)
        if failed is not None:
            trace.append(Decision(e, False, SUBNET_BOUND, failed, state.subnet_min_edge(failed)))
            continue
        state.merge(a, b, w)
        trace.append(Decision(e, True))
    result = Partition(tuple(state.subnets()), t)
    if result.nodes != tuple(nodes):
        raise AssertionError("partition does not cover the node set")
    return result, trace


def partition(edges: Iterable[Edge], nodes: Iterable[NodeId],
              config: PartitionConfig | None = None) -> Partition:
    """Split ``nodes`` into homogeneous subnets using the weighted ``edges``."""
    return _scan(edges, nodes, config or PartitionConfig())[0]


def explain(result: Partition, edges: Iterable[Edge],
            config: PartitionConfig | None = None) -> list[Decision]:
    """Replay the scan that produced ``result`` and return every decision.

    Raises :class:`ValueError` if ``result`` is not what these inputs yield.
    """
    replayed, trace = _scan(edges, result.nodes, config or PartitionConfig())
    if replayed != result:
        raise ValueError("partition was not produced by these edges and config")
    return trace


def serialize_trace(trace: Sequence[Decision], config: PartitionConfig) -> str:
    records = []
    for step, d in enumerate(trace):
        rec = {"step": step, "a": d.edge.a, "b": d.edge.b, "weight": d.edge.weight,
               "decision": "accept" if d.accepted else "skip"}
        if not d.accepted:
            rec["reason"] = d.reason
            if d.endpoint is not None:
                rec["endpoint"] = d.endpoint
                rec["bound"] = d.bound
        records.append(rec)
    return documents.dumps(TRACE_FORMAT, {"tolerance": config.tolerance, "decisions": records})


def parse_trace(text: str) -> list[Decision]:
    doc = documents.loads(text, TRACE_FORMAT)
    trace = []
    for i, rec in enumerate(documents.field(doc, "decisions", "$", list)):
        where = f"decisions[{i}]"
        edge = Edge(documents.field(rec, "a", where, str), documents.field(rec, "b", where, str),
                    documents.number(rec, "weight", where))
        accepted = documents.field(rec, "decision", where, str) == "accept"
        trace.append(Decision(
            edge, accepted,
            documents.field(rec, "reason", where, str, optional=True),
            documents.field(rec, "endpoint", where, str, optional=True),
            documents.number(rec, "bound", where, optional=True)))
    return trace
