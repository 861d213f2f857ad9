"""Core data types: distance matrices, edges, subnets and partitions.

Distance-matrix file grammar (JSON, see :mod:`logiclusters.documents`)::

    {
      "format": "logiclusters/distance-matrix",
      "version": 1,
      "nodes":   [{"id": <str>, "domain": <str, optional>}, ...],
      "entries": [{"src": <str>, "dst": <str>, "latency_us": <number > 0>,
                   "throughput_bps": <number > 0, optional>}, ...],
      "meta":    {<free-form object>}            (optional)
    }

Nodes are written sorted by id and entries sorted by ``(src, dst)``.  An
absent ``(src, dst)`` entry means the link was never probed; it is never
read as zero.

Partition file grammar::

    {
      "format": "logiclusters/partition",
      "version": 1,
      "tolerance": <number >= 1>,
      "subnets": [{"index": <int>, "subnet_min_edge": <number or "inf">,
                   "members": [<str>, ...]}, ...]
    }
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from . import documents
from .errors import ParseError, ValidationError

MATRIX_FORMAT = "logiclusters/distance-matrix"
PARTITION_FORMAT = "logiclusters/partition"

NodeId = str


def check_node_id(node: object) -> NodeId:
    if not isinstance(node, str) or not node:
        raise ValidationError(f"node id must be a non-empty string, got {node!r}")
    if any(ch.isspace() for ch in node):
        raise ValidationError(f"node id {node!r} contains whitespace")
    return node


@dataclass(frozen=True)
class LinkMetric:
    latency_us: float
    throughput_bps: float | None = None

    def __post_init__(self):
        if not (self.latency_us > 0 and math.isfinite(self.latency_us)):
            raise ValidationError(f"latency must be positive and finite, got {self.latency_us!r}")
        if self.throughput_bps is not None and not (
                self.throughput_bps > 0 and math.isfinite(self.throughput_bps)):
            raise ValidationError(f"throughput must be positive, got {self.throughput_bps!r}")


@dataclass(frozen=True, eq=True)
class DistanceMatrix:
    """Sparse, possibly asymmetric map of directed link measurements.

    ``nodes`` is kept sorted so that equality does not depend on the order
    in which nodes were supplied.
    """

    nodes: tuple[NodeId, ...]
    entries: Mapping[tuple[NodeId, NodeId], LinkMetric]
    domain_tags: Mapping[NodeId, str] = field(default_factory=dict)
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(sorted(check_node_id(n) for n in self.nodes))
        if len(set(nodes)) != len(nodes):
            raise ValidationError("duplicate node ids")
        known = set(nodes)
        entries = {}
        for (src, dst), metric in self.entries.items():
            if src == dst:
                raise ValidationError(f"self-entry {src}->{dst}")
            for end in (src, dst):
                if end not in known:
                    raise ValidationError(f"entry {src}->{dst} references unknown node {end!r}")
            if not isinstance(metric, LinkMetric):
                raise ValidationError(f"entry {src}->{dst} is not a LinkMetric")
            entries[(src, dst)] = metric
        for node in self.domain_tags:
            if node not in known:
                raise ValidationError(f"domain tag for unknown node {node!r}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(entries.items()))))
        object.__setattr__(self, "domain_tags", MappingProxyType(dict(sorted(self.domain_tags.items()))))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return (self.nodes == other.nodes and dict(self.entries) == dict(other.entries)
                and dict(self.domain_tags) == dict(other.domain_tags)
                and dict(self.meta) == dict(other.meta))

    __hash__ = None


@dataclass(frozen=True)
class Edge:
    """Undirected clustering edge; endpoints are stored with ``a < b``."""

    a: NodeId
    b: NodeId
    weight: float

    def __post_init__(self):
        if self.a == self.b:
            raise ValidationError(f"self-loop on {self.a!r}")
        if self.a > self.b:
            lo, hi = self.b, self.a
            object.__setattr__(self, "a", lo)
            object.__setattr__(self, "b", hi)
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ValidationError(f"edge {self.a}-{self.b} has non-positive weight {self.weight!r}")

    @property
    def sort_key(self):
        return (self.weight, self.a, self.b)


@dataclass(frozen=True)
class Subnet:
    members: tuple[NodeId, ...]
    subnet_min_edge: float = math.inf

    def __post_init__(self):
        if not self.members:
            raise ValidationError("empty subnet")
        object.__setattr__(self, "members", tuple(sorted(self.members)))
        if len(self.members) == 1 and not math.isinf(self.subnet_min_edge):
            raise ValidationError(f"singleton subnet {self.members[0]!r} must carry min edge inf")
        if not self.subnet_min_edge > 0:
            raise ValidationError("subnet_min_edge must be positive")

    def __len__(self):
        return len(self.members)

    def __contains__(self, node):
        return node in self.members


@dataclass(frozen=True)
class Partition:
    subnets: tuple[Subnet, ...]
    tolerance: float = 1.20

    def __post_init__(self):
        if not self.tolerance >= 1:
            raise ValidationError(f"tolerance must be >= 1, got {self.tolerance!r}")
        subnets = tuple(sorted(self.subnets, key=lambda s: s.members[0]))
        seen = set()
        for subnet in subnets:
            overlap = seen.intersection(subnet.members)
            if overlap:
                raise ValidationError(f"subnets overlap on {sorted(overlap)}")
            seen.update(subnet.members)
        object.__setattr__(self, "subnets", subnets)

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        return tuple(sorted(n for s in self.subnets for n in s.members))

    def index_of(self, node: NodeId) -> int:
        for i, subnet in enumerate(self.subnets):
            if node in subnet.members:
                return i
        raise KeyError(node)

    def groups(self) -> list[frozenset[NodeId]]:
        return [frozenset(s.members) for s in self.subnets]

    def __len__(self):
        return len(self.subnets)


def symmetrize(matrix: DistanceMatrix) -> list[Edge]:
    """Collapse directed latencies into undirected clustering edges.

    The weight is the mean of the measured directions, or the single
    measured direction as-is.  Unmeasured pairs produce no edge.
    Throughput is ignored.
    """
    by_pair: dict[tuple[NodeId, NodeId], list[float]] = {}
    for (src, dst), metric in matrix.entries.items():
        by_pair.setdefault((min(src, dst), max(src, dst)), []).append(metric.latency_us)
    edges = [Edge(a, b, sum(v) / len(v)) for (a, b), v in by_pair.items()]
    edges.sort(key=lambda e: e.sort_key)
    return edges


# -- distance-matrix files ---------------------------------------------------

def serialize_matrix(matrix: DistanceMatrix) -> str:
    nodes = []
    for node in matrix.nodes:
        record = {"id": node}
        if node in matrix.domain_tags:
            record["domain"] = matrix.domain_tags[node]
        nodes.append(record)
    entries = []
    for (src, dst), metric in sorted(matrix.entries.items()):
        record = {"src": src, "dst": dst, "latency_us": metric.latency_us}
        if metric.throughput_bps is not None:
            record["throughput_bps"] = metric.throughput_bps
        entries.append(record)
    body = {"nodes": nodes, "entries": entries}
    if matrix.meta:
        body["meta"] = dict(sorted(matrix.meta.items()))
    return documents.dumps(MATRIX_FORMAT, body)


def parse_matrix(text: str) -> DistanceMatrix:
    doc = documents.loads(text, MATRIX_FORMAT)
    nodes, tags = [], {}
    for i, rec in enumerate(documents.field(doc, "nodes", "$", list)):
        where = f"nodes[{i}]"
        node = documents.field(rec, "id", where, str)
        _wrap(check_node_id, node, where=f"{where}.id")
        nodes.append(node)
        domain = documents.field(rec, "domain", where, str, optional=True)
        if domain is not None:
            tags[node] = domain
    if len(set(nodes)) != len(nodes):
        raise ValidationError("duplicate node ids in nodes section")
    known = set(nodes)
    entries = {}
    for i, rec in enumerate(documents.field(doc, "entries", "$", list)):
        where = f"entries[{i}]"
        src = documents.field(rec, "src", where, str)
        dst = documents.field(rec, "dst", where, str)
        if src == dst:
            raise ValidationError(f"{where}: self-entry {src}->{dst}")
        for end in (src, dst):
            if end not in known:
                raise ValidationError(f"{where}: entry {src}->{dst} references unknown node {end!r}")
        if (src, dst) in entries:
            raise ValidationError(f"{where}: duplicate entry {src}->{dst}")
        latency = documents.number(rec, "latency_us", where)
        throughput = documents.number(rec, "throughput_bps", where, optional=True)
        try:
            entries[(src, dst)] = LinkMetric(latency, throughput)
        except ValidationError as exc:
            raise ValidationError(f"{where}: entry {src}->{dst}: {exc}") from None
    meta = documents.field(doc, "meta", "$", dict, optional=True) or {}
    return DistanceMatrix(tuple(nodes), entries, tags, meta)


# -- partition files ---------------------------------------------------------

def serialize_partition(partition: Partition) -> str:
    subnets = [
        {"index": i, "subnet_min_edge": documents.encode_float(s.subnet_min_edge),
         "members": list(s.members)}
        for i, s in enumerate(partition.subnets)
    ]
    return documents.dumps(PARTITION_FORMAT, {"tolerance": partition.tolerance, "subnets": subnets})


def parse_partition(text: str) -> Partition:
    doc = documents.loads(text, PARTITION_FORMAT)
    tolerance = documents.number(doc, "tolerance", "$")
    subnets = []
    for i, rec in enumerate(documents.field(doc, "subnets", "$", list)):
        where = f"subnets[{i}]"
        members = documents.field(rec, "members", where, list)
        for j, m in enumerate(members):
            _wrap(check_node_id, m, where=f"{where}.members[{j}]")
        sme = documents.number(rec, "subnet_min_edge", where)
        subnets.append(_wrap(Subnet, tuple(members), sme, where=where))
    partition = _wrap(Partition, tuple(subnets), tolerance, where="$")
    for i, rec in enumerate(doc["subnets"]):
        index = documents.field(rec, "index", f"subnets[{i}]", int)
        if not (0 <= index < len(partition.subnets)) or \
                partition.subnets[index].members != tuple(sorted(rec["members"])):
            raise ParseError("subnet index does not match canonical ordering", f"subnets[{i}].index")
    return partition


def _wrap(fn, *args, where):
    try:
        return fn(*args)
    except ValidationError as exc:
        raise ParseError(str(exc), where) from None
