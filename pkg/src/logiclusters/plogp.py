"""pLogP measurement planning, parameter estimation and extrapolation.

A link is described by its latency ``L`` and a size-dependent gap ``g(m)``.
We read a ping-pong round trip of an ``m``-byte message echoed back at the
same size as::

    RTT(m) = 2 L + g(m) + g(ack),    with g(ack) = g(m0)

so that ``L = (RTT(m0) - 2 g(m0)) / 2`` for the smallest ladder size
``m0``.  ``g(m)`` comes from the saturation burst at each size.  This
decomposition is one consistent reading of the model; sender and receiver
overheads are not separated out.

Because subnets are homogeneous, one measurement per subnet and one per
subnet pair stand for all the links they cover; see
:func:`plan_measurements` and :func:`extrapolate`.

Plan file grammar::

    {"format": "logiclusters/plan", "version": 1, "symmetric": <bool>,
     "subnet_count": <int>,
     "tasks": [{"id": "intra:<i>" | "inter:<i>:<j>", "kind": "intra"|"inter",
                "subnets": [<int>, ...], "src": <str>, "dst": <str>}, ...]}

Results file grammar::

    {"format": "logiclusters/results", "version": 1,
     "results": [{"task": <task id>, "params": <params>}, ...]}

where ``<params>`` is ``{"latency_us": <number>, "gap": [{"size", "gap_us",
"rtt_us", "samples"}, ...], "violation": <str, optional>}``.  The parameter
map export (``logiclusters/param-map``) holds one record per directed
(subnet, subnet) block.
"""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from . import documents
from .errors import CompletenessError, EstimationError, ParseError, ValidationError
from .model import NodeId, Partition
from .prober.timings import RawTimings

PLAN_FORMAT = "logiclusters/plan"
RESULTS_FORMAT = "logiclusters/results"
PARAM_MAP_FORMAT = "logiclusters/param-map"

MIN_SAMPLES = 5


@dataclass(frozen=True)
class MessageSizeLadder:
    sizes: tuple[int, ...] = tuple(2 ** k for k in range(21))

    def __post_init__(self):
        sizes = tuple(self.sizes)
        if not sizes:
            raise ValidationError("empty message-size ladder")
        if any(isinstance(s, bool) or not isinstance(s, int) for s in sizes):
            raise ValidationError("ladder sizes must be integers")
        if sizes[0] < 1:
            raise ValidationError("ladder sizes must be at least 1 byte")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError(f"ladder must be strictly increasing: {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def parse(cls, text: str) -> "MessageSizeLadder":
        """Accept ``"1,8,64"`` or ``"pow2:<lo>:<hi>"`` (inclusive powers of two)."""
        text = text.strip()
        try:
            if text.startswith("pow2:"):
                lo, hi = (int(x) for x in text[5:].split(":"))
                if lo < 1 or lo & (lo - 1) or hi & (hi - 1):
                    raise ValidationError(f"pow2 bounds must be powers of two: {text!r}")
                return cls(tuple(2 ** k for k in range(lo.bit_length() - 1, hi.bit_length())))
            return cls(tuple(int(x) for x in text.split(",")))
        except ValueError:
            raise ValidationError(f"cannot parse message-size ladder {text!r}") from None

    def __str__(self):
        return ",".join(str(s) for s in self.sizes)

    @property
    def smallest(self) -> int:
        return self.sizes[0]

    @property
    def largest(self) -> int:
        return self.sizes[-1]


@dataclass(frozen=True)
class PLogPParams:
    latency_us: float
    gap_us_by_size: Mapping[int, float]
    samples: Mapping[int, int] = field(default_factory=dict)
    rtt_us_by_size: Mapping[int, float] = field(default_factory=dict)
    # set when the timings contradict the model; latency_us is then the raw value
    violation: str | None = None

    def __post_init__(self):
        for name in ("gap_us_by_size", "samples", "rtt_us_by_size"):
            object.__setattr__(self, name, MappingProxyType(dict(sorted(getattr(self, name).items()))))

    @property
    def ok(self) -> bool:
        return self.violation is None

    def __eq__(self, other):
        if not isinstance(other, PLogPParams):
            return NotImplemented
        return (self.latency_us == other.latency_us and self.violation == other.violation
                and dict(self.gap_us_by_size) == dict(other.gap_us_by_size)
                and dict(self.samples) == dict(other.samples)
                and dict(self.rtt_us_by_size) == dict(other.rtt_us_by_size))

    __hash__ = None

    def to_json(self) -> dict:
        body = {"latency_us": self.latency_us, "gap": [
            {"size": s, "gap_us": g, "rtt_us": self.rtt_us_by_size.get(s),
             "samples": self.samples.get(s, 0)}
            for s, g in self.gap_us_by_size.items()]}
        if self.violation:
            body["violation"] = self.violation
        return body

    @classmethod
    def from_json(cls, obj, where) -> "PLogPParams":
        gaps, rtts, samples = {}, {}, {}
        for i, rec in enumerate(documents.field(obj, "gap", where, list)):
            w = f"{where}.gap[{i}]"
            size = documents.field(rec, "size", w, int)
            gaps[size] = documents.number(rec, "gap_us", w)
            rtt = documents.number(rec, "rtt_us", w, optional=True)
            if rtt is not None:
                rtts[size] = rtt
            samples[size] = documents.field(rec, "samples", w, int)
        return cls(documents.number(obj, "latency_us", where), gaps, samples, rtts,
                   documents.field(obj, "violation", where, str, optional=True))


# -- planning ----------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementTask:
    kind: str
    subnets: tuple[int, ...]
    src: NodeId
    dst: NodeId

    @property
    def id(self) -> str:
        return ":".join([self.kind, *map(str, self.subnets)])


@dataclass(frozen=True)
class MeasurementPlan:
    tasks: tuple[MeasurementTask, ...]
    symmetric: bool
    subnet_count: int

    def __len__(self):
        return len(self.tasks)

    @property
    def upper_bound(self) -> int:
        c = self.subnet_count
        return c * (c + 1) // 2 if self.symmetric else c * (c + 1)

    def task(self, task_id: str) -> MeasurementTask:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)


def plan_measurements(partition: Partition, symmetric: bool = True) -> MeasurementPlan:
    """One intra task per multi-node subnet plus one task per subnet pair.

    Pairs are unordered when ``symmetric`` and ordered otherwise.  The
    result never exceeds ``C(C+1)/2`` (symmetric) or ``C(C+1)`` tasks.
    """
    tasks = []
    subnets = partition.subnets
    for i, s in enumerate(subnets):
        if len(s.members) >= 2:
            tasks.append(MeasurementTask("intra", (i,), s.members[0], s.members[1]))
    pairs = (itertools.combinations(range(len(subnets)), 2) if symmetric
             else itertools.permutations(range(len(subnets)), 2))
    for i, j in pairs:
        tasks.append(MeasurementTask("inter", (i, j), subnets[i].members[0], subnets[j].members[0]))
    return MeasurementPlan(tuple(tasks), symmetric, len(subnets))


# -- estimation --------------------------------------------------------------

def monotonize(values: Mapping[int, float]) -> dict[int, float]:
    """Running maximum in increasing key order."""
    out, peak = {}, -math.inf
    for key in sorted(values):
        peak = max(peak, values[key])
        out[key] = peak
    return out


def estimate_params(raw: RawTimings, ladder: MessageSizeLadder | None = None) -> PLogPParams:
    """Estimate latency and gap curve from one pair's raw timings.

    The round-trip estimate per size is the median of its samples.  The gap
    at each size is the burst interval, smoothed into a nondecreasing curve.
    A non-positive latency is reported through ``violation`` rather than
    clamped.
    """
    ladder = ladder or MessageSizeLadder(raw.sizes)
    rtt, samples, gaps = {}, {}, {}
    for size in ladder.sizes:
        values = raw.per_size.get(size, ())
        if len(values) < MIN_SAMPLES:
            raise EstimationError(
                f"insufficient samples at {size} B: {len(values)} < {MIN_SAMPLES}")
        if size not in raw.burst:
            raise EstimationError(f"no burst measurement at {size} B")
        rtt[size] = statistics.median(values)
        samples[size] = len(values)
        gaps[size] = raw.burst[size]
    gaps = monotonize(gaps)
    m0 = ladder.smallest
    latency = (rtt[m0] - 2 * gaps[m0]) / 2
    violation = None
    if not latency > 0:
        violation = (f"non-positive latency: RTT({m0})={rtt[m0]!r} us, "
                     f"g({m0})={gaps[m0]!r} us")
    return PLogPParams(latency, gaps, samples, rtt, violation)


# -- extrapolation -----------------------------------------------------------

@dataclass(frozen=True)
class ParamBlock:
    src_subnet: int
    dst_subnet: int
    task_id: str
    params: PLogPParams
    pairs: tuple[tuple[NodeId, NodeId], ...]


@dataclass(frozen=True)
class LinkParamMap:
    blocks: tuple[ParamBlock, ...]
    excluded: tuple[tuple[NodeId, NodeId], ...] = ()

    def __post_init__(self):
        index = {}
        for block in self.blocks:
            for pair in block.pairs:
                index[pair] = block
        object.__setattr__(self, "_index", index)

    def __getitem__(self, pair: tuple[NodeId, NodeId]) -> PLogPParams:
        return self._index[pair].params

    def __contains__(self, pair):
        return pair in self._index

    def __len__(self):
        return len(self._index)

    def pairs(self):
        return self._index.keys()

    def block_of(self, pair) -> ParamBlock:
        return self._index[pair]


def _task_for_block(plan: MeasurementPlan, i: int, j: int) -> str:
    if i == j:
        return f"intra:{i}"
    if plan.symmetric:
        return f"inter:{min(i, j)}:{max(i, j)}"
    return f"inter:{i}:{j}"


def extrapolate(plan: MeasurementPlan, results: Mapping[str, PLogPParams], partition: Partition,
                machine_of: Mapping[NodeId, str] | None = None) -> LinkParamMap:
    """Spread each task's parameters over every directed pair it represents.

    Pairs of nodes that ``machine_of`` maps to the same machine are left
    out; those are handled at machine level.
    """
    if plan.subnet_count != len(partition.subnets):
        raise ValidationError(
            f"plan covers {plan.subnet_count} subnets, partition has {len(partition.subnets)}")
    for task in plan.tasks:
        if task.id not in results:
            raise CompletenessError(task.id)
    machine_of = machine_of or {}
    blocks, excluded = [], []
    subnets = partition.subnets
    for i, j in itertools.product(range(len(subnets)), repeat=2):
        pairs = []
        for a in subnets[i].members:
            for b in subnets[j].members:
                if a == b:
                    continue
                if a in machine_of and machine_of.get(a) == machine_of.get(b):
                    excluded.append((a, b))
                    continue
                pairs.append((a, b))
        if not pairs:
            continue
        task_id = _task_for_block(plan, i, j)
        if task_id not in results:
            raise CompletenessError(task_id)
        blocks.append(ParamBlock(i, j, task_id, results[task_id], tuple(pairs)))
    return LinkParamMap(tuple(blocks), tuple(excluded))


# -- files -------------------------------------------------------------------

def serialize_plan(plan: MeasurementPlan) -> str:
    tasks = [{"id": t.id, "kind": t.kind, "subnets": list(t.subnets), "src": t.src, "dst": t.dst}
             for t in plan.tasks]
    return documents.dumps(PLAN_FORMAT, {"symmetric": plan.symmetric,
                                         "subnet_count": plan.subnet_count, "tasks": tasks})


def parse_plan(text: str) -> MeasurementPlan:
    doc = documents.loads(text, PLAN_FORMAT)
    tasks = []
    for i, rec in enumerate(documents.field(doc, "tasks", "$", list)):
        where = f"tasks[{i}]"
        kind = documents.field(rec, "kind", where, str)
        subnets = tuple(documents.field(rec, "subnets", where, list))
        if kind not in ("intra", "inter") or len(subnets) != (1 if kind == "intra" else 2):
            raise ParseError(f"bad task kind/subnets {kind!r} {list(subnets)}", where)
        task = MeasurementTask(kind, subnets, documents.field(rec, "src", where, str),
                               documents.field(rec, "dst", where, str))
        if documents.field(rec, "id", where, str) != task.id:
            raise ParseError("task id does not match kind and subnets", f"{where}.id")
        tasks.append(task)
    return MeasurementPlan(tuple(tasks), documents.field(doc, "symmetric", "$", bool),
                           documents.field(doc, "subnet_count", "$", int))


def _result_order(task_id: str):
    kind, *idx = task_id.split(":")
    return (kind != "intra", tuple(int(i) for i in idx))


def serialize_results(results: Mapping[str, PLogPParams]) -> str:
    records = [{"task": tid, "params": results[tid].to_json()}
               for tid in sorted(results, key=_result_order)]
    return documents.dumps(RESULTS_FORMAT, {"results": records})


def parse_results(text: str) -> dict[str, PLogPParams]:
    doc = documents.loads(text, RESULTS_FORMAT)
    out = {}
    for i, rec in enumerate(documents.field(doc, "results", "$", list)):
        where = f"results[{i}]"
        out[documents.field(rec, "task", where, str)] = PLogPParams.from_json(
            documents.field(rec, "params", where, dict), f"{where}.params")
    return out


def serialize_param_map(pmap: LinkParamMap) -> str:
    blocks = [{"src_subnet": b.src_subnet, "dst_subnet": b.dst_subnet, "task": b.task_id,
               "pair_count": len(b.pairs), "params": b.params.to_json()}
              for b in pmap.blocks]
    body = {"blocks": blocks}
    if pmap.excluded:
        body["excluded_pairs"] = [list(p) for p in pmap.excluded]
    return documents.dumps(PARAM_MAP_FORMAT, body)


def parse_param_map_blocks(text: str) -> list[tuple[int, int, str, PLogPParams]]:
    """Read back the block records of a parameter-map export."""
    doc = documents.loads(text, PARAM_MAP_FORMAT)
    out = []
    for i, rec in enumerate(documents.field(doc, "blocks", "$", list)):
        where = f"blocks[{i}]"
        out.append((documents.field(rec, "src_subnet", where, int),
                    documents.field(rec, "dst_subnet", where, int),
                    documents.field(rec, "task", where, str),
                    PLogPParams.from_json(documents.field(rec, "params", where, dict),
                                          f"{where}.params")))
    return out
