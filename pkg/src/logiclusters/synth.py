"""Synthetic distance matrices with planted group structure.

Scenario file grammar::

    {
      "format": "logiclusters/scenario",
      "version": 1,
      "groups": [{"label": <str>, "size": <int >= 1>, "intra_latency_us": <number>}, ...],
      "inter":  [{"a": <label>, "b": <label>, "latency_us": <number>}, ...],
      "jitter_fraction": <number in [0, 0.05]>,
      "seed": <int>
    }

Inter-group latencies are symmetric, so one record per unordered label pair.
Node ids are ``<label><index>`` with a zero-padded index, e.g. ``A0``..``A3``.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field, replace

from . import documents
from .errors import SpecError
from .model import DistanceMatrix, LinkMetric, Partition, Subnet

SCENARIO_FORMAT = "logiclusters/scenario"
MAX_JITTER = 0.05


@dataclass(frozen=True)
class Group:
    label: str
    size: int
    intra_latency_us: float


@dataclass(frozen=True)
class ScenarioSpec:
    groups: tuple[Group, ...]
    inter: dict[frozenset, float] = field(default_factory=dict)
    jitter_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        labels = [g.label for g in self.groups]
        if not labels:
            raise SpecError("scenario has no groups")
        if len(set(labels)) != len(labels):
            raise SpecError("duplicate group labels")
        for g in self.groups:
            if not g.label or any(ch.isspace() for ch in g.label):
                raise SpecError(f"bad group label {g.label!r}")
            if g.size < 1:
                raise SpecError(f"group {g.label} must have at least one node")
            if not g.intra_latency_us > 0:
                raise SpecError(f"group {g.label} intra latency must be positive")
        inter = {frozenset(k): float(v) for k, v in self.inter.items()}
        for key, value in inter.items():
            if len(key) != 2 or not key <= set(labels):
                raise SpecError(f"inter entry {sorted(key)} does not name two known groups")
            if not value > 0:
                raise SpecError(f"inter latency {sorted(key)} must be positive")
        if not 0 <= self.jitter_fraction <= MAX_JITTER:
            raise SpecError(f"jitter_fraction must lie in [0, {MAX_JITTER}]")
        if not -2**63 <= self.seed < 2**64:
            raise SpecError("seed must fit in 64 bits")
        object.__setattr__(self, "inter", inter)

    def inter_latency(self, a: str, b: str) -> float:
        try:
            return self.inter[frozenset((a, b))]
        except KeyError:
            raise SpecError(f"no inter latency for groups {a} and {b}") from None

    def node_names(self, group: Group) -> list[str]:
        width = len(str(max(g.size for g in self.groups) - 1))
        return [f"{group.label}{i:0{width}d}" for i in range(group.size)]


def generate(spec: ScenarioSpec) -> tuple[DistanceMatrix, Partition]:
    """Build a full symmetric matrix and its planted ground-truth partition."""
    for g, h in itertools.combinations(spec.groups, 2):
        spec.inter_latency(g.label, h.label)
    rng = random.Random(spec.seed)
    members = [(g, name) for g in spec.groups for name in spec.node_names(g)]
    label_of = {name: g.label for g, name in members}
    intra = {g.label: g.intra_latency_us for g in spec.groups}
    entries = {}
    group_min = {g.label: math.inf for g in spec.groups}
    j = spec.jitter_fraction
    # pairs enumerated in sorted node order so the draw sequence is fixed
    for a, b in itertools.combinations(sorted(label_of), 2):
        ga, gb = label_of[a], label_of[b]
        base = intra[ga] if ga == gb else spec.inter_latency(ga, gb)
        value = base * (1 + rng.uniform(-j, j)) if j else base
        entries[(a, b)] = entries[(b, a)] = LinkMetric(value)
        if ga == gb:
            group_min[ga] = min(group_min[ga], value)
    matrix = DistanceMatrix(tuple(label_of), entries,
                            meta={"generator": "logiclusters.synth", "seed": spec.seed,
                                  "jitter_fraction": spec.jitter_fraction})
    truth = Partition(tuple(Subnet(tuple(spec.node_names(g)), group_min[g.label])
                            for g in spec.groups))
    return matrix, truth


# Planted constants for a 20-machine, six-subnet layout.  None of these is a
# measured value.  A and D share the faster NIC class; B, C, E, F have the
# slower onboard NIC.  Links touching C or E run 2-3x the links among
# A, B, D, F.  A and D are kept apart by a modest inter latency (70 us vs
# 40 us inside each), which separates them at any tolerance below 1.75.
# Every inter latency exceeds 1.5x the smaller side's intra latency, so
# recovery is exact without jitter for tolerances in [1.0, 1.5].
IDPOT_GROUPS = (
    Group("A", 4, 40.0),
    Group("B", 3, 55.0),
    Group("C", 3, 60.0),
    Group("D", 4, 40.0),
    Group("E", 3, 60.0),
    Group("F", 3, 55.0),
)

IDPOT_INTER = {
    ("A", "B"): 85.0, ("A", "D"): 70.0, ("A", "F"): 90.0,
    ("B", "D"): 85.0, ("B", "F"): 95.0, ("D", "F"): 90.0,
    ("A", "C"): 190.0, ("B", "C"): 200.0, ("C", "D"): 170.0, ("C", "F"): 210.0,
    ("A", "E"): 200.0, ("B", "E"): 220.0, ("D", "E"): 180.0, ("E", "F"): 230.0,
    ("C", "E"): 260.0,
}


def idpot_preset(jitter_fraction: float = 0.02, seed: int = 42) -> ScenarioSpec:
    return ScenarioSpec(IDPOT_GROUPS, {frozenset(k): v for k, v in IDPOT_INTER.items()},
                        jitter_fraction, seed)


def equalize(spec: ScenarioSpec, a: str, b: str) -> ScenarioSpec:
    """Give group ``b`` the intra latency of ``a`` and set their mutual link to match.

    Every other link of ``b`` becomes a copy of the corresponding link of
    ``a``, making the two groups indistinguishable.
    """
    groups = {g.label: g for g in spec.groups}
    if a not in groups or b not in groups:
        raise SpecError(f"unknown group in equalize({a!r}, {b!r})")
    same = groups[a].intra_latency_us
    new_groups = tuple(replace(g, intra_latency_us=same) if g.label == b else g
                       for g in spec.groups)
    inter = dict(spec.inter)
    inter[frozenset((a, b))] = same
    for label in groups:
        if label not in (a, b):
            inter[frozenset((b, label))] = spec.inter_latency(a, label)
    return ScenarioSpec(new_groups, inter, spec.jitter_fraction, spec.seed)


PRESETS = {"idpot": idpot_preset}


def serialize_spec(spec: ScenarioSpec) -> str:
    groups = [{"label": g.label, "size": g.size, "intra_latency_us": g.intra_latency_us}
              for g in spec.groups]
    inter = [{"a": a, "b": b, "latency_us": v}
             for (a, b), v in sorted((tuple(sorted(k)), v) for k, v in spec.inter.items())]
    return documents.dumps(SCENARIO_FORMAT, {
        "groups": groups, "inter": inter,
        "jitter_fraction": spec.jitter_fraction, "seed": spec.seed})


def parse_spec(text: str) -> ScenarioSpec:
    doc = documents.loads(text, SCENARIO_FORMAT)
    groups = []
    for i, rec in enumerate(documents.field(doc, "groups", "$", list)):
        where = f"groups[{i}]"
        groups.append(Group(documents.field(rec, "label", where, str),
                            documents.field(rec, "size", where, int),
                            documents.number(rec, "intra_latency_us", where)))
    inter = {}
    for i, rec in enumerate(documents.field(doc, "inter", "$", list)):
        where = f"inter[{i}]"
        key = frozenset((documents.field(rec, "a", where, str),
                          documents.field(rec, "b", where, str)))
        inter[key] = documents.number(rec, "latency_us", where)
    jitter = documents.number(doc, "jitter_fraction", "$", optional=True) or 0.0
    seed = documents.field(doc, "seed", "$", int, optional=True) or 0
    return ScenarioSpec(tuple(groups), inter, jitter, seed)
