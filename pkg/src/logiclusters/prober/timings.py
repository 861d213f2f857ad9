"""Raw probe timings and their file format.

Raw-timings grammar::

    {
      "format": "logiclusters/raw-timings",
      "version": 1,
      "src": <str>, "dst": <str>,
      "sizes": [{"size": <int>, "rtt_us": [<number>, ...],
                 "burst_interval_us": <number>}, ...]
    }

``burst_interval_us`` is the steady-state spacing between back-to-back
sends of that size: the burst's total duration, less one smallest-size
round trip, divided by the number of messages in the burst.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

from .. import documents
from ..errors import ParseError, ValidationError

RAW_FORMAT = "logiclusters/raw-timings"


@dataclass(frozen=True)
class RawTimings:
    src: str
    dst: str
    per_size: Mapping[int, tuple[float, ...]]
    burst: Mapping[int, float]

    def __post_init__(self):
        per_size = {}
        for size, rtts in sorted(self.per_size.items()):
            rtts = tuple(float(r) for r in rtts)
            if any(not (r > 0 and math.isfinite(r)) for r in rtts):
                raise ValidationError(f"non-positive round-trip time at size {size}")
            per_size[int(size)] = rtts
        burst = {}
        for size, interval in sorted(self.burst.items()):
            if not (interval >= 0 and math.isfinite(interval)):
                raise ValidationError(f"negative burst interval at size {size}")
            burst[int(size)] = float(interval)
        object.__setattr__(self, "per_size", MappingProxyType(per_size))
        object.__setattr__(self, "burst", MappingProxyType(burst))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(self.per_size)

    def to_json(self) -> dict:
        return {
            "src": self.src, "dst": self.dst,
            "sizes": [{"size": s, "rtt_us": list(self.per_size[s]),
                       "burst_interval_us": self.burst.get(s, 0.0)} for s in self.per_size],
        }

    @classmethod
    def from_json(cls, obj, where="$") -> "RawTimings":
        per_size, burst = {}, {}
        for i, rec in enumerate(documents.field(obj, "sizes", where, list)):
            w = f"{where}.sizes[{i}]"
            size = documents.field(rec, "size", w, int)
            rtts = documents.field(rec, "rtt_us", w, list)
            for j, r in enumerate(rtts):
                if isinstance(r, bool) or not isinstance(r, (int, float)):
                    raise ParseError("expected a number", f"{w}.rtt_us[{j}]")
            per_size[size] = tuple(rtts)
            burst[size] = documents.number(rec, "burst_interval_us", w)
        return cls(documents.field(obj, "src", where, str), documents.field(obj, "dst", where, str),
                   per_size, burst)


def serialize_raw(raw: RawTimings) -> str:
    return documents.dumps(RAW_FORMAT, raw.to_json())


def parse_raw(text: str) -> RawTimings:
    return RawTimings.from_json(documents.loads(text, RAW_FORMAT))


RAW_SET_FORMAT = "logiclusters/raw-timings-set"


def serialize_raw_set(raws: Mapping[str, RawTimings]) -> str:
    """Raw timings of several plan tasks, in the given task order."""
    return documents.dumps(RAW_SET_FORMAT, {
        "timings": [{"task": task, **raw.to_json()} for task, raw in raws.items()]})


def parse_raw_set(text: str) -> dict[str, RawTimings]:
    doc = documents.loads(text, RAW_SET_FORMAT)
    out = {}
    for i, rec in enumerate(documents.field(doc, "timings", "$", list)):
        where = f"timings[{i}]"
        out[documents.field(rec, "task", where, str)] = RawTimings.from_json(rec, where)
    return out
