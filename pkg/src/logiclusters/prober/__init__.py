"""Active network measurement over a pluggable stream transport."""

from .fake import FakeNetwork, LinkModel
from .probe import (ProbeConfig, ProbeServer, ProbeSession, execute_plan, measure_matrix,
                    probe, serve)
from .timings import RawTimings, parse_raw, serialize_raw
from .transport import TcpTransport

__all__ = [
    "FakeNetwork", "LinkModel", "ProbeConfig", "ProbeServer", "ProbeSession", "RawTimings",
    "TcpTransport", "execute_plan", "measure_matrix", "parse_raw", "probe", "serialize_raw",
    "serve",
]
