"""Deterministic in-process network double with a virtual clock.

Each directed link has a latency ``L`` and a gap ``g(m) = g0 + 8m / bw``.
Putting an ``m``-byte frame on a link occupies the sender for ``g(m)`` and
the frame lands ``L`` later; frames on one link never overtake each other.
The far end runs the same :class:`~logiclusters.prober.probe.ProbeSession`
as the TCP server.  So a ping-pong costs ``2L + 2g(m)`` and a burst of ``n``
frames closed by END/ACK costs ``n g(m) + 2L + 2g(0)``.

Optional multiplicative jitter, uniform in ``[-j, j]``, is drawn from a
seeded generator for every latency and gap.  Same seed, same timings.
"""

from __future__ import annotations

import heapq
import itertools
import random
import threading
from dataclasses import dataclass

from ..errors import TransportError
from . import wire


@dataclass(frozen=True)
class LinkModel:
    latency_us: float
    gap_base_us: float = 5.0
    bandwidth_bps: float = 1e9

    def gap_us(self, size: int) -> float:
        return self.gap_base_us + size * 8e6 / self.bandwidth_bps


class FakeNetwork:
    def __init__(self, links=None, default: LinkModel | None = None,
                 jitter_fraction: float = 0.02, seed: int = 0, down=()):
        self.links = dict(links or {})
        self.default = default
        self.jitter_fraction = jitter_fraction
        self.rng = random.Random(seed)
        self.down = set(down)
        self.clock_us = 0.0
        self.open_connections = 0
        self.max_open_connections = 0
        self.probed: list[tuple[str, str]] = []
        self._lock = threading.RLock()

    @classmethod
    def from_matrix(cls, matrix, gap_base_us=5.0, bandwidth_bps=1e9, **kwargs):
        """Plant every measured directed entry as a link.

        The matrix latency is taken as the link's one-way ``L``.
        """
        links = {pair: LinkModel(m.latency_us, gap_base_us, bandwidth_bps)
                 for pair, m in matrix.entries.items()}
        return cls(links, **kwargs)

    def link(self, src: str, dst: str) -> LinkModel:
        model = self.links.get((src, dst), self.default)
        if model is None:
            raise TransportError(f"no route from {src} to {dst}")
        return model

    def jitter(self, value: float) -> float:
        j = self.jitter_fraction
        return value * (1 + self.rng.uniform(-j, j)) if j else value

    def transport(self, source: str = "client") -> "FakeTransport":
        return FakeTransport(self, source)

    def probe_from(self, source, target, ladder, config):
        from .probe import probe

        with self._lock:
            self.probed.append((source, target))
            return probe(target, ladder, config, self.transport(source), source=source)


class FakeTransport:
    def __init__(self, network: FakeNetwork, source: str):
        self.network = network
        self.source = source

    def connect(self, target: str, timeout: float = 10.0) -> "FakeConnection":
        net = self.network
        for end in (self.source, target):
            if end in net.down:
                raise TransportError(f"cannot connect to {target}: {end} is down")
        conn = FakeConnection(net, net.link(self.source, target), net.link(target, self.source))
        net.open_connections += 1
        net.max_open_connections = max(net.max_open_connections, net.open_connections)
        return conn

    def now_us(self) -> float:
        return self.network.clock_us

    def probe_from(self, source, target, ladder, config):
        return self.network.probe_from(source, target, ladder, config)


class FakeConnection:
    def __init__(self, network: FakeNetwork, forward: LinkModel, backward: LinkModel):
        from .probe import ProbeSession

        self.net = network
        self.forward = forward
        self.backward = backward
        self.session = ProbeSession()
        self.out_free = 0.0
        self.back_free = 0.0
        self.inbox: list = []
        self._seq = itertools.count()
        self.closed = False

    def send(self, op, payload=b""):
        if self.closed:
            raise TransportError("connection closed")
        op, payload = wire.decode(wire.encode(op, payload))
        net = self.net
        start = max(net.clock_us, self.out_free)
        sent = start + net.jitter(self.forward.gap_us(len(payload)))
        self.out_free = sent
        net.clock_us = sent
        arrival = sent + net.jitter(self.forward.latency_us)
        for reply_op, reply in self.session.handle(op, payload):
            depart = max(arrival, self.back_free)
            self.back_free = depart + net.jitter(self.backward.gap_us(len(reply)))
            landed = self.back_free + net.jitter(self.backward.latency_us)
            heapq.heappush(self.inbox, (landed, next(self._seq), reply_op, reply))

    def recv(self):
        if not self.inbox:
            raise TransportError("timed out waiting for peer")
        landed, _, op, payload = heapq.heappop(self.inbox)
        self.net.clock_us = max(self.net.clock_us, landed)
        return op, payload

    def close(self):
        if not self.closed:
            self.closed = True
            self.net.open_connections -= 1
