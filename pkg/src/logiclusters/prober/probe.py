"""Active probing: echo server, ping-pong and burst timing, matrix builds.

For every ladder size :func:`probe` runs ``warmup`` discarded ping-pongs,
then ``rounds`` timed ones, then a burst of ``burst_length`` back-to-back
BURST_DATA frames closed by BURST_END/BURST_ACK.  The burst interval is the
burst duration minus the median smallest-size round trip, over the number
of frames.
"""

from __future__ import annotations

import contextlib
import itertools
import json
import logging
import socket
import socketserver
import statistics
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Mapping

from ..errors import LogiclustersError, ProtocolError, TransportError, ValidationError
from ..model import DistanceMatrix, LinkMetric
from ..plogp import MeasurementPlan, MessageSizeLadder
from . import wire
from .timings import RawTimings
from .transport import SocketConnection, TcpTransport, parse_address

log = logging.getLogger(__name__)

# held for the whole of each exclusive probe so timing loops never overlap
_PROBE_LOCK = threading.Lock()


@dataclass(frozen=True)
class ProbeConfig:
    rounds: int = 30
    warmup: int = 5
    burst_length: int = 64
    per_size_timeout: float = 10.0
    exclusive: bool = True

    def __post_init__(self):
        if self.rounds < 5:
            raise ValidationError(f"rounds must be at least 5, got {self.rounds}")
        if self.warmup < 0:
            raise ValidationError("warmup must be non-negative")
        if self.burst_length < 1:
            raise ValidationError("burst_length must be positive")
        if not self.per_size_timeout > 0:
            raise ValidationError("per_size_timeout must be positive")


class ProbeSession:
    """Server side of one connection; maps each inbound frame to replies."""

    def __init__(self, delegate: Callable[[dict], RawTimings] | None = None):
        self.delegate = delegate
        self.burst_count = 0

    def handle(self, op: wire.Op, payload: bytes) -> list[tuple[wire.Op, bytes]]:
        if op is wire.Op.PING:
            return [(wire.Op.PONG, payload)]
        if op is wire.Op.BURST_DATA:
            self.burst_count += 1
            return []
        if op is wire.Op.BURST_END:
            count, self.burst_count = self.burst_count, 0
            return [(wire.Op.BURST_ACK, wire.COUNT.pack(count))]
        if op is wire.Op.PROBE_REQ:
            if self.delegate is None:
                return [(wire.Op.PROBE_ERR, b"remote probing not supported here")]
            try:
                request = json.loads(payload.decode("utf-8"))
                raw = self.delegate(request)
            except (ValueError, KeyError, TypeError) as exc:
                return [(wire.Op.PROBE_ERR, f"bad probe request: {exc}".encode())]
            except LogiclustersError as exc:
                return [(wire.Op.PROBE_ERR, str(exc).encode())]
            return [(wire.Op.PROBE_RES, json.dumps(raw.to_json()).encode())]
        raise ProtocolError(f"unexpected {op.name} from client")


def _payload(size: int) -> bytes:
    return bytes(i & 0xFF for i in range(size)) if size <= 4096 else bytes(size)


def probe(target: str, ladder: MessageSizeLadder, config: ProbeConfig | None = None,
          transport=None, source: str = "local") -> RawTimings:
    config = config or ProbeConfig()
    transport = transport or TcpTransport()
    guard = _PROBE_LOCK if config.exclusive else contextlib.nullcontext()
    with guard:
        conn = transport.connect(target, config.per_size_timeout)
        try:
            return _probe_sizes(conn, transport, target, source, ladder, config)
        finally:
            conn.close()


def _probe_sizes(conn, transport, target, source, ladder, config):
    now = transport.now_us
    per_size, burst = {}, {}
    base_rtt = None
    limit_us = config.per_size_timeout * 1e6
    for size in ladder.sizes:
        payload = _payload(size)
        step = 0
        started = now()
        try:
            for step in range(config.warmup):
                _ping(conn, payload)
            rtts = []
            for step in range(config.rounds):
                t0 = now()
                _ping(conn, payload)
                rtts.append(now() - t0)
            if base_rtt is None:
                base_rtt = statistics.median(rtts)
            step = config.rounds
            t0 = now()
            for _ in range(config.burst_length):
                conn.send(wire.Op.BURST_DATA, payload)
            conn.send(wire.Op.BURST_END)
            op, reply = conn.recv()
            elapsed = now() - t0
            if op is not wire.Op.BURST_ACK:
                raise ProtocolError(f"expected BURST_ACK, got {op.name}")
            (count,) = wire.COUNT.unpack(reply)
            if count != config.burst_length:
                raise ProtocolError(f"peer acknowledged {count} of {config.burst_length} frames")
        except (TransportError, ProtocolError) as exc:
            raise TransportError(
                f"probe {source}->{target} failed at size {size} B, round {step}: {exc}") from exc
        if now() - started > limit_us:
            raise TransportError(f"probe {source}->{target} exceeded the per-size timeout at {size} B")
        per_size[size] = tuple(rtts)
        burst[size] = max(elapsed - base_rtt, 0.0) / config.burst_length
    return RawTimings(source, target, per_size, burst)


def _ping(conn, payload):
    conn.send(wire.Op.PING, payload)
    op, echo = conn.recv()
    if op is not wire.Op.PONG or echo != payload:
        raise ProtocolError("PONG did not echo the PING payload")


# -- remote probing ------------------------------------------------------------

def request_remote_probe(transport, source: str, target: str, ladder: MessageSizeLadder,
                         config: ProbeConfig) -> RawTimings:
    request = {"source": source, "target": target, "sizes": list(ladder.sizes),
               "rounds": config.rounds, "warmup": config.warmup,
               "burst_length": config.burst_length, "timeout_s": config.per_size_timeout}
    wait = config.per_size_timeout * (len(ladder.sizes) + 1)
    conn = transport.connect(source, wait)
    try:
        conn.send(wire.Op.PROBE_REQ, json.dumps(request).encode())
        op, payload = conn.recv()
    finally:
        conn.close()
    text = payload.decode("utf-8", "replace")
    if op is wire.Op.PROBE_ERR:
        raise TransportError(f"{source} could not probe {target}: {text}")
    if op is not wire.Op.PROBE_RES:
        raise ProtocolError(f"expected PROBE_RES from {source}, got {op.name}")
    return RawTimings.from_json(json.loads(text))


def _run_request(request: dict) -> RawTimings:
    config = ProbeConfig(int(request["rounds"]), int(request["warmup"]),
                         int(request["burst_length"]), float(request["timeout_s"]))
    ladder = MessageSizeLadder(tuple(int(s) for s in request["sizes"]))
    return probe(str(request["target"]), ladder, config, TcpTransport(), source=str(request["source"]))


# -- server --------------------------------------------------------------------

class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn = SocketConnection(sock)
        try:
            if conn.read_preamble() != wire.PREAMBLE:
                log.warning("dropping %s: bad preamble", self.client_address)
                return
            sock.sendall(wire.PREAMBLE)
            session = ProbeSession(delegate=self.server.delegate)
            while True:
                op, payload = conn.recv()
                for reply in session.handle(op, payload):
                    conn.send(*reply)
        except TransportError:
            return
        except ProtocolError as exc:
            log.warning("dropping %s: %s", self.client_address, exc)
        except OSError:
            return


class ProbeServer(socketserver.ThreadingTCPServer):
    """Echo/sink server; each connection is handled on its own thread."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, endpoint: str, delegate=_run_request):
        host, port = parse_address(endpoint)
        self.delegate = delegate
        self._thread = None
        try:
            super().__init__((host, port), _Handler)
        except OSError as exc:
            raise TransportError(f"cannot bind probe server to {endpoint}: {exc}") from exc

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "ProbeServer":
        self._thread = threading.Thread(target=self.serve_forever, name=f"probe-{self.address}",
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve(endpoint: str) -> None:
    """Serve probes on ``endpoint`` until interrupted."""
    server = ProbeServer(endpoint)
    log.info("probe server listening on %s", server.address)
    try:
        server.serve_forever()
    finally:
        server.server_close()


# -- orchestration -------------------------------------------------------------

def _matrix_ladder(ladder: MessageSizeLadder) -> MessageSizeLadder:
    if ladder.smallest == ladder.largest:
        return MessageSizeLadder((ladder.smallest,))
    return MessageSizeLadder((ladder.smallest, ladder.largest))


def measure_matrix(nodes, ladder: MessageSizeLadder | None = None,
                   config: ProbeConfig | None = None, transport=None) -> DistanceMatrix:
    """Probe every ordered pair of ``nodes`` one at a time.

    Latency is half the median smallest-size round trip; throughput comes
    from the largest-size burst.  A pair that cannot be measured is left
    out of the matrix and logged.
    """
    ladder = _matrix_ladder(ladder or MessageSizeLadder())
    config = config or ProbeConfig()
    transport = transport or TcpTransport()
    nodes = sorted(nodes)
    entries = {}
    for src, dst in itertools.permutations(nodes, 2):
        try:
            raw = transport.probe_from(src, dst, ladder, config)
        except LogiclustersError as exc:
            log.warning("pair %s->%s not measured: %s", src, dst, exc)
            continue
        latency = statistics.median(raw.per_size[ladder.smallest]) / 2
        interval = raw.burst.get(ladder.largest, 0.0)
        throughput = ladder.largest * 8e6 / interval if interval > 0 else None
        entries[(src, dst)] = LinkMetric(latency, throughput)
    return DistanceMatrix(tuple(nodes), entries,
                          meta={"source": "measure", "ladder": str(ladder),
                                "rounds": config.rounds})


def _disjoint_waves(tasks):
    waves: list[list] = []
    for task in tasks:
        for wave in waves:
            if all({task.src, task.dst}.isdisjoint((t.src, t.dst)) for t in wave):
                wave.append(task)
                break
        else:
            waves.append([task])
    return waves


def execute_plan(plan: MeasurementPlan, ladder: MessageSizeLadder | None = None,
                 config: ProbeConfig | None = None, transport=None,
                 address_of: Mapping[str, str] | None = None,
                 concurrent: bool = False) -> dict[str, RawTimings]:
    """Run every plan task's probe and return raw timings keyed by task id.

    Tasks run one after another unless ``concurrent`` is set; then tasks on
    disjoint node pairs may overlap.
    """
    ladder = ladder or MessageSizeLadder()
    config = config or ProbeConfig()
    transport = transport or TcpTransport()
    address_of = address_of or {}

    def run(task):
        src = address_of.get(task.src, task.src)
        dst = address_of.get(task.dst, task.dst)
        log.info("task %s: probing %s -> %s", task.id, src, dst)
        return task.id, transport.probe_from(src, dst, ladder, config)

    if not concurrent:
        return dict(run(t) for t in plan.tasks)
    config = replace(config, exclusive=False)
    results = {}
    for wave in _disjoint_waves(plan.tasks):
        with ThreadPoolExecutor(max_workers=len(wave)) as pool:
            results.update(pool.map(run, wave))
    return {t.id: results[t.id] for t in plan.tasks}
