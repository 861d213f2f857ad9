"""Stream transports for the prober: real TCP, plus the common interface.

A transport hands out :class:`Connection` objects that exchange whole
frames and owns the clock used to time them.  The deterministic in-process
double lives in :mod:`logiclusters.prober.fake`.
"""

from __future__ import annotations

import socket
import time
from typing import Protocol

from ..errors import ProtocolError, TransportError, ValidationError
from . import wire


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not host or not port.isdigit() or int(port) > 65535:
        raise ValidationError(f"expected host:port, got {address!r}")
    return host, int(port)


class Connection(Protocol):
    def send(self, op: wire.Op, payload: bytes = b"") -> None: ...

    def recv(self) -> tuple[wire.Op, bytes]: ...

    def close(self) -> None: ...


class Transport(Protocol):
    def connect(self, target: str, timeout: float) -> Connection: ...

    def now_us(self) -> float: ...

    def probe_from(self, source: str, target: str, sizes, config): ...


class SocketConnection:
    """Frame-level wrapper around a connected stream socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock

    def send(self, op, payload=b""):
        try:
            self.sock.sendall(wire.encode(op, payload))
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def recv(self):
        header = self._read(wire.HEADER.size)
        length, op = wire.decode_header(header)
        return op, self._read(length)

    def _read(self, n: int) -> bytes:
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            try:
                k = self.sock.recv_into(view[got:], n - got)
            except socket.timeout as exc:
                raise TransportError("timed out waiting for peer") from exc
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if k == 0:
                raise TransportError("connection closed by peer")
            got += k
        return bytes(buf)

    def read_preamble(self) -> bytes:
        return self._read(len(wire.PREAMBLE))

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class TcpTransport:
    """Probe over real TCP connections, timed with ``perf_counter_ns``."""

    def connect(self, target: str, timeout: float = 10.0) -> SocketConnection:
        host, port = parse_address(target)
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {target}: {exc}") from exc
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn = SocketConnection(sock)
        try:
            sock.sendall(wire.PREAMBLE)
            reply = conn.read_preamble()
        except OSError as exc:
            conn.close()
            raise TransportError(f"handshake with {target} failed: {exc}") from exc
        except TransportError:
            conn.close()
            raise
        if reply != wire.PREAMBLE:
            conn.close()
            raise ProtocolError(f"{target} answered preamble {reply!r}")
        return conn

    def now_us(self) -> float:
        return time.perf_counter_ns() / 1000.0

    def probe_from(self, source, target, sizes, config):
        """Ask the probe server at ``source`` to measure ``target``."""
        from .probe import request_remote_probe

        return request_remote_probe(self, source, target, sizes, config)
