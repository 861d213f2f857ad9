"""Probe wire protocol, version 1.

A connection starts with the client sending the 4-byte preamble ``TPD1``:
the ASCII tag ``TPD`` followed by the protocol version byte ``'1'``.  A
server that speaks the version answers with the same 4 bytes; otherwise it
closes the connection.  After that both sides exchange frames::

    +----------------+--------+-----------------+
    | length: u32 BE | opcode | payload         |
    | (payload only) | u8     | (length bytes)  |
    +----------------+--------+-----------------+

Opcodes and payloads:

==========  ====  ===========================================================
PING        0x01  arbitrary bytes; answered by PONG with the same bytes
PONG        0x02  echo of the PING payload
BURST_DATA  0x03  arbitrary bytes; never answered
BURST_END   0x04  empty; answered by one BURST_ACK
BURST_ACK   0x05  u32 BE count of BURST_DATA frames since the last BURST_END
PROBE_REQ   0x06  UTF-8 JSON ``{"source", "target", "sizes", "rounds",
                  "warmup", "burst_length", "timeout_s"}``: ask the server
                  to probe ``target`` itself and report back
PROBE_RES   0x07  UTF-8 JSON raw-timings body (see ``timings.py``)
PROBE_ERR   0x08  UTF-8 error text
==========  ====  ===========================================================

PROBE_REQ/RES/ERR let a coordinator measure a link between two remote
nodes: it asks the source node to run the probe.  Any unknown opcode or a
length above ``MAX_PAYLOAD`` is a protocol violation and the receiver drops
the connection.
"""

from __future__ import annotations

import enum
import struct

from ..errors import ProtocolError

PREAMBLE = b"TPD1"
HEADER = struct.Struct(">IB")
COUNT = struct.Struct(">I")
MAX_PAYLOAD = 64 * 1024 * 1024


class Op(enum.IntEnum):
    PING = 0x01
    PONG = 0x02
    BURST_DATA = 0x03
    BURST_END = 0x04
    BURST_ACK = 0x05
    PROBE_REQ = 0x06
    PROBE_RES = 0x07
    PROBE_ERR = 0x08


def encode(op: Op, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds limit")
    return HEADER.pack(len(payload), op) + payload


def decode_header(header: bytes) -> tuple[int, Op]:
    length, op = HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"frame length {length} exceeds limit")
    try:
        return length, Op(op)
    except ValueError:
        raise ProtocolError(f"unknown opcode 0x{op:02x}") from None


def decode(frame: bytes) -> tuple[Op, bytes]:
    """Decode one complete frame held in ``frame``."""
    if len(frame) < HEADER.size:
        raise ProtocolError("truncated frame header")
    length, op = decode_header(frame[:HEADER.size])
    payload = frame[HEADER.size:]
    if len(payload) != length:
        raise ProtocolError(f"frame declares {length} payload bytes, carries {len(payload)}")
    return op, payload
