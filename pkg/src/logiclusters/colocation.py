"""Process co-location by hostname rendezvous, and the resulting group tree.

Every process reports ``(rank, hostname, pid)`` to a root, and processes
sharing a hostname are treated as one machine.  Identical hostnames from
distinct containers or virtual hosts therefore collide.

Rendezvous wire protocol (one exchange per stream connection, ASCII)::

    client -> root   HELLO <rank> <hostname> <pid>\\n
    root -> client   OK <rank>\\n      or      ERR <reason>\\n

then the root closes.  Re-sending the same rank with the same hostname is
acknowledged again.  The same rank with a different hostname is a
conflict: the client gets ``ERR`` and :meth:`RendezvousRoot.wait` raises.

Registry file grammar::

    {"format": "logiclusters/registry", "version": 1, "world_size": <int>,
     "processes": [{"rank": <int>, "hostname": <str>, "pid": <int>}, ...]}

Group-tree file grammar (depth first, parents before children)::

    {"format": "logiclusters/group-tree", "version": 1,
     "groups": [{"level": "world"|"subnet"|"machine", "name": <str>,
                 "parent": <str or null>, "leader": <int>,
                 "ranks": [<int>, ...]}, ...]}
"""

from __future__ import annotations

import logging
import os
import socket
import socketserver
import threading
import time
from dataclasses import dataclass
from types import MappingProxyType

from . import documents
from .errors import (MappingError, ParseError, ProtocolError, RendezvousTimeout, TransportError,
                     ValidationError)
from .model import Partition
from .prober.transport import parse_address

log = logging.getLogger(__name__)

REGISTRY_FORMAT = "logiclusters/registry"
TREE_FORMAT = "logiclusters/group-tree"
MAX_LINE = 1024


@dataclass(frozen=True)
class ProcessInfo:
    rank: int
    hostname: str
    pid: int

    def __post_init__(self):
        if isinstance(self.rank, bool) or not isinstance(self.rank, int) or self.rank < 0:
            raise ValidationError(f"rank must be a non-negative integer, got {self.rank!r}")
        if not self.hostname or any(ch.isspace() for ch in self.hostname):
            raise ValidationError(f"bad hostname {self.hostname!r}")
        if isinstance(self.pid, bool) or not isinstance(self.pid, int) or self.pid <= 0:
            raise ValidationError(f"pid must be a positive integer, got {self.pid!r}")


@dataclass(frozen=True)
class ProcessRegistry:
    world_size: int
    processes: tuple[ProcessInfo, ...]

    def __post_init__(self):
        if self.world_size < 1:
            raise ValidationError("world_size must be at least 1")
        procs = tuple(sorted(self.processes, key=lambda p: p.rank))
        ranks = [p.rank for p in procs]
        if ranks != list(range(self.world_size)):
            raise ValidationError(
                f"ranks must be exactly 0..{self.world_size - 1}, got {ranks}")
        groups: dict[str, list[int]] = {}
        for p in procs:
            groups.setdefault(p.hostname, []).append(p.rank)
        ordered = sorted(groups.items(), key=lambda kv: kv[1][0])
        object.__setattr__(self, "processes", procs)
        object.__setattr__(self, "_groups",
                           MappingProxyType({h: tuple(r) for h, r in ordered}))

    @property
    def machine_groups(self):
        """Hostname to sorted ranks, ordered by each machine's lowest rank."""
        return self._groups

    def hostname_of(self, rank: int) -> str:
        return self.processes[rank].hostname


# -- root ----------------------------------------------------------------------

def parse_hello(line: str) -> ProcessInfo:
    parts = line.rstrip("\n").split(" ")
    if len(parts) != 4 or parts[0] != "HELLO":
        raise ProtocolError(f"malformed registration {line!r}")
    _, rank, host, pid = parts
    if not (rank.isdigit() and pid.isdigit()):
        raise ProtocolError(f"rank and pid must be decimal in {line!r}")
    try:
        return ProcessInfo(int(rank), host, int(pid))
    except ValidationError as exc:
        raise ProtocolError(str(exc)) from None


class _HelloHandler(socketserver.StreamRequestHandler):
    timeout = 5.0

    def handle(self):
        root: RendezvousRoot = self.server.root
        try:
            raw = self.rfile.readline(MAX_LINE)
        except OSError:
            return
        try:
            line = raw.decode("ascii")
            if not line.endswith("\n"):
                raise ProtocolError("registration line not terminated")
            reply = f"OK {root._record(parse_hello(line))}\n"
        except (UnicodeDecodeError, ProtocolError) as exc:
            log.warning("rejecting registration from %s: %s", self.client_address, exc)
            reply = f"ERR {str(exc).splitlines()[0]}\n"
        try:
            self.wfile.write(reply.encode("ascii", "replace"))
        except OSError:
            pass


class _RootServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class RendezvousRoot:
    """Collects registrations until every rank in ``0..expected-1`` is known."""

    def __init__(self, expected: int, listen_endpoint: str):
        if expected < 1:
            raise ValidationError("expected world size must be at least 1")
        self.expected = expected
        self._procs: dict[int, ProcessInfo] = {}
        self._conflict: ProtocolError | None = None
        self._cond = threading.Condition()
        host, port = parse_address(listen_endpoint)
        try:
            self._server = _RootServer((host, port), _HelloHandler)
        except OSError as exc:
            raise TransportError(f"cannot listen on {listen_endpoint}: {exc}") from exc
        self._server.root = self
        self._thread = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def _record(self, info: ProcessInfo) -> int:
        with self._cond:
            if info.rank >= self.expected:
                raise ProtocolError(f"rank {info.rank} outside world of size {self.expected}")
            known = self._procs.get(info.rank)
            if known is not None and known.hostname != info.hostname:
                err = ProtocolError(
                    f"rank {info.rank} registered from {known.hostname} and {info.hostname}")
                self._conflict = err
                self._cond.notify_all()
                raise err
            if known is None:
                self._procs[info.rank] = info
                self._cond.notify_all()
            return info.rank

    def start(self) -> "RendezvousRoot":
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="rendezvous-root", daemon=True)
        self._thread.start()
        return self

    def wait(self, deadline: float) -> ProcessRegistry:
        """Block up to ``deadline`` seconds for the full world."""
        end = time.monotonic() + deadline
        with self._cond:
            while self._conflict is None and len(self._procs) < self.expected:
                remaining = end - time.monotonic()
                if remaining <= 0:
                    raise RendezvousTimeout(set(range(self.expected)) - set(self._procs))
                self._cond.wait(remaining)
            if self._conflict is not None:
                raise self._conflict
            return ProcessRegistry(self.expected, tuple(self._procs.values()))

    def close(self):
        if self._thread is not None:
            self._server.shutdown()
            self._thread.join()
            self._thread = None
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.close()


def collect(expected: int, listen_endpoint: str, deadline: float,
            on_ready=None) -> ProcessRegistry:
    """Run a root on ``listen_endpoint`` until ``expected`` ranks register.

    ``on_ready`` is called with the bound address once the root listens,
    which is how callers learn the port when binding to port 0.
    """
    with RendezvousRoot(expected, listen_endpoint) as root:
        log.info("rendezvous root listening on %s for %d ranks", root.address, expected)
        if on_ready is not None:
            on_ready(root.address)
        return root.wait(deadline)


# -- client --------------------------------------------------------------------

def register(rank: int, root_endpoint: str, hostname: str | None = None, pid: int | None = None,
             retries: int = 5, retry_delay: float = 0.2, timeout: float = 5.0) -> int:
    """Announce this process to the root; returns the acknowledged rank.

    ``hostname`` defaults to ``socket.gethostname()``.  Connection failures
    are retried ``retries`` times before :class:`TransportError`; an ``ERR``
    answer raises :class:`ProtocolError` at once.
    """
    info = ProcessInfo(rank, hostname or socket.gethostname(), pid or os.getpid())
    host, port = parse_address(root_endpoint)
    message = f"HELLO {info.rank} {info.hostname} {info.pid}\n".encode("ascii")
    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(retry_delay)
        try:
            with socket.create_connection((host, port), timeout=timeout) as sock:
                sock.sendall(message)
                reply = sock.makefile("rb").readline(MAX_LINE).decode("ascii", "replace")
        except OSError as exc:
            last = exc
            continue
        if reply == f"OK {rank}\n":
            return rank
        if reply.startswith("ERR "):
            raise ProtocolError(f"root rejected rank {rank}: {reply[4:].strip()}")
        last = ProtocolError(f"unexpected reply {reply!r}")
    raise TransportError(f"could not register rank {rank} with {root_endpoint}: {last}")


# -- group tree ----------------------------------------------------------------

@dataclass(frozen=True)
class Group:
    level: str
    name: str
    ranks: tuple[int, ...]
    leader: int
    children: tuple["Group", ...] = ()

    def walk(self, parent: str | None = None):
        yield self, parent
        for child in self.children:
            yield from child.walk(self.name)


GroupTree = Group


def build_group_tree(registry: ProcessRegistry, partition: Partition) -> GroupTree:
    """Nest machine groups inside their subnet, and subnets inside the world.

    Subnets without any registered process are left out.  Every group is
    led by its lowest rank.
    """
    subnet_of = {}
    for host in sorted(registry.machine_groups):
        try:
            subnet_of[host] = partition.index_of(host)
        except KeyError:
            raise MappingError(host) from None
    by_subnet: dict[int, list[Group]] = {}
    for host, ranks in registry.machine_groups.items():
        machine = Group("machine", f"machine:{host}", ranks, ranks[0])
        by_subnet.setdefault(subnet_of[host], []).append(machine)
    subnets = []
    for index in sorted(by_subnet):
        machines = tuple(sorted(by_subnet[index], key=lambda g: g.leader))
        ranks = tuple(sorted(r for m in machines for r in m.ranks))
        subnets.append(Group("subnet", f"subnet:{index}", ranks,
                             min(m.leader for m in machines), machines))
    subnets.sort(key=lambda g: g.leader)
    return Group("world", "world", tuple(range(registry.world_size)), 0, tuple(subnets))


# -- files ---------------------------------------------------------------------

def serialize_registry(registry: ProcessRegistry) -> str:
    return documents.dumps(REGISTRY_FORMAT, {
        "world_size": registry.world_size,
        "processes": [{"rank": p.rank, "hostname": p.hostname, "pid": p.pid}
                      for p in registry.processes]})


def parse_registry(text: str) -> ProcessRegistry:
    doc = documents.loads(text, REGISTRY_FORMAT)
    procs = []
    for i, rec in enumerate(documents.field(doc, "processes", "$", list)):
        where = f"processes[{i}]"
        try:
            procs.append(ProcessInfo(documents.field(rec, "rank", where, int),
                                     documents.field(rec, "hostname", where, str),
                                     documents.field(rec, "pid", where, int)))
        except ValidationError as exc:
            raise ParseError(str(exc), where) from None
    try:
        return ProcessRegistry(documents.field(doc, "world_size", "$", int), tuple(procs))
    except ValidationError as exc:
        raise ParseError(str(exc), "processes") from None


def serialize_tree(tree: GroupTree) -> str:
    groups = [{"level": g.level, "name": g.name, "parent": parent, "leader": g.leader,
               "ranks": list(g.ranks)} for g, parent in tree.walk()]
    return documents.dumps(TREE_FORMAT, {"groups": groups})


def parse_tree(text: str) -> GroupTree:
    doc = documents.loads(text, TREE_FORMAT)
    records = documents.field(doc, "groups", "$", list)
    children: dict[str | None, list[str]] = {}
    fields = {}
    for i, rec in enumerate(records):
        where = f"groups[{i}]"
        name = documents.field(rec, "name", where, str)
        parent = documents.field(rec, "parent", where, (str, type(None)))
        if parent is not None and parent not in fields:
            raise ParseError(f"parent {parent!r} not defined before child", where)
        fields[name] = (documents.field(rec, "level", where, str),
                        tuple(documents.field(rec, "ranks", where, list)),
                        documents.field(rec, "leader", where, int))
        children.setdefault(parent, []).append(name)
    roots = children.get(None, [])
    if len(roots) != 1:
        raise ParseError(f"expected exactly one root group, found {len(roots)}", "groups")

    def build(name):
        level, ranks, leader = fields[name]
        return Group(level, name, ranks, leader, tuple(build(c) for c in children.get(name, [])))

    return build(roots[0])
