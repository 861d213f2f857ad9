import socket
import subprocess
import sys
import threading
import time

import pytest

from logiclusters.colocation import (ProcessInfo, ProcessRegistry, RendezvousRoot,
                                     build_group_tree, collect, parse_hello, parse_registry,
                                     parse_tree, register, serialize_registry, serialize_tree)
from logiclusters.errors import (MappingError, ParseError, ProtocolError, RendezvousTimeout,
                                 TransportError, ValidationError)
from logiclusters.model import Partition, Subnet


def registry(hosts):
    return ProcessRegistry(len(hosts), tuple(ProcessInfo(r, h, 1000 + r) for r, h in enumerate(hosts)))


def flatten(tree):
    return [(g.level, g.name, parent, g.leader, g.ranks) for g, parent in tree.walk()]


def send_line(address, data):
    host, port = address.rsplit(":", 1)
    with socket.create_connection((host, int(port)), timeout=5) as sock:
        sock.sendall(data)
        return sock.makefile("rb").readline().decode()


def test_machine_groups_by_hostname():
    reg = registry(["m1", "m1", "m2", "m2"])
    assert dict(reg.machine_groups) == {"m1": (0, 1), "m2": (2, 3)}
    assert reg.hostname_of(2) == "m2"


def test_machine_groups_order_by_lowest_rank():
    reg = registry(["zz", "aa", "zz"])
    assert list(reg.machine_groups) == ["zz", "aa"]


def test_registry_requires_contiguous_ranks():
    with pytest.raises(ValidationError):
        ProcessRegistry(3, (ProcessInfo(0, "a", 1), ProcessInfo(2, "a", 2)))


def test_tree_for_two_hosts_two_subnets():
    part = Partition((Subnet(("m1",)), Subnet(("m2",))))
    tree = build_group_tree(registry(["m1", "m1", "m2", "m2"]), part)
    assert flatten(tree) == [
        ("world", "world", None, 0, (0, 1, 2, 3)),
        ("subnet", "subnet:0", "world", 0, (0, 1)),
        ("machine", "machine:m1", "subnet:0", 0, (0, 1)),
        ("subnet", "subnet:1", "world", 2, (2, 3)),
        ("machine", "machine:m2", "subnet:1", 2, (2, 3)),
    ]


def test_tree_subnet_with_two_machines_and_empty_subnet():
    part = Partition((Subnet(("a", "b"), 1.0), Subnet(("c",)), Subnet(("d",))))
    tree = build_group_tree(registry(["d", "b", "a", "b"]), part)
    assert flatten(tree) == [
        ("world", "world", None, 0, (0, 1, 2, 3)),
        ("subnet", "subnet:2", "world", 0, (0,)),
        ("machine", "machine:d", "subnet:2", 0, (0,)),
        ("subnet", "subnet:0", "world", 1, (1, 2, 3)),
        ("machine", "machine:b", "subnet:0", 1, (1, 3)),
        ("machine", "machine:a", "subnet:0", 2, (2,)),
    ]


def test_degenerate_single_rank_tree():
    tree = build_group_tree(registry(["solo"]), Partition((Subnet(("solo",)),)))
    assert [g.level for g, _ in tree.walk()] == ["world", "subnet", "machine"]
    assert all(g.leader == 0 for g, _ in tree.walk())


def test_unknown_host_is_a_mapping_error():
    with pytest.raises(MappingError, match="m3"):
        build_group_tree(registry(["m1", "m3"]), Partition((Subnet(("m1",)),)))


def test_tree_invariants_on_random_layout():
    import random

    rng = random.Random(4)
    hosts = [f"h{i}" for i in range(6)]
    part = Partition((Subnet(("h0", "h1", "h2"), 1.0), Subnet(("h3",)), Subnet(("h4", "h5"), 2.0)))
    for _ in range(50):
        reg = registry([rng.choice(hosts) for _ in range(rng.randint(1, 12))])
        tree = build_group_tree(reg, part)
        levels = {}
        for g, _ in tree.walk():
            levels.setdefault(g.level, []).append(g)
            assert g.leader == min(g.ranks)
        for level in ("machine", "subnet"):
            ranks = sorted(r for g in levels[level] for r in g.ranks)
            assert ranks == list(range(reg.world_size))
        for s in levels["subnet"]:
            assert s.leader == min(m.leader for m in s.children)
        assert tree.leader == 0
        assert serialize_tree(build_group_tree(reg, part)) == serialize_tree(tree)


def test_registry_and_tree_files_round_trip():
    reg = registry(["m1", "m2", "m1"])
    assert parse_registry(serialize_registry(reg)) == reg
    tree = build_group_tree(reg, Partition((Subnet(("m1", "m2"), 5.0),)))
    assert parse_tree(serialize_tree(tree)) == tree


def test_registry_file_errors():
    with pytest.raises(ParseError, match=r"processes\[0\]"):
        parse_registry('{"format": "logiclusters/registry", "version": 1, "world_size": 1,'
                       ' "processes": [{"rank": -1, "hostname": "a", "pid": 1}]}')


@pytest.mark.parametrize("line", [
    "HELLO 0 host\n", "HI 0 host 1\n", "HELLO x host 1\n", "HELLO 0 host 0\n", "HELLO -1 h 1\n"])
def test_parse_hello_rejects(line):
    with pytest.raises(ProtocolError):
        parse_hello(line)


def test_collect_single_self_registration():
    with RendezvousRoot(1, "127.0.0.1:0") as root:
        assert register(0, root.address, hostname="solo") == 0
        reg = root.wait(5)
    assert dict(reg.machine_groups) == {"solo": (0,)}


def test_duplicate_registration_is_idempotent():
    with RendezvousRoot(2, "127.0.0.1:0") as root:
        assert register(0, root.address, hostname="m1") == 0
        assert register(0, root.address, hostname="m1") == 0
        register(1, root.address, hostname="m1")
        reg = root.wait(5)
    assert reg.world_size == 2


def test_conflicting_hostname_is_a_protocol_error():
    with RendezvousRoot(2, "127.0.0.1:0") as root:
        register(0, root.address, hostname="m1")
        with pytest.raises(ProtocolError, match="rejected"):
            register(0, root.address, hostname="m2")
        with pytest.raises(ProtocolError, match="m1 and m2"):
            root.wait(5)


def test_malformed_message_rejected_collection_continues():
    with RendezvousRoot(1, "127.0.0.1:0") as root:
        assert send_line(root.address, b"garbage\n").startswith("ERR ")
        assert send_line(root.address, b"HELLO 7 host 1\n").startswith("ERR ")
        assert send_line(root.address, b"HELLO 0 host 1\n") == "OK 0\n"
        assert root.wait(5).world_size == 1


def test_timeout_names_missing_rank():
    with RendezvousRoot(3, "127.0.0.1:0") as root:
        register(0, root.address, hostname="a")
        register(2, root.address, hostname="a")
        start = time.monotonic()
        with pytest.raises(RendezvousTimeout) as info:
            root.wait(0.3)
        assert time.monotonic() - start < 2
    assert info.value.missing == [1]
    assert "1" in str(info.value)


def test_register_to_dead_endpoint():
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    address = "127.0.0.1:%d" % sock.getsockname()[1]
    sock.close()
    with pytest.raises(TransportError, match="rank 3"):
        register(3, address, hostname="x", retries=2, retry_delay=0.01, timeout=1)


def test_live_rendezvous_with_four_processes():
    ready = threading.Event()
    holder = {}

    def on_ready(address):
        holder["address"] = address
        ready.set()

    def root():
        try:
            holder["registry"] = collect(4, "127.0.0.1:0", 10, on_ready)
        except Exception as exc:  # surfaced below
            holder["error"] = exc
            ready.set()

    start = time.monotonic()
    thread = threading.Thread(target=root)
    thread.start()
    assert ready.wait(5)
    procs = [subprocess.Popen([sys.executable, "-m", "logiclusters", "rendezvous-register",
                               "--root", holder["address"], "--rank", str(rank),
                               "--hostname", "m1" if rank < 2 else "m2"])
             for rank in range(4)]
    codes = [p.wait(10) for p in procs]
    thread.join(10)
    elapsed = time.monotonic() - start
    assert "error" not in holder
    assert codes == [0, 0, 0, 0]
    reg = holder["registry"]
    assert dict(reg.machine_groups) == {"m1": (0, 1), "m2": (2, 3)}
    assert len({p.pid for p in reg.processes}) == 4
    assert elapsed < 5
