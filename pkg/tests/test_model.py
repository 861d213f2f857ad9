import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logiclusters.errors import ParseError, ValidationError
from logiclusters.model import (DistanceMatrix, Edge, LinkMetric, Partition, Subnet,
                                parse_matrix, parse_partition, serialize_matrix,
                                serialize_partition, symmetrize)


def matrix_doc(nodes, entries, meta=None):
    doc = {"format": "logiclusters/distance-matrix", "version": 1,
           "nodes": nodes, "entries": entries}
    if meta is not None:
        doc["meta"] = meta
    return json.dumps(doc)


def test_parse_minimal_two_nodes():
    text = matrix_doc([{"id": "a"}, {"id": "b"}],
                      [{"src": "a", "dst": "b", "latency_us": 100},
                       {"src": "b", "dst": "a", "latency_us": 100}])
    m = parse_matrix(text)
    assert m.nodes == ("a", "b")
    assert len(m.entries) == 2
    assert m.entries[("a", "b")] == LinkMetric(100.0)


def test_self_entry_rejected():
    text = matrix_doc([{"id": "a"}], [{"src": "a", "dst": "a", "latency_us": 5}])
    with pytest.raises(ValidationError, match="self-entry"):
        parse_matrix(text)


@pytest.mark.parametrize("latency", [0, -3.0])
def test_nonpositive_latency_names_pair(latency):
    text = matrix_doc([{"id": "a"}, {"id": "b"}], [{"src": "a", "dst": "b", "latency_us": latency}])
    with pytest.raises(ValidationError, match="a->b"):
        parse_matrix(text)


def test_malformed_json_reports_line():
    text = '{\n  "format": "logiclusters/distance-matrix",\n  "version": 1,\n  nodes: []\n}'
    with pytest.raises(ParseError) as info:
        parse_matrix(text)
    assert "line 4" in str(info.value)


def test_bad_field_type_reports_path():
    text = matrix_doc([{"id": "a"}, {"id": "b"}], [{"src": "a", "dst": "b", "latency_us": "fast"}])
    with pytest.raises(ParseError, match=r"entries\[0\]\.latency_us"):
        parse_matrix(text)


@pytest.mark.parametrize("bad", ["", "has space", "tab\there"])
def test_node_id_rules(bad):
    with pytest.raises(ValidationError):
        DistanceMatrix((bad,), {})


def test_unknown_endpoint_rejected():
    text = matrix_doc([{"id": "a"}], [{"src": "a", "dst": "z", "latency_us": 1}])
    with pytest.raises(ValidationError, match="unknown node"):
        parse_matrix(text)


def test_twenty_nodes_two_domains_no_cross_entries():
    nodes = [f"n{i:02d}" for i in range(20)]
    domain = {n: ("lan1" if i < 10 else "lan2") for i, n in enumerate(nodes)}
    entries = [{"src": a, "dst": b, "latency_us": 50.0 + i % 7}
               for i, (a, b) in enumerate(itertools.permutations(nodes, 2))
               if domain[a] == domain[b]]
    m = parse_matrix(matrix_doc([{"id": n, "domain": domain[n]} for n in nodes], entries))
    # 10 nodes per domain -> 10*9 directed entries each
    assert len(m.entries) == 2 * 90
    assert all(domain[a] == domain[b] for a, b in m.entries)
    edges = symmetrize(m)
    assert len(edges) == 2 * 45
    assert all(m.domain_tags[e.a] == m.domain_tags[e.b] for e in edges)


def test_symmetrize_mean_single_and_absent():
    m = DistanceMatrix(("a", "b", "c", "d"), {
        ("a", "b"): LinkMetric(100.0), ("b", "a"): LinkMetric(120.0),
        ("c", "a"): LinkMetric(100.0),
    })
    edges = {(e.a, e.b): e.weight for e in symmetrize(m)}
    assert edges == {("a", "b"): 110.0, ("a", "c"): 100.0}


def test_serialization_is_sorted_and_stable():
    m = DistanceMatrix(("b", "a"), {("b", "a"): LinkMetric(2.0, 1e9), ("a", "b"): LinkMetric(1.0)},
                       {"b": "x"}, {"tool": "test"})
    text = serialize_matrix(m)
    doc = json.loads(text)
    assert [n["id"] for n in doc["nodes"]] == ["a", "b"]
    assert [(e["src"], e["dst"]) for e in doc["entries"]] == [("a", "b"), ("b", "a")]
    assert text == serialize_matrix(parse_matrix(text))


node_ids = st.text(alphabet="abcdefgh0123:.-", min_size=1, max_size=6)


@st.composite
def matrices(draw):
    nodes = draw(st.lists(node_ids, min_size=1, max_size=7, unique=True))
    pairs = [p for p in itertools.permutations(nodes, 2)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    latency = st.floats(min_value=1e-3, max_value=1e6, allow_nan=False)
    throughput = st.none() | st.floats(min_value=1.0, max_value=1e12)
    entries = {p: LinkMetric(draw(latency), draw(throughput)) for p in chosen}
    tags = {n: draw(st.sampled_from(["lan1", "lan2"])) for n in nodes if draw(st.booleans())}
    return DistanceMatrix(tuple(nodes), entries, tags)


@settings(max_examples=200, deadline=None)
@given(matrices())
def test_round_trip(m):
    assert parse_matrix(serialize_matrix(m)) == m


@settings(max_examples=200, deadline=None)
@given(matrices())
def test_symmetrize_properties(m):
    edges = symmetrize(m)
    n = len(m.nodes)
    assert len(edges) <= n * (n - 1) // 2
    assert all(e.weight > 0 and e.a < e.b for e in edges)
    measured = {frozenset(p) for p in m.entries}
    assert {frozenset((e.a, e.b)) for e in edges} == measured


@settings(max_examples=100, deadline=None)
@given(matrices())
def test_domain_separation(m):
    tags = dict(m.domain_tags)
    entries = {p: v for p, v in m.entries.items()
               if tags.get(p[0], "none") == tags.get(p[1], "none")}
    cut = DistanceMatrix(m.nodes, entries, tags)
    for e in symmetrize(cut):
        assert tags.get(e.a, "none") == tags.get(e.b, "none")


def test_edge_normalizes_endpoints():
    e = Edge("z", "a", 3.0)
    assert (e.a, e.b) == ("a", "z")
    with pytest.raises(ValidationError):
        Edge("a", "b", 0.0)


def test_partition_invariants():
    with pytest.raises(ValidationError, match="overlap"):
        Partition((Subnet(("a", "b"), 1.0), Subnet(("b", "c"), 1.0)))
    with pytest.raises(ValidationError):
        Subnet(("a",), 1.0)
    with pytest.raises(ValidationError):
        Partition((Subnet(("a",)),), tolerance=0.5)
    p = Partition((Subnet(("d", "c"), 2.0), Subnet(("a",))))
    assert [s.members for s in p.subnets] == [("a",), ("c", "d")]


def test_partition_file_round_trip():
    p = Partition((Subnet(("c", "d"), 2.5), Subnet(("a",)), Subnet(("b", "e"), 1.0)), 1.3)
    text = serialize_partition(p)
    assert '"subnet_min_edge": "inf"' in text
    assert parse_partition(text) == p


def test_partition_file_rejects_bad_index():
    p = Partition((Subnet(("a",)), Subnet(("b",))))
    doc = json.loads(serialize_partition(p))
    doc["subnets"][0]["index"] = 7
    with pytest.raises(ParseError, match="index"):
        parse_partition(json.dumps(doc))
