import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logiclusters.errors import SpecError
from logiclusters.model import serialize_matrix, symmetrize
from logiclusters.partitioner import PartitionConfig, partition
from logiclusters.synth import (Group, ScenarioSpec, equalize, generate, idpot_preset,
                                parse_spec, serialize_spec)


def recovered(spec, tolerance=1.20):
    matrix, truth = generate(spec)
    p = partition(symmetrize(matrix), matrix.nodes, PartitionConfig(tolerance))
    return p, truth


def member_sets(p):
    return sorted(s.members for s in p.subnets)


def test_generation_is_deterministic():
    a, ta = generate(idpot_preset(seed=7))
    b, tb = generate(idpot_preset(seed=7))
    assert serialize_matrix(a) == serialize_matrix(b) and ta == tb
    c, _ = generate(idpot_preset(seed=8))
    assert serialize_matrix(a) != serialize_matrix(c)


def test_matrix_is_full_and_symmetric():
    matrix, truth = generate(idpot_preset())
    n = len(matrix.nodes)
    assert n == 20 and len(truth) == 6
    assert len(matrix.entries) == n * (n - 1)
    for (a, b), m in matrix.entries.items():
        assert matrix.entries[(b, a)] == m


def test_single_group_gives_one_subnet():
    p, truth = recovered(ScenarioSpec((Group("X", 5, 30.0),), jitter_fraction=0.02, seed=1))
    assert member_sets(p) == member_sets(truth) == [("X0", "X1", "X2", "X3", "X4")]


def test_inter_equal_to_intra_merges():
    spec = ScenarioSpec((Group("P", 3, 50.0), Group("Q", 3, 50.0)),
                        {frozenset("PQ"): 50.0})
    p, truth = recovered(spec)
    assert len(truth) == 2
    assert len(p) == 1


def test_idpot_preset_recovered_zero_jitter_across_tolerances():
    spec = idpot_preset(jitter_fraction=0.0)
    for t in (1.0, 1.05, 1.1, 1.2, 1.3, 1.4, 1.5):
        p, truth = recovered(spec, t)
        assert member_sets(p) == member_sets(truth), t


def test_equalize_merges_a_and_d():
    p, truth = recovered(equalize(idpot_preset(), "A", "D"))
    assert len(p) == 5
    merged = [s.members for s in p.subnets if len(s.members) == 8]
    assert merged and all(m[0] in "AD" for m in merged[0])


def test_truth_min_edge_is_cheapest_intra_edge():
    matrix, truth = generate(idpot_preset())
    for s in truth.subnets:
        inside = [m.latency_us for (a, b), m in matrix.entries.items()
                  if a in s.members and b in s.members]
        assert s.subnet_min_edge == min(inside)


@pytest.mark.parametrize("kwargs", [
    {"groups": ()},
    {"groups": (Group("A", 0, 1.0),)},
    {"groups": (Group("A", 1, -1.0),)},
    {"groups": (Group("A", 1, 1.0), Group("A", 1, 1.0))},
    {"groups": (Group("A", 1, 1.0),), "jitter_fraction": 0.2},
    {"groups": (Group("A", 1, 1.0),), "inter": {frozenset("AZ"): 3.0}},
])
def test_scenario_validation(kwargs):
    with pytest.raises(SpecError):
        ScenarioSpec(**kwargs)


def test_missing_inter_latency_is_reported():
    spec = ScenarioSpec((Group("A", 2, 1.0), Group("B", 2, 1.0)))
    with pytest.raises(SpecError, match="A and B"):
        generate(spec)


def test_scenario_round_trip():
    spec = idpot_preset(jitter_fraction=0.01, seed=99)
    assert parse_spec(serialize_spec(spec)) == spec


@st.composite
def separated_scenarios(draw):
    k = draw(st.integers(min_value=1, max_value=5))
    groups = tuple(Group(chr(ord("A") + i), draw(st.integers(2, 5)),
                         draw(st.floats(10.0, 200.0))) for i in range(k))
    inter = {}
    for i, g in enumerate(groups):
        for h in groups[i + 1:]:
            floor = 2.0 * max(g.intra_latency_us, h.intra_latency_us)
            ratio = draw(st.floats(1.0, 4.0))
            inter[frozenset((g.label, h.label))] = floor * ratio
    return ScenarioSpec(groups, inter, draw(st.floats(0.0, 0.02)), draw(st.integers(0, 2**32)))


@settings(max_examples=150, deadline=None)
@given(separated_scenarios())
def test_well_separated_groups_are_recovered(spec):
    p, truth = recovered(spec)
    assert member_sets(p) == member_sets(truth)
