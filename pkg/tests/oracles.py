"""Independent reference implementations used only by the tests.

These deliberately avoid the package's union-find and edge types: groups
are plain frozensets rebuilt at every step, and every bound is recomputed
from scratch.
"""

import math


def brute_min_edges(edges, nodes):
    return {n: min((w for a, b, w in edges if n in (a, b)), default=math.inf) for n in nodes}


def naive_partition(edges, nodes, tolerance):
    """Sorted greedy scan over (a, b, w) tuples; returns (groups, decisions).

    Each decision is ``(a, b, w, tag)`` with tag one of ``"accept"``,
    ``"same"``, ``"node"``, ``"subnet"``.
    """
    edges = sorted(((min(a, b), max(a, b), w) for a, b, w in edges), key=lambda e: (e[2], e[0], e[1]))
    mins = brute_min_edges(edges, nodes)
    group = {n: frozenset([n]) for n in nodes}
    group_min = {}
    decisions = []
    for a, b, w in edges:
        if group[a] == group[b]:
            decisions.append((a, b, w, "same"))
            continue
        if w > tolerance * mins[a] or w > tolerance * mins[b]:
            decisions.append((a, b, w, "node"))
            continue
        if len(group[a]) > 1 and w > tolerance * group_min[group[a]]:
            decisions.append((a, b, w, "subnet"))
            continue
        if len(group[b]) > 1 and w > tolerance * group_min[group[b]]:
            decisions.append((a, b, w, "subnet"))
            continue
        merged = group[a] | group[b]
        group_min[merged] = min([w] + [group_min[g] for g in (group[a], group[b]) if g in group_min])
        for n in merged:
            group[n] = merged
        decisions.append((a, b, w, "accept"))
    groups = sorted(set(group.values()), key=min)
    return [(tuple(sorted(g)), group_min.get(g, math.inf)) for g in groups], decisions


def replay(trace, nodes, tolerance, all_edges):
    """Re-check every decision of a package trace against fresh state.

    Returns ``(groups, violations)``; ``groups`` come from applying only the
    accepted merges, and ``violations`` lists human-readable mismatches.
    """
    edge_tuples = [(e.a, e.b, e.weight) for e in all_edges]
    mins = brute_min_edges(edge_tuples, nodes)
    group = {n: frozenset([n]) for n in nodes}
    group_min = {}
    violations = []
    expected_order = sorted(edge_tuples, key=lambda e: (e[2], e[0], e[1]))
    seen_order = [(d.edge.a, d.edge.b, d.edge.weight) for d in trace]
    if seen_order != expected_order:
        violations.append("trace does not visit edges in sorted order")
    for d in trace:
        a, b, w = d.edge.a, d.edge.b, d.edge.weight
        same = group[a] == group[b]
        node_ok = w <= tolerance * mins[a] and w <= tolerance * mins[b]
        sub_ok = all(len(group[n]) == 1 or w <= tolerance * group_min[group[n]] for n in (a, b))
        if d.accepted:
            if same or not node_ok or not sub_ok:
                violations.append(f"accepted {a}-{b} w={w} violates a bound")
            merged = group[a] | group[b]
            group_min[merged] = min([w] + [group_min[g] for g in (group[a], group[b]) if g in group_min])
            for n in merged:
                group[n] = merged
        else:
            should_skip = same or not node_ok or not sub_ok
            if not should_skip:
                violations.append(f"skipped {a}-{b} w={w} though every bound held")
    groups = sorted(set(group.values()), key=min)
    return [(tuple(sorted(g)), group_min.get(g, math.inf)) for g in groups], violations


def plogp_rtt(latency_us, gap_us):
    """Ping-pong round trip of the fake link model: ``2L + 2g``."""
    return 2 * latency_us + 2 * gap_us
