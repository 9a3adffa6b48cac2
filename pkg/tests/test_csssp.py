import random

import pytest

from congest_apsp import oracle
from congest_apsp.csssp import (
    bellman_ford,
    build_csssp,
    collect_ancestors,
    consistency_report,
    remove_subtrees,
)
from congest_apsp.engine import EngineConfig, Metrics
from congest_apsp.graphs import INF, Graph, gnp_graph, path_graph

CFG = EngineConfig()


def test_bf_p3_one_hop():
    g = path_graph(3)
    t = bellman_ford(g, [1], 1, "out", CFG, Metrics())
    assert 3 not in t.dist[1]
    assert t.dist[1][2] == 1


def test_bf_shortcut_two_hops():
    g = Graph(3, True, ((1, 2, 1), (1, 3, 5), (2, 3, 1)))
    t = bellman_ford(g, [1], 2, "out", CFG, Metrics())
    assert t.dist[1][3] == 2
    assert t.parent[1][3] == 2


def test_bf_round_accounting():
    g = path_graph(5)
    m = Metrics()
    bellman_ford(g, [1, 3], 4, "out", CFG, m)
    assert m.phases[-1]["rounds"] == 2 * 4  # h rounds per source


@pytest.mark.parametrize("seed", range(10))
def test_bf_matches_h_hop_oracle(seed):
    g = gnp_graph(10, 0.35, 6, seed=seed, directed=(seed % 2 == 0))
    for h in (1, 2, 3, 4):
        t = bellman_ford(g, list(g.node_ids()), h, "out", CFG, Metrics())
        for s in g.node_ids():
            want = oracle.h_hop_distances(g, s, h)
            for v in g.node_ids():
                got = t.dist[s].get(v, INF)
                assert got == want[v], (s, v, h)


def test_bf_in_direction():
    g = Graph(3, True, ((1, 2, 1), (2, 3, 1)))
    t = bellman_ford(g, [3], 2, "in", CFG, Metrics())
    # distances TO node 3
    assert t.dist[3][1] == 2 and t.dist[3][2] == 1
    assert t.parent[3][1] == 2  # next hop toward the root


def test_csssp_p3():
    g = path_graph(3)
    t = build_csssp(g, [1, 2, 3], 1, "out", CFG, Metrics())
    assert sorted(t.dist[1]) == [1, 2]
    assert sorted(t.dist[2]) == [1, 2, 3]
    assert sorted(t.dist[3]) == [2, 3]


def test_csssp_shortcut_omits_far_node():
    g = Graph(3, True, ((1, 2, 1), (1, 3, 5), (2, 3, 1)))
    t = build_csssp(g, [1], 1, "out", CFG, Metrics())
    # delta_1(1,3)=5 > delta(1,3)=2, so node 3 is not forced into T_1;
    # the 2h-hop run reaches it at depth 2, which is truncated away.
    assert 3 not in t.dist[1]


def test_csssp_full_depth_equals_dijkstra():
    g = gnp_graph(9, 0.3, 5, seed=4, directed=True)
    t = build_csssp(g, list(g.node_ids()), g.n - 1, "out", CFG, Metrics())
    m = oracle.dijkstra_apsp(g)
    for s in g.node_ids():
        for v in g.node_ids():
            assert t.dist[s].get(v, INF) == m[s][v]


def test_csssp_rounds_2h_per_source():
    g = path_graph(4)
    m = Metrics()
    build_csssp(g, [1, 2], 2, "out", CFG, m)
    assert m.phases[0]["rounds"] == 2 * (2 * 2)


def test_remove_subtrees_noop():
    g = path_graph(3)
    t = build_csssp(g, [1], 2, "out", CFG, Metrics())
    before = t.to_json()
    remove_subtrees(t, set(), g, CFG, Metrics())
    assert t.to_json() == before


def test_remove_subtrees_chain():
    g = path_graph(3)
    t = bellman_ford(g, [1], 2, "out", CFG, Metrics())
    remove_subtrees(t, {2}, g, CFG, Metrics())
    assert t.parent[1][2] is None and t.parent[1][3] is None
    assert t.alive(1, 1)
    assert not t.alive(1, 2) and not t.alive(1, 3)


def sequential_survivors(t, src, z):
    kids = t.children_map(src)
    dead = set()
    stack = [v for v in z if t.alive(src, v)]
    while stack:
        v = stack.pop()
        if v in dead:
            continue
        dead.add(v)
        stack.extend(kids.get(v, ()))
    # removing the root detaches its children; the root node itself stays as
    # a childless tree root (its parent was NIL to begin with)
    return {v for v in t.members(src) if v not in dead or v == src}


@pytest.mark.parametrize("seed", range(5))
def test_remove_subtrees_matches_sequential(seed):
    rng = random.Random(seed)
    g = gnp_graph(12, 0.3, 4, seed=seed)
    t = build_csssp(g, list(g.node_ids()), 3, "out", CFG, Metrics())
    z = set(rng.sample(range(1, 13), 3))
    want = {s: sequential_survivors(t, s, z) for s in t.sources}
    remove_subtrees(t, z, g, CFG, Metrics())
    for s in t.sources:
        assert set(t.members(s)) == want[s]
        # no node without a z-ancestor was disconnected
        for v in want[s]:
            assert t.alive(s, v)


def test_collect_ancestors_examples():
    g = path_graph(3)
    t = bellman_ford(g, [1], 2, "out", CFG, Metrics())
    anc = collect_ancestors(t, 1, g, CFG, Metrics())
    assert anc[1] == [1]
    assert anc[3] == [1, 2, 3]


@pytest.mark.parametrize("seed", range(5))
def test_collect_ancestors_matches_walk(seed):
    g = gnp_graph(11, 0.35, 5, seed=seed)
    t = build_csssp(g, [1], 4, "out", CFG, Metrics())
    anc = collect_ancestors(t, 1, g, CFG, Metrics())
    for v in t.members(1):
        chain = [v]
        cur = v
        while cur != 1:
            cur = t.parent[1][cur]
            chain.append(cur)
        assert anc[v] == chain[::-1]


def test_consistency_report_runs():
    g = gnp_graph(10, 0.4, 3, seed=8)
    t = build_csssp(g, list(g.node_ids()), 2, "out", CFG, Metrics())
    report = consistency_report(t)
    assert isinstance(report, list)
    for item in report:
        assert item["kind"] in ("out_tree_union", "in_tree_union")


def test_tree_json_dump():
    g = path_graph(3)
    t = bellman_ford(g, [1], 2, "out", CFG, Metrics())
    s = t.to_json()
    assert '"parent"' in s and '"dist"' in s
