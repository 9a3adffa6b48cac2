import pytest

from congest_apsp import oracle
from congest_apsp.blocker import Params
from congest_apsp.csssp import bellman_ford, build_csssp
from congest_apsp.engine import EngineConfig, Metrics, build_bfs_tree
from congest_apsp.graphs import INF, Graph, gnp_graph, path_graph, star_graph
from congest_apsp.qsink import (
    QSinkParams,
    case1_long_range,
    case2_short_range,
    compute_bottleneck,
    compute_count,
    default_qsink_params,
    plain_round_robin,
    staged_frames,
)

CFG = EngineConfig()
P = Params()


def test_default_params_shape():
    qp = default_qsink_params(48, 10)
    assert qp.H == 14  # smallest k with k^3 >= 48^2
    assert qp.L == 6
    assert qp.T == 48 * 8  # ceil(sqrt(10 * 6)) = 8
    assert qp.frames_per_stage(0) == qp.H * qp.L + qp.H


def test_compute_count_chain():
    g = path_graph(3)
    t = build_csssp(g, [3], 2, "in", CFG, Metrics())
    counts = compute_count(g, t, 3, CFG, Metrics())
    assert counts[1] == 1 and counts[2] == 2 and counts[3] == 3


def test_compute_count_outside_tree_zero():
    g = Graph(3, True, ((1, 2, 1), (1, 3, 1)))
    t = build_csssp(g, [2], 1, "in", CFG, Metrics())
    counts = compute_count(g, t, 2, CFG, Metrics())
    assert counts[3] == 0


def sequential_subtree_sizes(t, src):
    kids = t.children_map(src)
    sizes = {}

    def walk(v):
        s = 1
        for k in kids.get(v, ()):
            s += walk(k)
        sizes[v] = s
        return s

    walk(src)
    return sizes


@pytest.mark.parametrize("seed", range(4))
def test_compute_count_matches_dfs(seed):
    g = gnp_graph(12, 0.3, 5, seed=seed)
    t = build_csssp(g, [1], 3, "in", CFG, Metrics())
    counts = compute_count(g, t, 1, CFG, Metrics())
    want = sequential_subtree_sizes(t, 1)
    for v in g.node_ids():
        assert counts[v] == want.get(v, 0)


def test_bottleneck_empty_when_threshold_large():
    g = path_graph(4)
    t = build_csssp(g, [1, 4], 3, "in", CFG, Metrics())
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    b, totals = compute_bottleneck(g, t, 10**6, CFG, m, tree)
    assert b == []


def test_bottleneck_star_picks_center():
    g = star_graph(5)
    t = build_csssp(g, [1], 1, "in", CFG, Metrics())
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    # center holds the whole tree: total 5; leaves 1 each
    b, totals = compute_bottleneck(g, t, 1, CFG, m, tree)
    assert b[0] == 1
    assert all(v <= 1 for v in totals.values())


@pytest.mark.parametrize("seed", range(4))
def test_bottleneck_postconditions(seed):
    g = gnp_graph(14, 0.3, 4, seed=seed)
    t = build_csssp(g, list(range(1, 6)), 3, "in", CFG, Metrics())
    n_tot = sum(len(t.members(c)) for c in t.sources)
    threshold = 4
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    b, totals = compute_bottleneck(g, t, threshold, CFG, m, tree)
    assert max(totals.values()) <= threshold
    assert len(b) <= -(-n_tot // threshold)


# --- routing -------------------------------------------------------------------

def route_fixture(seed=0, n=10, h=3, sinks=(1, 2)):
    g = gnp_graph(n, 0.4, 4, seed=seed)
    t = build_csssp(g, list(sinks), h, "in", CFG, Metrics())
    d = oracle.dijkstra_apsp(g)
    values = {x: {c: d[x][c] for c in sinks} for x in g.node_ids()}
    return g, t, values


def test_staged_empty_queues():
    g, t, values = route_fixture()
    # strip all members except the roots
    for c in t.sources:
        t.parent[c] = {c: None}
        t.depth[c] = {c: 0}
        t.dist[c] = {c: 0}
    m = Metrics()
    qp = default_qsink_params(g.n, len(t.sources))
    deliveries = staged_frames(g, t, values, qp, CFG, m)
    assert all(not v for v in deliveries.values())
    assert m.stage_trace == []


def test_staged_chain_delivery():
    g = path_graph(5)
    t = build_csssp(g, [1], 4, "in", CFG, Metrics())
    d = oracle.dijkstra_apsp(g)
    values = {x: {1: d[x][1]} for x in g.node_ids()}
    m = Metrics()
    qp = default_qsink_params(g.n, 1)
    deliveries = staged_frames(g, t, values, qp, CFG, m)
    assert sorted(deliveries[1]) == [(2, 1), (3, 2), (4, 3), (5, 4)]
    # whole chain fits in the first stage
    assert len(m.stage_trace) == 1


@pytest.mark.parametrize("seed", range(5))
def test_schedules_agree(seed):
    g, t, values = route_fixture(seed=seed, n=12, h=4, sinks=(1, 2, 3))
    qp = default_qsink_params(g.n, 3)
    staged = staged_frames(g, t.copy(), values, qp, CFG, Metrics())
    plain = plain_round_robin(g, t.copy(), values, CFG, Metrics())
    for c in t.sources:
        assert sorted(staged[c]) == sorted(plain[c])


def test_staged_tight_threshold_multi_stage():
    # small frame budget comes from a tiny H override: forces several stages
    g = path_graph(6)
    t = build_csssp(g, [1], 5, "in", CFG, Metrics())
    d = oracle.dijkstra_apsp(g)
    values = {x: {1: d[x][1]} for x in g.node_ids()}
    qp = QSinkParams(H=5, T=30, L=1, stage_cap=8)
    m = Metrics()
    deliveries = staged_frames(g, t, values, qp, CFG, m)
    assert sorted(deliveries[1]) == sorted((x, d[x][1]) for x in range(2, 7))


# --- the two cases -------------------------------------------------------------

def test_case1_long_path():
    g = path_graph(8)
    d = oracle.dijkstra_apsp(g)
    hops = oracle.shortest_path_hops(g)
    q = [8]
    qp = default_qsink_params(g.n, len(q), h_override=2)
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    tables, cq, qprime = case1_long_range(g, q, qp, P, "deterministic", 0,
                                          CFG, m, tree, d, hops)
    for x in g.node_ids():
        if hops[x][8] > 2:
            assert tables[8][x] == d[x][8]


def test_case1_no_long_pairs():
    g = star_graph(6)
    d = oracle.dijkstra_apsp(g)
    hops = oracle.shortest_path_hops(g)
    q = [1]
    qp = default_qsink_params(g.n, 1)
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    tables, cq, qprime = case1_long_range(g, q, qp, P, "deterministic", 0,
                                          CFG, m, tree, d, hops)
    assert qprime == []  # depth never reaches H


@pytest.mark.parametrize("seed", range(6))
def test_case1_random_sparse(seed):
    g = gnp_graph(12, 0.16, 5, seed=seed, directed=(seed % 2 == 0))
    d = oracle.dijkstra_apsp(g)
    hops = oracle.shortest_path_hops(g)
    q = sorted(set([1 + seed % 4, 5, 9]))
    qp = default_qsink_params(g.n, len(q), h_override=2)
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    tables, _, _ = case1_long_range(g, q, qp, P, "deterministic", seed, CFG, m,
                                    tree, d, hops)
    for c in q:
        for x in g.node_ids():
            if hops[x][c] > 2:
                assert tables[c][x] == d[x][c]


@pytest.mark.parametrize("schedule", ["plain", "staged"])
def test_case2_delivers_short_range(schedule):
    g = gnp_graph(12, 0.3, 5, seed=3)
    d = oracle.dijkstra_apsp(g)
    hops = oracle.shortest_path_hops(g)
    q = [2, 7]
    qp = default_qsink_params(g.n, len(q))
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    cq = build_csssp(g, q, qp.H, "in", CFG, m)
    values = {x: {c: d[x][c] for c in q} for x in g.node_ids()}
    tables, b = case2_short_range(g, q, cq, values, qp, schedule, CFG, m, tree)
    for c in q:
        for x in g.node_ids():
            if x != c and hops[x][c] <= qp.H:
                assert tables[c][x] == d[x][c], (x, c)


def test_case2_forced_bottleneck():
    # tiny threshold so B is nonempty, then routing still completes
    g = gnp_graph(10, 0.4, 3, seed=5)
    d = oracle.dijkstra_apsp(g)
    q = [1, 4]
    qp = QSinkParams(H=6, T=3, L=4, stage_cap=8)
    m = Metrics()
    tree = build_bfs_tree(g, 1, CFG, m)
    cq = build_csssp(g, q, qp.H, "in", CFG, m)
    values = {x: {c: d[x][c] for c in q} for x in g.node_ids()}
    tables, b = case2_short_range(g, q, cq, values, qp, "staged", CFG, m, tree)
    assert b  # threshold low enough to trigger removals
    hops = oracle.shortest_path_hops(g)
    for c in q:
        for x in g.node_ids():
            if x != c and hops[x][c] <= qp.H:
                assert tables[c][x] == d[x][c]
