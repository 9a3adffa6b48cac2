"""Sequential ground truth used to verify every distributed result.

All functions here are pure and run at desk scale (n up to a few hundred).
Distance matrices are (n+1) x (n+1) lists indexed from 1; row/column 0 is
unused. Unreachable entries hold math.inf; everything else is an exact int.
"""
from __future__ import annotations

import heapq

from .graphs import INF, Graph


def dijkstra_row(g: Graph, s: int) -> list:
    """Exact distances from s to every node (index 0 unused)."""
    dist = [INF] * (g.n + 1)
    dist[s] = 0
    heap = [(0, s)]
    done = [False] * (g.n + 1)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in g.out_edges(u):
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def dijkstra_apsp(g: Graph) -> list:
    """matrix[u][v] = exact shortest-path distance from u to v."""
    return [None] + [dijkstra_row(g, s) for s in g.node_ids()]


def shortest_path_hops(g: Graph) -> list:
    """hops[u][v] = fewest edges on any minimum-weight u->v path (inf if none)."""
    out = [None]
    for s in g.node_ids():
        label = [(INF, INF)] * (g.n + 1)
        label[s] = (0, 0)
        heap = [(0, 0, s)]
        done = [False] * (g.n + 1)
        while heap:
            d, hp, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            for v, w in g.out_edges(u):
                cand = (d + w, hp + 1)
                if cand < label[v]:
                    label[v] = cand
                    heapq.heappush(heap, (cand[0], cand[1], v))
        out.append([hp for _, hp in label])
    return out


def h_hop_distances(g: Graph, s: int, h: int) -> list:
    """delta_h(s, v): minimum weight over paths with at most h edges."""
    if h < 0:
        raise ValueError("hop count must be nonnegative")
    dist = [INF] * (g.n + 1)
    dist[s] = 0
    for _ in range(h):
        nxt = dist[:]
        changed = False
        for u in g.node_ids():
            du = dist[u]
            if du is INF:
                continue
            for v, w in g.out_edges(u):
                nd = du + w
                if nd < nxt[v]:
                    nxt[v] = nd
                    changed = True
        dist = nxt
        if not changed:
            break
    return dist


def min_plus_closure(m: list[list]) -> list[list]:
    """Transitive min-plus closure of a square matrix with zero diagonal."""
    k = len(m)
    out = [row[:] for row in m]
    for mid in range(k):
        row_mid = out[mid]
        for i in range(k):
            via = out[i][mid]
            if via is INF or via == INF:
                continue
            row_i = out[i]
            for j in range(k):
                cand = via + row_mid[j]
                if cand < row_i[j]:
                    row_i[j] = cand
    return out


def min_plus_square(m: list[list]) -> list[list]:
    k = len(m)
    return [[min(min(m[i][t] + m[t][j] for t in range(k)), m[i][j]) for j in range(k)]
            for i in range(k)]


def closure_by_squaring(m: list[list]) -> list[list]:
    """Independent oracle for min_plus_closure: repeated min-plus squaring."""
    cur = [row[:] for row in m]
    steps = max(1, len(m)).bit_length()
    for _ in range(steps):
        cur = min_plus_square(cur)
    return cur


# ---------------------------------------------------------------------------
# tree-collection path oracles
#
# "Paths" always means root-to-leaf tree paths of depth exactly h; shallower
# chains never count. These run directly on TreeCollection state.
# ---------------------------------------------------------------------------

def depth_h_paths(trees, h: int) -> list[tuple[int, ...]]:
    """Every depth-exactly-h root-to-leaf path, as a node tuple root..leaf."""
    paths = []
    for src in trees.sources:
        parent = trees.parent[src]
        depth = trees.depth[src]
        for v, d in sorted(depth.items()):
            if d != h or not trees.alive(src, v):
                continue
            chain = [v]
            cur = v
            while cur != src:
                cur = parent[cur]
                chain.append(cur)
            chain.reverse()
            paths.append(tuple(chain))
    return paths


def count_paths_through(trees, h: int, v: int) -> int:
    """Number of depth-h root-to-leaf tree paths containing v."""
    return sum(1 for p in depth_h_paths(trees, h) if v in p)


def greedy_blocker(trees, h: int) -> list[int]:
    """Greedy cover of all depth-h tree paths: max coverage, ties by lowest id."""
    paths = [set(p) for p in depth_h_paths(trees, h)]
    chosen: list[int] = []
    uncovered = list(range(len(paths)))
    while uncovered:
        counts: dict[int, int] = {}
        for idx in uncovered:
            for v in paths[idx]:
                counts[v] = counts.get(v, 0) + 1
        best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))[0]
        chosen.append(best)
        uncovered = [idx for idx in uncovered if best not in paths[idx]]
    return chosen
