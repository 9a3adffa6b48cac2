"""Hop-bounded Bellman-Ford trees and consistent SSSP collections.

A TreeCollection stores, per source, the rooted tree produced by h rounds of
distributed Bellman-Ford: parent pointer, hop depth, and distance label for
every reached node. "out" trees hold paths source->v; "in" trees hold paths
v->source (relaxation on the reversed graph). Relaxation tie-break is the
lexicographic minimum of (distance, hop depth, predecessor id), which pins a
canonical tree per source.

The consistent collection is built by running 2h hops and keeping only nodes
whose hop depth is at most h; a kept node keeps its 2h-hop distance label.
Containment is verified against the sequential oracles on every build: any
node with a <=h-hop path of full shortest-path weight must appear, at that
weight. Cross-tree path consistency is only reported (see consistency_report),
never enforced.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import oracle
from .engine import EngineConfig, Metrics, NodeProgram, run_phase
from .errors import OracleMismatchError, RoundAccountingError, SimulationError
from .graphs import INF, Graph


@dataclass
class TreeCollection:
    sources: list[int]
    direction: str  # "out" or "in"
    h: int
    parent: dict[int, dict[int, int | None]] = field(default_factory=dict)
    depth: dict[int, dict[int, int]] = field(default_factory=dict)
    dist: dict[int, dict[int, int]] = field(default_factory=dict)

    def alive(self, src: int, v: int) -> bool:
        """v is in src's tree: it is the root or still has a parent pointer."""
        if v == src:
            return v in self.parent[src]
        return self.parent[src].get(v) is not None

    def members(self, src: int) -> list[int]:
        return sorted(v for v in self.parent[src] if self.alive(src, v))

    def children_map(self, src: int) -> dict[int, list[int]]:
        kids: dict[int, list[int]] = {v: [] for v in self.parent[src]}
        for v in self.members(src):
            p = self.parent[src][v]
            if p is not None:
                kids[p].append(v)
        for v in kids:
            kids[v].sort()
        return kids

    def copy(self) -> "TreeCollection":
        return TreeCollection(
            list(self.sources), self.direction, self.h,
            {s: dict(m) for s, m in self.parent.items()},
            {s: dict(m) for s, m in self.depth.items()},
            {s: dict(m) for s, m in self.dist.items()},
        )

    def to_json(self) -> str:
        data = {
            str(s): {
                str(v): {"parent": self.parent[s][v], "depth": self.depth[s][v],
                         "dist": self.dist[s][v]}
                for v in sorted(self.parent[s])
            }
            for s in self.sources
        }
        return json.dumps(data, sort_keys=True)


_PRED_NONE = INF  # predecessor slot of an unreached label


class _BellmanFordNode(NodeProgram):
    def __init__(self, v, source, fwd, weight_from, budget):
        self.v = v
        self.fwd = fwd                    # neighbors my label relaxes
        self.weight_from = weight_from    # sender -> edge weight toward me
        self.budget = budget
        if v == source:
            self.label = (0, 0, _PRED_NONE)
        else:
            self.label = (INF, INF, _PRED_NONE)
        self.is_source = v == source

    def setup(self):
        if self.is_source and self.fwd:
            return [(t, (self.label[0], self.label[1])) for t in self.fwd]
        return None

    def step(self, r, inbox):
        best = self.label
        for sender, msg in inbox:
            w = self.weight_from.get(sender)
            if w is None:
                continue
            cand = (msg[0] + w, msg[1] + 1, sender)
            if cand < best:
                best = cand
        if best is not self.label:
            self.label = best
            if r < self.budget and self.fwd:
                return [(t, (best[0], best[1])) for t in self.fwd]
        return None


def bellman_ford(g: Graph, sources: list[int], h: int, direction: str,
                 cfg: EngineConfig, metrics: Metrics,
                 name: str = "bellman_ford") -> TreeCollection:
    """h-hop SSSP trees, one per source, run sequentially: h rounds each."""
    if not sources:
        raise SimulationError("bellman_ford needs at least one source")
    rel = g if direction == "out" else g.reversed()
    trees = TreeCollection(list(sources), direction, h)
    total_rounds = 0
    total_msgs = 0
    for src in sources:
        programs = {}
        for v in g.node_ids():
            fwd = tuple(t for t, _ in rel.out_edges(v))
            weight_from = {u: w for u, w in rel.in_edges(v)}
            programs[v] = _BellmanFordNode(v, src, fwd, weight_from, h)
        rounds, msgs = run_phase(g, programs, cfg, metrics, f"{name}/src={src}",
                                 budget=h, record=False)
        if rounds != h:
            raise RoundAccountingError(f"bellman_ford ran {rounds} != {h} rounds")
        total_rounds += rounds
        total_msgs += msgs
        parent, depth, dist = {}, {}, {}
        for v in g.node_ids():
            d, hp, pred = programs[v].label
            if d is not INF and d != INF:
                parent[v] = None if v == src else pred
                depth[v] = hp
                dist[v] = d
        trees.parent[src] = parent
        trees.depth[src] = depth
        trees.dist[src] = dist
    metrics.add_phase(name, total_rounds, total_msgs)
    return trees


def build_csssp(g: Graph, sources: list[int], h: int, direction: str,
                cfg: EngineConfig, metrics: Metrics,
                name: str = "csssp") -> TreeCollection:
    """Height-h consistent collection: 2h-hop trees truncated at depth h.

    Hard-checked against the sequential oracles: kept distances equal the
    2h-hop oracle, and every node with a <=h-hop path of full shortest-path
    weight is present at exactly that weight.
    """
    if h < 1:
        raise SimulationError("csssp needs h >= 1")
    full = bellman_ford(g, sources, 2 * h, direction, cfg, metrics, name)
    rel = g if direction == "out" else g.reversed()
    wmap = {}
    for u in rel.node_ids():
        for v, w in rel.out_edges(u):
            wmap[(u, v)] = w
    for src in sources:
        # Retain depth <= h, but only along intact chains: a node whose stored
        # parent label does not telescope adopted a path its parent has since
        # replaced (possible only via a last-round improvement, which puts the
        # parent beyond depth h anyway). Pruning such nodes never violates the
        # containment clause checked below.
        keep: set[int] = set()
        by_depth = sorted(full.depth[src].items(), key=lambda kv: kv[1])
        for v, d in by_depth:
            if d > h:
                continue
            if v == src:
                keep.add(v)
                continue
            p = full.parent[src][v]
            if (p in keep
                    and full.depth[src][p] == d - 1
                    and full.dist[src][p] == full.dist[src][v] - wmap[(p, v)]):
                keep.add(v)
        full.parent[src] = {v: p for v, p in full.parent[src].items() if v in keep}
        full.depth[src] = {v: d for v, d in full.depth[src].items() if v in keep}
        full.dist[src] = {v: d for v, d in full.dist[src].items() if v in keep}

        d2h = oracle.h_hop_distances(rel, src, 2 * h)
        drow = oracle.dijkstra_row(rel, src)
        dh = oracle.h_hop_distances(rel, src, h)
        for v, d in full.dist[src].items():
            if d != d2h[v]:
                raise OracleMismatchError(
                    f"csssp dist[{src}][{v}] = {d}, oracle 2h-hop {d2h[v]}")
        for v in g.node_ids():
            if dh[v] == drow[v] and drow[v] is not INF and dh[v] != INF:
                if v not in full.dist[src] or full.dist[src][v] != drow[v]:
                    raise OracleMismatchError(
                        f"csssp tree {src} must contain {v} at {drow[v]}")
    full.h = h
    return full


class _RemoveNode(NodeProgram):
    def __init__(self, v, in_z, kids, parent):
        self.v = v
        self.in_z = in_z
        self.kids = kids
        self.parent = parent
        self.removed = False

    def setup(self):
        if self.in_z:
            self.removed = True
            return [(t, (0,)) for t in self.kids]
        return None

    def step(self, r, inbox):
        for sender, _ in inbox:
            if sender == self.parent and not self.removed:
                self.removed = True
                return [(t, (0,)) for t in self.kids]
        return None


def remove_subtrees(trees: TreeCollection, z: set[int], g: Graph,
                    cfg: EngineConfig, metrics: Metrics,
                    name: str = "remove_subtrees",
                    spare_roots: bool = False) -> TreeCollection:
    """Detach every z in Z and all its descendants, in every tree, in place.

    With spare_roots=True a z does not act on the tree it roots: blocker
    selection covers a path only through its non-root nodes, so a selected
    node must leave its own tree's paths for later selections.
    """
    if not z:
        return trees
    total_rounds = 0
    total_msgs = 0
    for src in trees.sources:
        kids = trees.children_map(src)
        programs = {}
        members = set(trees.members(src))
        for v in g.node_ids():
            if v in members:
                acts = v in z and not (spare_roots and v == src)
                programs[v] = _RemoveNode(v, acts, tuple(kids.get(v, ())),
                                          trees.parent[src].get(v))
        rounds, msgs = run_phase(g, programs, cfg, metrics, f"{name}/src={src}",
                                 budget=trees.h, record=False)
        total_rounds += rounds
        total_msgs += msgs
        for v, prog in programs.items():
            if prog.removed and v != src:
                trees.parent[src][v] = None
    metrics.add_phase(name, total_rounds, total_msgs)
    return trees


class _AncestorNode(NodeProgram):
    # Streams the root-to-node id list downward: each node forwards received
    # ids in order, then appends its own id once its prefix is complete.
    def __init__(self, v, src, depth, kids):
        self.v = v
        self.is_root = v == src
        self.depth = depth
        self.kids = kids
        self.chain = [src] if self.is_root else []
        self.own_round = 2 * depth if depth is not None else None

    def setup(self):
        if self.is_root and self.kids:
            return [(t, (self.v,)) for t in self.kids]
        return None

    def step(self, r, inbox):
        out = []
        for _, msg in inbox:
            self.chain.append(msg[0])
            out.extend((t, msg) for t in self.kids)
        if not self.is_root and r == self.own_round and self.kids:
            out.extend((t, (self.v,)) for t in self.kids)
        return out

    def next_wake(self, r):
        if self.is_root or not self.kids or self.own_round is None:
            return None
        return self.own_round if r < self.own_round else None


def collect_ancestors(trees: TreeCollection, src: int, g: Graph,
                      cfg: EngineConfig, metrics: Metrics,
                      name: str = "collect_ancestors") -> dict[int, list[int]]:
    """At each tree node v, the id list of the root-to-v path (root first)."""
    kids = trees.children_map(src)
    programs = {}
    for v in trees.members(src):
        programs[v] = _AncestorNode(v, src, trees.depth[src].get(v),
                                    tuple(kids.get(v, ())))
    rounds, _ = run_phase(g, programs, cfg, metrics, name, budget=2 * trees.h)
    result = {}
    for v, prog in programs.items():
        chain = prog.chain if prog.is_root else prog.chain + [v]
        if len(chain) != trees.depth[src][v] + 1:
            raise SimulationError(
                f"ancestor list at {v} incomplete: {chain} depth {trees.depth[src][v]}")
        result[v] = chain
    if rounds > 2 * trees.h:
        raise RoundAccountingError(f"collect_ancestors took {rounds} > {2 * trees.h}")
    return result


def consistency_report(trees: TreeCollection) -> list[dict]:
    """Soft cross-tree checks: subtree unions below any node should form an
    out-tree (one parent per node), and root-to-node path unions an in-tree
    (one successor per node). Returns violation records; never raises."""
    # parent/successor sets keyed by (anchor node c, tree node v)
    parent_seen: dict[tuple[int, int], set] = {}
    succ_seen: dict[tuple[int, int], set] = {}
    for src in trees.sources:
        kids = trees.children_map(src)
        par = trees.parent[src]
        for c in trees.members(src):
            stack = list(kids.get(c, ()))
            while stack:
                v = stack.pop()
                parent_seen.setdefault((c, v), set()).add(par[v])
                stack.extend(kids.get(v, ()))
            cur = c
            while cur != src:
                p = par[cur]
                succ_seen.setdefault((c, p), set()).add(cur)
                cur = p
    failures = []
    for (c, v), ps in sorted(parent_seen.items()):
        if len(ps) > 1:
            failures.append({"kind": "out_tree_union", "at": c, "node": v,
                             "parents": sorted(ps)})
    for (c, v), ss in sorted(succ_seen.items()):
        if len(ss) > 1:
            failures.append({"kind": "in_tree_union", "at": c, "node": v,
                             "successors": sorted(ss)})
    return failures
