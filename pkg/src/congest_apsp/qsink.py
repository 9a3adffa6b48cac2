"""Reversed q-sink delivery: get delta(x, c) from every source x to every
blocker node c.

Long-range pairs (more than H hops on a min-hop shortest path) are handled by
building a second blocker set over the H-hop in-trees of Q, computing full
shortest-path trees from that small set, and broadcasting; short-range pairs
are handled by first removing bottleneck nodes (whose pending-message load
exceeds the threshold T) and broadcasting through them, then routing every
remaining value up the pruned in-trees under a round-robin schedule.

The staged schedule partitions routing into stages; within a stage each node
cycles one send slot per pending blocker destination per frame. Progress is
instrumented: by frame f a node at depth d in c's tree must have forwarded
min(everything routed through it this stage, f - (H - d)) messages for c, and
the pending-destination sets must shrink geometrically across stages. The
plain schedule simply cycles destinations one send per round; both must
deliver identical multisets.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from . import oracle
from .blocker import Params, run_blocker
from .csssp import TreeCollection, bellman_ford, build_csssp, remove_subtrees
from .engine import BfsTree, EngineConfig, Metrics, NodeProgram, all_to_all_broadcast, \
    run_phase
from .errors import InternalConsistencyError, RoundAccountingError, SimulationError
from .graphs import INF, Graph


def _ceil_sqrt(x: int) -> int:
    if x <= 0:
        return 0
    return math.isqrt(x - 1) + 1


def _ceil_log2(n: int) -> int:
    return max(1, (n - 1).bit_length())


def _ceil_n23(n: int) -> int:
    k = 1
    while k * k * k < n * n:
        k += 1
    return k


@dataclass(frozen=True)
class QSinkParams:
    H: int          # hop bound of the Q-rooted in-trees
    T: int          # congestion threshold for bottleneck removal
    L: int          # ceil(log2 n)
    stage_cap: int

    def frames_per_stage(self, i: int) -> int:
        return self.H * self.L ** (i + 1) + self.H


def default_qsink_params(n: int, q_size: int, h_override: int | None = None,
                         t_override: int | None = None) -> QSinkParams:
    H = h_override if h_override is not None else min(_ceil_n23(n), n - 1)
    L = _ceil_log2(n)
    T = t_override if t_override is not None else n * _ceil_sqrt(q_size * L)
    return QSinkParams(H=H, T=max(1, T), L=L, stage_cap=_ceil_log2(n + 2) + 1)


# ---------------------------------------------------------------------------
# message counts and bottleneck removal
# ---------------------------------------------------------------------------

class _SubtreeCount(NodeProgram):
    # send at round h - depth + 1; every tree node starts at 1
    def __init__(self, v, parent, depth, h):
        self.parent = parent
        self.send_round = h - depth + 1
        self.count = 1

    def step(self, r, inbox):
        for _, msg in inbox:
            self.count += msg[0]
        if self.parent is not None and r == self.send_round:
            return [(self.parent, (self.count,))]
        return None

    def next_wake(self, r):
        if self.parent is None:
            return None
        return self.send_round if r < self.send_round else None


def compute_count(g: Graph, trees: TreeCollection, c: int, cfg: EngineConfig,
                  metrics: Metrics, name: str = "compute_count",
                  record: bool = True) -> dict[int, int]:
    """count[v] = nodes in v's subtree of c's tree (v included); 0 outside."""
    h = trees.h
    programs = {}
    for v in trees.members(c):
        programs[v] = _SubtreeCount(v, trees.parent[c][v] if v != c else None,
                                    trees.depth[c][v], h)
    rounds, msgs = run_phase(g, programs, cfg, metrics, name, budget=h + 1,
                             record=record)
    if rounds != h + 1:
        raise RoundAccountingError(f"compute_count ran {rounds} != {h + 1}")
    counts = {v: 0 for v in g.node_ids()}
    for v, p in programs.items():
        counts[v] = p.count
    return counts


def compute_bottleneck(g: Graph, trees: TreeCollection, t_threshold: int,
                       cfg: EngineConfig, metrics: Metrics, tree: BfsTree,
                       name: str = "bottleneck") -> tuple[list[int], dict[int, int]]:
    """Remove max-load nodes until every node's pending total is <= T.

    Mutates `trees` (subtree removal). Returns (B, final totals). Postconditions
    checked: totals bounded by T, and |B| <= ceil(total tree nodes / T).
    """
    counts = {c: compute_count(g, trees, c, cfg, metrics, f"{name}/count[{c}]")
              for c in trees.sources}
    totals = {v: sum(counts[c][v] for c in trees.sources) for v in g.node_ids()}
    n_tot = sum(len(trees.members(c)) for c in trees.sources)

    b: list[int] = []
    while True:
        got = all_to_all_broadcast(g, {v: [(v, totals[v])] for v in g.node_ids()},
                                   cfg, metrics, tree=tree, name=f"{name}/totals")
        worst = max(got, key=lambda pair: (pair[1], -pair[0]))
        if worst[1] <= t_threshold:
            break
        node = worst[0]
        b.append(node)
        if len(b) > g.n:
            raise InternalConsistencyError("bottleneck loop exceeded n iterations")
        affected = [c for c in trees.sources if counts[c].get(node, 0) > 0]
        remove_subtrees(trees, {node}, g, cfg, metrics, f"{name}/remove")
        for c in affected:
            counts[c] = compute_count(g, trees, c, cfg, metrics,
                                      f"{name}/recount[{c}]")
        totals = {v: sum(counts[c][v] for c in trees.sources) for v in g.node_ids()}

    if any(t > t_threshold for t in totals.values()):
        raise InternalConsistencyError("bottleneck exit with load above threshold")
    if b and len(b) > -(-n_tot // t_threshold):
        raise InternalConsistencyError(
            f"|B|={len(b)} exceeds ceil(N_tot/T)={-(-n_tot // t_threshold)}")
    return b, totals


# ---------------------------------------------------------------------------
# case (i): long-range pairs via a second blocker set
# ---------------------------------------------------------------------------

def case1_long_range(g: Graph, q_nodes: list[int], qp: QSinkParams,
                     bl_params: Params, mode: str, seed: int,
                     cfg: EngineConfig, metrics: Metrics, tree: BfsTree,
                     dist_oracle: list, hops_oracle: list,
                     name: str = "case1") -> tuple[dict, TreeCollection, list[int]]:
    """Values delta(x, c) for all pairs with hops(x, c) > H.

    Builds the H-hop in-tree collection for Q (returned for reuse by the
    short-range case), covers it with a second blocker set Q', computes full
    shortest paths from each member, and folds broadcast values at each c.
    """
    cq = build_csssp(g, q_nodes, qp.H, "in", cfg, metrics, name + "/cq")
    qprime = run_blocker(g, cq, bl_params, mode, seed, cfg, metrics,
                         name + "/blocker").q

    into = {}   # c' -> dist[x] = delta(x, c')
    outof = {}  # c' -> dist[t] = delta(c', t)
    for cp in qprime:
        t_in = bellman_ford(g, [cp], g.n - 1, "in", cfg, metrics, name + "/in_sssp")
        t_out = bellman_ford(g, [cp], g.n - 1, "out", cfg, metrics, name + "/out_sssp")
        into[cp] = t_in.dist[cp]
        outof[cp] = t_out.dist[cp]

    values = {}
    for x in g.node_ids():
        values[x] = [(x, cp, into[cp].get(x, INF)) for cp in qprime]
    got = all_to_all_broadcast(g, values, cfg, metrics, tree=tree,
                               name=name + "/bcast")
    heard: dict[int, dict[int, int]] = {}
    for x, cp, d in got:
        heard.setdefault(x, {})[cp] = d

    tables: dict[int, dict[int, float]] = {c: {} for c in q_nodes}
    for c in q_nodes:
        for x in g.node_ids():
            best = INF
            for cp in qprime:
                d1 = heard.get(x, {}).get(cp, INF)
                d2 = outof[cp].get(c, INF)
                if d1 + d2 < best:
                    best = d1 + d2
            tables[c][x] = best

    for c in q_nodes:
        for x in g.node_ids():
            if hops_oracle[x][c] > qp.H:  # includes unreachable pairs (inf)
                if tables[c][x] != dist_oracle[x][c]:
                    raise InternalConsistencyError(
                        f"long-range delta({x},{c}) = {tables[c][x]} != "
                        f"oracle {dist_oracle[x][c]}")
    return tables, cq, qprime


# ---------------------------------------------------------------------------
# case (ii): short-range pairs via bottleneck removal + tree routing
# ---------------------------------------------------------------------------

class _StagedRoute(NodeProgram):
    def __init__(self, v, order, pend, parents, frame_len, total_rounds):
        self.v = v
        self.order = order              # fixed slot order for this stage
        self.pend = pend                # c -> deque[(x, d)]
        self.parents = parents          # c -> parent of v in c's tree
        self.frame_len = frame_len
        self.total_rounds = total_rounds
        self.deliveries = []            # messages addressed to v itself
        self.sent_frames = {c: [] for c in order}
        self.arrived = {c: 0 for c in order}

    def _absorb(self, inbox):
        batch: dict[int, list] = {}
        for _, msg in inbox:
            batch.setdefault(msg[0], []).append((msg[1], msg[2]))
        for c, items in batch.items():
            items.sort()
            if c == self.v:
                self.deliveries.extend(items)
            else:
                self.pend.setdefault(c, deque()).extend(items)
                if c in self.arrived:
                    self.arrived[c] += len(items)

    def step(self, r, inbox):
        self._absorb(inbox)
        if r > self.total_rounds:
            return None
        slot = (r - 1) % self.frame_len
        if slot < len(self.order):
            c = self.order[slot]
            dq = self.pend.get(c)
            if dq:
                x, d = dq.popleft()
                self.sent_frames[c].append((r - 1) // self.frame_len + 1)
                return [(self.parents[c], (c, x, d))]
        return None

    def next_wake(self, r):
        best = None
        for slot, c in enumerate(self.order):
            dq = self.pend.get(c)
            if not dq:
                continue
            delta = (slot + 1 - r) % self.frame_len
            cand = r + (delta if delta > 0 else self.frame_len)
            if best is None or cand < best:
                best = cand
        if best is None or best > self.total_rounds:
            return None
        return best


class _PlainRoute(NodeProgram):
    def __init__(self, v, order, pend, parents):
        self.v = v
        self.order = order              # full cyclic order of Q
        self.pend = pend
        self.parents = parents
        self.deliveries = []
        self.cursor = 0

    def _absorb(self, inbox):
        batch: dict[int, list] = {}
        for _, msg in inbox:
            batch.setdefault(msg[0], []).append((msg[1], msg[2]))
        for c, items in batch.items():
            items.sort()
            if c == self.v:
                self.deliveries.extend(items)
            else:
                self.pend.setdefault(c, deque()).extend(items)

    def step(self, r, inbox):
        self._absorb(inbox)
        for off in range(len(self.order)):
            idx = (self.cursor + off) % len(self.order)
            c = self.order[idx]
            dq = self.pend.get(c)
            if dq:
                x, d = dq.popleft()
                self.cursor = (idx + 1) % len(self.order)
                return [(self.parents[c], (c, x, d))]
        return None

    def next_wake(self, r):
        return r + 1 if any(self.pend.values()) else None


def _route_setup(g, trees, source_values):
    """Initial queues, per-(node, tree) parents, and the expected multisets."""
    pend = {v: {} for v in g.node_ids()}
    parents = {v: {} for v in g.node_ids()}
    expected = {c: [] for c in trees.sources}
    for c in trees.sources:
        for v in trees.members(c):
            if v == c:
                continue
            parents[v][c] = trees.parent[c][v]
            val = source_values[v][c]
            pend[v][c] = deque([(v, val)])
            expected[c].append((v, val))
    return pend, parents, expected


def staged_frames(g: Graph, trees: TreeCollection, source_values: dict,
                  qp: QSinkParams, cfg: EngineConfig, metrics: Metrics,
                  name: str = "staged") -> dict[int, list]:
    """Stage/frame round-robin delivery with instrumented progress checks."""
    pend, parents, expected = _route_setup(g, trees, source_values)
    deliveries = {c: [] for c in trees.sources}
    depths = trees.depth
    h_bound = qp.H

    stage = 0
    while True:
        q_vi = {v: sorted(c for c, dq in pend[v].items() if dq) for v in g.node_ids()}
        frame_len = max((len(s) for s in q_vi.values()), default=0)
        if frame_len == 0:
            break
        if stage >= qp.stage_cap:
            raise SimulationError(
                f"stage cap {qp.stage_cap} exceeded with pending messages")
        if stage >= 1:
            bound = max(1, -(-qp.T // (qp.H * qp.L ** stage)))
            for v, s in q_vi.items():
                if len(s) > bound:
                    raise InternalConsistencyError(
                        f"|Q_v,{stage}| = {len(s)} exceeds {bound} at node {v}")

        frames = qp.frames_per_stage(stage)
        total_rounds = frames * frame_len
        programs = {}
        start_pend = {v: {c: len(pend[v][c]) for c in q_vi[v]} for v in g.node_ids()}
        for v in g.node_ids():
            programs[v] = _StagedRoute(v, q_vi[v], pend[v], parents[v],
                                       frame_len, total_rounds)
        # one grace round past the frame budget so last-round sends land
        rounds, msgs = run_phase(g, programs, cfg, metrics,
                                 f"{name}/stage{stage}", budget=total_rounds + 1,
                                 exact=False)
        frames_run = min(frames, -(-rounds // frame_len)) if rounds else 0

        moved = 0
        for v in g.node_ids():
            prog = programs[v]
            for c in q_vi[v]:
                routed = start_pend[v][c] + prog.arrived[c]
                sent = prog.sent_frames[c]
                moved += len(sent)
                slack = h_bound - depths[c][v]
                done = 0
                for f in range(1, frames_run + 1):
                    while done < len(sent) and sent[done] <= f:
                        done += 1
                    need = min(routed, f - slack)
                    if need > 0 and done < need:
                        raise InternalConsistencyError(
                            f"frame progress violated at node {v}, sink {c}, "
                            f"frame {f}: sent {done} < {need}")
            if v in deliveries:
                deliveries[v].extend(prog.deliveries)

        metrics.stage_trace.append({
            "stage": stage, "max_Qvi": frame_len, "frames": frames_run,
            "messages_moved": moved,
        })
        stage += 1

    for c in trees.sources:
        if sorted(deliveries[c]) != sorted(expected[c]):
            raise InternalConsistencyError(
                f"staged delivery multiset mismatch at sink {c}")
    return deliveries


def plain_round_robin(g: Graph, trees: TreeCollection, source_values: dict,
                      cfg: EngineConfig, metrics: Metrics,
                      name: str = "plain") -> dict[int, list]:
    """One send per node per round, cycling blocker destinations."""
    pend, parents, expected = _route_setup(g, trees, source_values)
    order = sorted(trees.sources)
    programs = {v: _PlainRoute(v, order, pend[v], parents[v]) for v in g.node_ids()}
    run_phase(g, programs, cfg, metrics, name)
    deliveries = {c: list(programs[c].deliveries) for c in trees.sources}
    for c in trees.sources:
        if sorted(deliveries[c]) != sorted(expected[c]):
            raise InternalConsistencyError(
                f"plain delivery multiset mismatch at sink {c}")
    return deliveries


def case2_short_range(g: Graph, q_nodes: list[int], cq: TreeCollection,
                      source_values: dict, qp: QSinkParams, schedule: str,
                      cfg: EngineConfig, metrics: Metrics, tree: BfsTree,
                      name: str = "case2") -> tuple[dict, list[int]]:
    """Values delta(x, c) for all pairs with hops(x, c) <= H.

    Mutates cq (bottleneck pruning). source_values[x][c] must hold the exact
    delta(x, c) each source computed locally.
    """
    b, _ = compute_bottleneck(g, cq, qp.T, cfg, metrics, tree, name + "/bottleneck")

    into, outof = {}, {}
    for bn in b:
        t_in = bellman_ford(g, [bn], g.n - 1, "in", cfg, metrics, name + "/in_sssp")
        t_out = bellman_ford(g, [bn], g.n - 1, "out", cfg, metrics, name + "/out_sssp")
        into[bn] = t_in.dist[bn]
        outof[bn] = t_out.dist[bn]
    values = {x: [(x, bn, into[bn].get(x, INF)) for bn in b] for x in g.node_ids()}
    got = all_to_all_broadcast(g, values, cfg, metrics, tree=tree,
                               name=name + "/bcast")
    heard: dict[int, dict[int, int]] = {}
    for x, bn, d in got:
        heard.setdefault(x, {})[bn] = d

    tables: dict[int, dict[int, float]] = {c: {} for c in q_nodes}
    for c in q_nodes:
        for x in g.node_ids():
            best = INF
            for bn in b:
                cand = heard.get(x, {}).get(bn, INF) + outof[bn].get(c, INF)
                if cand < best:
                    best = cand
            tables[c][x] = best

    remove_subtrees(cq, set(b), g, cfg, metrics, name + "/remove")

    if schedule == "staged":
        deliveries = staged_frames(g, cq, source_values, qp, cfg, metrics,
                                   name + "/staged")
    elif schedule == "plain":
        deliveries = plain_round_robin(g, cq, source_values, cfg, metrics,
                                       name + "/plain")
    else:
        raise SimulationError(f"unknown schedule {schedule!r}")

    for c in q_nodes:
        for x, d in deliveries.get(c, ()):
            if d < tables[c][x]:
                tables[c][x] = d
    return tables, b
