"""End-to-end APSP: trees, blocker set, blocker-to-blocker closure, q-sink
delivery, and per-source extension, with the final matrix checked exactly
against the sequential oracle.

Step layout (each step is one accounting unit in Metrics.steps):
  1. height-h consistent trees for every source          2h rounds/source
  2. blocker set Q over those trees
  3. h-hop in-trees rooted at each blocker                h rounds/blocker
  4. flood the delta_h(Q x Q) matrix                      <= 2*depth + 2|Q|^2
  5. local closure: every x derives delta(x, c), c in Q   0 rounds
  6. q-sink delivery of delta(x, c) to each c
  7. per-source relaxation seeded at blockers             h rounds/source

When h >= n-1 the step-1 trees already span everything and steps 2-7 are
skipped. When Q is empty no pair needs more than h hops and steps 3-6 are
skipped; step 7 degenerates to plain h-hop relaxation from each source.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import oracle
from .blocker import Params, run_blocker
from .csssp import _BellmanFordNode, bellman_ford, build_csssp, consistency_report
from .engine import EngineConfig, Metrics, all_to_all_broadcast, build_bfs_tree, \
    run_phase
from .errors import ConfigurationError, OracleMismatchError, RoundAccountingError
from .graphs import INF, Graph
from .qsink import case1_long_range, case2_short_range, default_qsink_params


@dataclass(frozen=True)
class PipelineConfig:
    h: int | None = None              # default ceil(n^(1/3))
    epsilon: Fraction = Fraction(1, 12)
    delta: Fraction = Fraction(1, 12)
    mode: str = "deterministic"       # blocker selection mode
    schedule: str = "staged"          # q-sink routing schedule
    seed: int = 0
    bandwidth: int = 1                # messages per channel per round
    qsink_h: int | None = None        # override H
    qsink_t: int | None = None        # override T
    extension_seed_local: bool = False

    def resolve_h(self, n: int) -> int:
        if self.h is not None:
            if not (1 <= self.h <= n - 1):
                raise ConfigurationError(f"h={self.h} outside [1, {n - 1}]")
            return self.h
        k = 1
        while k * k * k < n:
            k += 1
        return min(k, n - 1)

    def engine_config(self) -> EngineConfig:
        return EngineConfig(messages_per_channel_per_round=self.bandwidth)

    def as_dict(self, n: int) -> dict:
        return {
            "n": n, "h": self.resolve_h(n),
            "epsilon": str(self.epsilon), "delta": str(self.delta),
            "mode": self.mode, "schedule": self.schedule, "seed": self.seed,
            "bandwidth": self.bandwidth,
            "qsink_h": self.qsink_h, "qsink_t": self.qsink_t,
            "extension_seed_local": self.extension_seed_local,
        }


def broadcast_blocker_matrix(g: Graph, q: list[int], row_values: dict,
                             cfg: EngineConfig, metrics: Metrics, tree,
                             name: str = "blocker_matrix") -> dict:
    """Every node learns delta_h(c, c') for all c, c' in Q.

    After the per-blocker in-trees, each blocker holds its own row (its
    distance to every other blocker); rows are gathered and flooded as one
    batch of |Q|^2 entries.
    """
    per_node = {c: [(c, cp, row_values[c][cp]) for cp in q] for c in q}
    got = all_to_all_broadcast(g, per_node, cfg, metrics, tree=tree, name=name)
    return {(c, cp): d for c, cp, d in got}


def local_closure(x_row: dict, qmat: dict, q: list[int]) -> dict:
    """delta(x, c) for all c in Q from x's h-hop row and the Q x Q matrix.

    Purely local: closes the blocker matrix under min-plus, then joins x's
    h-hop entries through it.
    """
    k = len(q)
    m = [[0 if a == b else qmat[(q[a], q[b])] for b in range(k)] for a in range(k)]
    closed = oracle.min_plus_closure(m)
    out = {}
    for b, c in enumerate(q):
        best = x_row.get(c, INF)
        for a, c1 in enumerate(q):
            cand = x_row.get(c1, INF) + closed[a][b]
            if cand < best:
                best = cand
        out[c] = best
    return out


def h_hop_extension(g: Graph, sources: list[int], seeds_for: dict, h: int,
                    cfg: EngineConfig, metrics: Metrics,
                    name: str = "extension") -> dict[int, dict[int, float]]:
    """Per source, h relaxation rounds seeded with known blocker distances.

    seeds_for[x] maps node -> initial value (the source itself at 0, each
    blocker c at delta(x, c)). Returns rows[x][t]; exactly h rounds/source.
    """
    rows: dict[int, dict[int, float]] = {}
    total_r = total_m = 0
    for x in sources:
        seeds = seeds_for[x]
        programs = {}
        for v in g.node_ids():
            fwd = tuple(t for t, _ in g.out_edges(v))
            weight_from = {u: w for u, w in g.in_edges(v)}
            prog = _BellmanFordNode(v, x, fwd, weight_from, h)
            init = seeds.get(v, INF)
            if init != INF:
                prog.label = (init, 0, INF)
                prog.is_source = True
            else:
                prog.label = (INF, INF, INF)
                prog.is_source = False
            programs[v] = prog
        r, m = run_phase(g, programs, cfg, metrics, f"{name}/src={x}",
                         budget=h, record=False)
        if r != h:
            raise RoundAccountingError(f"extension ran {r} != {h} rounds")
        total_r += r
        total_m += m
        rows[x] = {v: programs[v].label[0] for v in g.node_ids()}
    metrics.add_phase(name, total_r, total_m)
    return rows


def run_apsp(g: Graph, cfg: PipelineConfig) -> tuple[list, Metrics]:
    """Full pipeline; returns (matrix, metrics) with matrix[x][t] exact."""
    n = g.n
    h = cfg.resolve_h(n)
    params = Params(cfg.epsilon, cfg.delta)
    ecfg = cfg.engine_config()
    metrics = Metrics(config=cfg.as_dict(n))
    dist_oracle = oracle.dijkstra_apsp(g)

    with metrics.begin_step("step1_csssp"):
        trees = build_csssp(g, list(g.node_ids()), h, "out", ecfg, metrics,
                            "step1/csssp")
    metrics.soft_failures.extend(consistency_report(trees))

    if h >= n - 1:
        for tag in ("step2_blocker", "step3_in_sssp", "step4_matrix",
                    "step5_closure", "step6_qsink", "step7_extension"):
            with metrics.begin_step(tag):
                pass
        metrics.flags.append("h >= n-1: steps 2-7 skipped")
        matrix = [None] + [[None] + [trees.dist[x].get(t, INF) for t in g.node_ids()]
                           for x in g.node_ids()]
        _check_matrix(matrix, dist_oracle, g)
        metrics.summary = _summary(metrics, h, q_size=0, b_size=0)
        return matrix, metrics

    leader_tree = build_bfs_tree(g, min(g.node_ids()), ecfg, metrics, "leader_bfs")

    with metrics.begin_step("step2_blocker"):
        result = run_blocker(g, trees, params, cfg.mode, cfg.seed, ecfg, metrics,
                             "step2/blocker")
    q = result.q

    delta_h_to_q: dict[int, dict[int, float]] = {x: {} for x in g.node_ids()}
    with metrics.begin_step("step3_in_sssp"):
        if q:
            in_trees = bellman_ford(g, q, h, "in", ecfg, metrics, "step3/in_sssp")
            for c in q:
                for x in g.node_ids():
                    delta_h_to_q[x][c] = in_trees.dist[c].get(x, INF)

    with metrics.begin_step("step4_matrix"):
        if q:
            rows = {c: {cp: delta_h_to_q[c][cp] for cp in q} for c in q}
            qmat = broadcast_blocker_matrix(g, q, rows, ecfg, metrics,
                                            leader_tree, "step4/matrix")

    delta_xq: dict[int, dict[int, float]] = {x: {} for x in g.node_ids()}
    with metrics.begin_step("step5_closure"):
        if q:
            for x in g.node_ids():
                delta_xq[x] = local_closure(delta_h_to_q[x], qmat, q)
            for x in g.node_ids():
                for c in q:
                    if delta_xq[x][c] != dist_oracle[x][c]:
                        raise OracleMismatchError(
                            f"local closure delta({x},{c}) = {delta_xq[x][c]} "
                            f"!= {dist_oracle[x][c]}")

    b_nodes: list[int] = []
    tables: dict[int, dict[int, float]] = {}
    with metrics.begin_step("step6_qsink"):
        if q:
            hops_oracle = oracle.shortest_path_hops(g)
            qp = default_qsink_params(n, len(q), cfg.qsink_h, cfg.qsink_t)
            t1, cq, _ = case1_long_range(g, q, qp, params, cfg.mode, cfg.seed,
                                         ecfg, metrics, leader_tree,
                                         dist_oracle, hops_oracle)
            t2, b_nodes = case2_short_range(g, q, cq, delta_xq, qp, cfg.schedule,
                                            ecfg, metrics, leader_tree)
            for c in q:
                tables[c] = {}
                for x in g.node_ids():
                    tables[c][x] = 0 if x == c else min(t1[c][x], t2[c][x])
                    if tables[c][x] != dist_oracle[x][c]:
                        raise OracleMismatchError(
                            f"q-sink delta({x},{c}) = {tables[c][x]} != "
                            f"{dist_oracle[x][c]}")

    with metrics.begin_step("step7_extension"):
        seeds_for = {}
        for x in g.node_ids():
            seeds = {x: 0}
            for c in q:
                seeds[c] = min(seeds.get(c, INF), tables[c][x])
            if cfg.extension_seed_local:
                for v, d in trees.dist[x].items():
                    seeds[v] = min(seeds.get(v, INF), d)
            seeds_for[x] = seeds
        rows = h_hop_extension(g, list(g.node_ids()), seeds_for, h, ecfg,
                               metrics, "step7/extension")

    matrix = [None] + [[None] + [rows[x][t] for t in g.node_ids()]
                       for x in g.node_ids()]
    _check_matrix(matrix, dist_oracle, g)
    _check_step_rounds(metrics, g, h, len(q))
    metrics.summary = _summary(metrics, h, q_size=len(q), b_size=len(b_nodes))
    return matrix, metrics


def _check_matrix(matrix: list, dist_oracle: list, g: Graph) -> None:
    for x in g.node_ids():
        for t in g.node_ids():
            if matrix[x][t] != dist_oracle[x][t]:
                raise OracleMismatchError(
                    f"delta({x},{t}) = {matrix[x][t]} != oracle {dist_oracle[x][t]}")


def _check_step_rounds(metrics: Metrics, g: Graph, h: int, q_size: int) -> None:
    by_name = {s["name"]: s for s in metrics.steps}
    if by_name["step1_csssp"]["rounds"] != 2 * h * g.n:
        raise RoundAccountingError("step 1 rounds != 2h*|V|")
    if by_name["step3_in_sssp"]["rounds"] != h * q_size:
        raise RoundAccountingError("step 3 rounds != h*|Q|")
    if by_name["step7_extension"]["rounds"] != h * g.n:
        raise RoundAccountingError("step 7 rounds != h*n")


def _summary(metrics: Metrics, h: int, q_size: int, b_size: int) -> dict:
    by_name = {s["name"]: s for s in metrics.steps}
    return {
        "h": h,
        "q_size": q_size,
        "b_size": b_size,
        "total_rounds": metrics.rounds,
        "step1_rounds": by_name["step1_csssp"]["rounds"],
        "step2_rounds": by_name["step2_blocker"]["rounds"],
        "step6_rounds": by_name["step6_qsink"]["rounds"],
    }
