"""Blocker-set construction over a CSSSP collection.

The driver sweeps score stages downward; inside a stage it sweeps phases of
decreasing path-richness, and inside a phase it runs selection steps until no
qualifying path remains. Every selection either takes a single heavy node
(the one covering the largest share of the qualifying paths, ties by id) or
a whole batch chosen pairwise-independently from the current candidate set,
then prunes the covered subtrees and rebuilds scores and candidate sets.

A depth-h path is coverable only through its h NON-ROOT nodes (the set-cover
hyperedge of a path has exactly h vertices). Covering a path at its own root
is worthless downstream: the blocker-to-blocker closure advances from a
source only through blockers reachable within h hops, and a root-covered
path would allow a source whose h-hop horizon contains no other blocker,
making distances beyond the horizon underivable. Scores, membership flags,
and the final coverage check therefore all ignore roots, and a selected node
never prunes the tree it roots.

All set computations are genuine simulated phases: scores and per-path
statistics ride (h+1)-round convergecasts and h-round root-to-leaf pipelines
per source; candidate sets and path counts are flooded with all-to-all
broadcasts. A stage whose broadcast candidate set comes back empty is skipped
outright, and a (trees, candidate-set) state whose full phase sweep is
already known to be empty is not re-swept; both shortcuts rely only on
state every node already holds, so round metrics reflect work a real network
would do.

Termination and output quality are enforced, not assumed: the qualifying
path count must strictly shrink every selection step, the step count must
stay inside its envelope, and at exit no depth-h path of the ORIGINAL
collection may avoid the returned set.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import derand, oracle
from .csssp import TreeCollection, collect_ancestors, remove_subtrees
from .engine import BfsTree, EngineConfig, Metrics, NodeProgram, all_to_all_broadcast, \
    build_bfs_tree, run_phase
from .errors import ConfigurationError, InternalConsistencyError
from .graphs import Graph


@dataclass(frozen=True)
class Params:
    epsilon: Fraction = Fraction(1, 12)
    delta: Fraction = Fraction(1, 12)

    def __post_init__(self):
        if not (0 < self.epsilon <= Fraction(1, 12)):
            raise ConfigurationError(f"epsilon {self.epsilon} not in (0, 1/12]")
        if not (0 < self.delta <= Fraction(1, 12)):
            raise ConfigurationError(f"delta {self.delta} not in (0, 1/12]")


@dataclass
class BlockerResult:
    q: list[int]
    heavy_selections: int
    selection_steps: int
    fallback_selections: int
    trace: list[dict] = field(default_factory=list)


def stage_count(n: int, eps: Fraction) -> int:
    """Smallest k with (1+eps)^k >= n^2 (exact rational arithmetic)."""
    target = n * n
    k, power = 0, Fraction(1)
    while power < target:
        power *= 1 + eps
        k += 1
    return k


def phase_count(h: int, eps: Fraction) -> int:
    """Smallest k with (1+eps)^k >= h, floored at 1 so the final sweep that
    clears every remaining path always runs."""
    k, power = 0, Fraction(1)
    while power < h:
        power *= 1 + eps
        k += 1
    return max(1, k)


def selection_envelope(n: int, h: int, params: Params) -> int:
    """Cap on total selection steps across all stages and phases."""
    per_phase = math.ceil((1 + params.epsilon) * math.log(n * n) / params.delta**3)
    return stage_count(n, params.epsilon) * phase_count(h, params.epsilon) * per_phase


# ---------------------------------------------------------------------------
# per-source tree phases
# ---------------------------------------------------------------------------

class _DepthHCount(NodeProgram):
    # convergecast of depth-h-descendant counts: send at round h - depth + 1
    def __init__(self, v, parent, depth, h, at_h):
        self.v = v
        self.parent = parent
        self.send_round = h - depth + 1
        self.count = 1 if at_h else 0

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


def _per_source_counts(g, trees, src, h, leaf_mark, cfg, metrics, name):
    """Each tree node's total of leaf_mark over depth-h descendants."""
    programs = {}
    depth = trees.depth[src]
    for v in trees.members(src):
        programs[v] = _DepthHCount(v, trees.parent[src][v] if v != src else None,
                                   depth[v], h, depth[v] == h and leaf_mark(src, v))
    rounds, msgs = run_phase(g, programs, cfg, metrics, name, budget=h + 1,
                             record=False)
    return {v: p.count for v, p in programs.items()}, rounds, msgs


def compute_scores(g: Graph, trees: TreeCollection, cfg: EngineConfig,
                   metrics: Metrics, name: str = "compute_scores") -> dict[int, int]:
    """score(v): depth-h paths through v as a non-root node, over all trees."""
    h = trees.h
    scores = {v: 0 for v in g.node_ids()}
    total_r = total_m = 0
    for src in trees.sources:
        counts, r, m = _per_source_counts(g, trees, src, h,
                                          lambda s, v: True, cfg, metrics,
                                          f"{name}/src={src}")
        total_r += r
        total_m += m
        for v, c in counts.items():
            if v != src:
                scores[v] += c
    metrics.add_phase(name, total_r, total_m)
    return scores


def compute_vi(g: Graph, scores: dict[int, int], i: int, params: Params,
               cfg: EngineConfig, metrics: Metrics, tree: BfsTree,
               name: str = "compute_Vi") -> list[int]:
    """Candidate set for stage i, broadcast so every node holds it."""
    threshold = (1 + params.epsilon) ** (i - 1)
    qualifying = {v: [(v,)] for v in g.node_ids() if scores[v] >= threshold}
    got = all_to_all_broadcast(g, qualifying, cfg, metrics, tree=tree, name=name)
    return sorted(x[0] for x in got)


class _FlagPipeline(NodeProgram):
    # root-to-leaf pipeline: node at depth d forwards at round d (root: 0);
    # payload is the running count of non-root candidate nodes on the path
    def __init__(self, v, depth, kids, in_vi):
        self.v = v
        self.depth = depth
        self.kids = kids
        self.beta = 1 if in_vi and depth > 0 else 0

    def setup(self):
        if self.depth == 0 and self.kids:
            return [(t, (self.beta,)) for t in self.kids]
        return None

    def step(self, r, inbox):
        for _, msg in inbox:
            self.beta += msg[0]
        if r == self.depth and self.kids:
            return [(t, (self.beta,)) for t in self.kids]
        return None


def _per_source_flags(g, trees, src, v_i_set, cfg, metrics, name):
    kids = trees.children_map(src)
    programs = {}
    for v in trees.members(src):
        programs[v] = _FlagPipeline(v, trees.depth[src][v], tuple(kids.get(v, ())),
                                    v in v_i_set)
    rounds, msgs = run_phase(g, programs, cfg, metrics, name, budget=trees.h,
                             record=False)
    return programs, rounds, msgs


def compute_pi(g: Graph, trees: TreeCollection, v_i: list[int],
               cfg: EngineConfig, metrics: Metrics,
               name: str = "compute_Pi") -> dict[tuple[int, int], bool]:
    """Per (source, depth-h leaf): does the path contain a candidate node."""
    v_i_set = set(v_i)
    h = trees.h
    flags = {}
    total_r = total_m = 0
    for src in trees.sources:
        programs, r, m = _per_source_flags(g, trees, src, v_i_set, cfg, metrics,
                                           f"{name}/src={src}")
        total_r += r
        total_m += m
        for v, prog in programs.items():
            if trees.depth[src][v] == h:
                flags[(src, v)] = prog.beta > 0
    metrics.add_phase(name, total_r, total_m)
    return flags


def compute_pij(g: Graph, trees: TreeCollection, v_i: list[int], j: int,
                params: Params, cfg: EngineConfig, metrics: Metrics,
                name: str = "compute_Pij") -> tuple[dict, dict[int, int]]:
    """Per (source, leaf) membership: >= (1+eps)^(j-1) candidate nodes on the
    path. Also returns each leaf's membership count."""
    v_i_set = set(v_i)
    h = trees.h
    need = (1 + params.epsilon) ** (j - 1)
    flags = {}
    alpha = {v: 0 for v in g.node_ids()}
    total_r = total_m = 0
    for src in trees.sources:
        programs, r, m = _per_source_flags(g, trees, src, v_i_set, cfg, metrics,
                                           f"{name}/src={src}")
        total_r += r
        total_m += m
        for v, prog in programs.items():
            if trees.depth[src][v] == h:
                member = prog.beta >= need
                flags[(src, v)] = member
                if member:
                    alpha[v] += 1
    metrics.add_phase(name, total_r, total_m)
    return flags, alpha


def compute_pij_size(g: Graph, alpha: dict[int, int], cfg: EngineConfig,
                     metrics: Metrics, tree: BfsTree,
                     name: str = "compute_Pij_size") -> int:
    """Broadcast every per-leaf count; everyone sums to the same |P_ij|."""
    values = {v: [(v, alpha.get(v, 0))] for v in g.node_ids()}
    got = all_to_all_broadcast(g, values, cfg, metrics, tree=tree, name=name)
    return sum(x[1] for x in got)


def compute_scores_ij(g: Graph, trees: TreeCollection, pij_flags: dict,
                      v_i: list[int], cfg: EngineConfig, metrics: Metrics,
                      tree: BfsTree, name: str = "compute_scores_ij") -> dict[int, int]:
    """score_ij(v): qualifying paths through v; broadcast for candidates."""
    h = trees.h
    scores = {v: 0 for v in g.node_ids()}
    total_r = total_m = 0
    for src in trees.sources:
        counts, r, m = _per_source_counts(
            g, trees, src, h,
            lambda s, v: pij_flags.get((s, v), False),
            cfg, metrics, f"{name}/src={src}")
        total_r += r
        total_m += m
        for v, c in counts.items():
            if v != src:
                scores[v] += c
    metrics.add_phase(name, total_r, total_m)
    values = {v: [(v, scores[v])] for v in v_i}
    all_to_all_broadcast(g, values, cfg, metrics, tree=tree, name=name + "/bcast")
    return scores


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _leaf_paths(ancestors_by_src, flags, leaf_filter):
    """Per leaf, the coverable (non-root) node lists of its flagged paths."""
    by_leaf: dict[int, list] = {}
    for (src, v), member in flags.items():
        if member and leaf_filter((src, v)):
            by_leaf.setdefault(v, []).append(ancestors_by_src[src][v][1:])
    return by_leaf


def _randomized_check(g, a_members, pi_paths_by_leaf, pij_paths_by_leaf,
                      cfg, metrics, tree, name):
    """Broadcast per-leaf coverage of A; everyone derives the totals."""
    sel = set(a_members)
    values = {}
    for v in g.node_ids():
        s_pi, s_pij = derand.sigma_local(pi_paths_by_leaf.get(v, ()),
                                         pij_paths_by_leaf.get(v, ()), sel)
        values[v] = [(v, s_pi, s_pij)]
    got = all_to_all_broadcast(g, values, cfg, metrics, tree=tree, name=name)
    return sum(x[1] for x in got), sum(x[2] for x in got)


def run_blocker(g: Graph, trees: TreeCollection, params: Params, mode: str,
                seed: int, cfg: EngineConfig, metrics: Metrics,
                name: str = "blocker") -> BlockerResult:
    """Build a blocker set covering every depth-h path of `trees`.

    Works on a private copy: selection prunes covered subtrees as it goes,
    and callers usually still need the collection afterwards. mode is
    "deterministic" (exhaustive sample-space search) or "randomized"
    (seeded draws from the same space, retried until good).
    """
    if mode not in ("deterministic", "randomized"):
        raise ConfigurationError(f"unknown blocker mode {mode!r}")
    work = trees.copy()
    h = work.h
    n = g.n
    eps, delta = params.epsilon, params.delta
    original_paths = oracle.depth_h_paths(trees, h)

    leader = min(g.node_ids())
    tree = build_bfs_tree(g, leader, cfg, metrics, name + "/bfs")
    rng = random.Random(seed)

    q: list[int] = []
    q_set: set[int] = set()
    heavy = steps = fallbacks = 0
    envelope = selection_envelope(n, h, params)
    version = 0
    known_empty: set = set()
    trace: list[dict] = []

    scores = compute_scores(g, work, cfg, metrics, name + "/scores")

    for i in range(stage_count(n, eps), 0, -1):
        v_i = compute_vi(g, scores, i, params, cfg, metrics, tree,
                         name + f"/Vi[i={i}]")
        if not v_i:
            continue  # candidate set empty at every node; nothing can qualify
        if (version, tuple(v_i)) in known_empty:
            continue  # identical state already swept empty across all phases
        stage_start = (version, tuple(v_i))
        pi_flags = compute_pi(g, work, v_i, cfg, metrics, name + f"/Pi[i={i}]")

        for j in range(phase_count(h, eps), 0, -1):
            prev_size = None
            while True:
                if not v_i:
                    break
                pij_flags, alpha = compute_pij(g, work, v_i, j, params, cfg,
                                               metrics, name + f"/Pij[{i},{j}]")
                size = compute_pij_size(g, alpha, cfg, metrics, tree,
                                        name + f"/Pij_size[{i},{j}]")
                if size == 0:
                    break
                if prev_size is not None and size >= prev_size:
                    raise InternalConsistencyError(
                        f"|P_ij| did not shrink: {prev_size} -> {size}")
                prev_size = size
                steps += 1
                if steps > envelope:
                    raise InternalConsistencyError(
                        f"selection steps exceeded envelope {envelope}")

                score_ij = compute_scores_ij(g, work, pij_flags, v_i, cfg,
                                             metrics, tree,
                                             name + f"/scores_ij[{i},{j}]")
                threshold = Fraction(delta**3, 1 + eps) * size
                heavy_nodes = [v for v in v_i if score_ij[v] > threshold]
                if heavy_nodes:
                    c = max(heavy_nodes, key=lambda v: (score_ij[v], -v))
                    new_nodes = [c]
                    heavy += 1
                    branch = "heavy"
                else:
                    if not (len(v_i) > (1 + eps) ** j / delta**3):
                        raise InternalConsistencyError(
                            f"no heavy node but |V_i|={len(v_i)} <= "
                            f"(1+eps)^{j}/delta^3")
                    new_nodes, branch = _sample_selection(
                        g, work, v_i, pi_flags, pij_flags, params, i, j, size,
                        mode, rng, cfg, metrics, tree, name)
                    if branch == "fallback":
                        fallbacks += 1
                        metrics.flags.append(f"good-set fallback at stage {i} phase {j}")

                fresh = [v for v in new_nodes if v not in q_set]
                q.extend(fresh)
                q_set.update(fresh)
                remove_subtrees(work, set(new_nodes), g, cfg, metrics,
                                name + "/remove", spare_roots=True)
                version += 1
                scores = compute_scores(g, work, cfg, metrics, name + "/scores")
                v_i = compute_vi(g, scores, i, params, cfg, metrics, tree,
                                 name + f"/Vi[i={i}]")
                pi_flags = compute_pi(g, work, v_i, cfg, metrics,
                                      name + f"/Pi[i={i}]") if v_i else {}
                trace.append({
                    "stage": i, "phase": j, "branch": branch,
                    "picked": new_nodes, "pij_before": size,
                    "pij_after": _qualifying_count(work, v_i, j, params),
                })
            if not v_i:
                break
        if stage_start[0] == version:
            known_empty.add(stage_start)

    for path in original_paths:
        if not q_set.intersection(path[1:]):
            raise InternalConsistencyError(f"uncovered depth-{h} path {path}")

    metrics.blocker_trace.extend(trace)
    return BlockerResult(q, heavy, steps, fallbacks, trace)


def _qualifying_count(work, v_i, j, params) -> int:
    """Trace-only recount of qualifying paths after a removal (no rounds)."""
    if not v_i:
        return 0
    v_i_set = set(v_i)
    need = (1 + params.epsilon) ** (j - 1)
    count = 0
    for path in oracle.depth_h_paths(work, work.h):
        if sum(1 for z in path[1:] if z in v_i_set) >= need:
            count += 1
    return count


def _sample_selection(g, work, v_i, pi_flags, pij_flags, params, i, j, size,
                      mode, rng, cfg, metrics, tree, name):
    """Pick a candidate batch pairwise-independently (both modes)."""
    p = Fraction(params.delta, (1 + params.epsilon) ** j)
    space = derand.build_prime_space(g.n, p)
    ancestors = {}
    for src in work.sources:
        ancestors[src] = collect_ancestors(work, src, g, cfg, metrics,
                                           name + "/ancestors")
    pi_paths = _leaf_paths(ancestors, pi_flags, lambda key: True)
    pij_paths = _leaf_paths(ancestors, pij_flags, lambda key: True)
    p_i_size = sum(len(v) for v in pi_paths.values())

    if mode == "randomized":
        for _ in range(space.size):
            mu = rng.randrange(space.size)
            members = space.members(mu, v_i)
            # selected candidates announce themselves
            values = {v: [(v,)] for v in members}
            all_to_all_broadcast(g, values, cfg, metrics, tree=tree,
                                 name=name + "/announceA")
            cov_pi, cov_pij = _randomized_check(
                g, members, pi_paths, pij_paths, cfg, metrics, tree,
                name + "/checkA")
            if derand.is_good_set(len(members), cov_pi, cov_pij, i, j,
                                  p_i_size, size, params):
                metrics.derand_reports.append({
                    "space_kind": type(space).__name__,
                    "space_size": space.size,
                    "chosen_mu": mu,
                    "good_flag": True,
                })
                return sorted(members), "sample"
        # no good draw surfaced; fall through to the exhaustive search

    result = derand.find_good_point(g, space, v_i, pi_paths, pij_paths, params,
                                    i, j, p_i_size, size, cfg, metrics, tree,
                                    name + "/good_point")
    return result.selected, ("sample" if result.good else "fallback")
