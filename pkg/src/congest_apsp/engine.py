"""Round-synchronous message-passing engine with CONGEST bandwidth limits.

Model. Communication channels are the edges of the underlying undirected
graph, one directed channel per edge direction. A message is a tuple of at
most `words_per_message` words (node ids, distance values, small tags), and
each channel carries at most `messages_per_channel_per_round` messages per
round. A message sent in round r is readable by its receiver in round r+1.
Programs may emit an initial outbox in "round 0" before the first counted
round, matching the usual round-0 initialization step of synchronous
algorithms.

Execution. Within a round all nodes act simultaneously: every outbox is a
function of state plus the inbox carried over from the previous round. The
engine steps nodes in ascending id order purely for determinism. Nodes that
have no inbox and no scheduled wakeup are skipped; skipping is sound because
such a step could only observe an empty inbox, and every program here is
quiescent in that case. Rounds are still counted exactly.

A phase either runs to global quiescence (no pending messages, no wakeups)
or for a fixed round budget, in which case leftover in-flight messages are
discarded: the algorithm has globally stopped listening.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

from .errors import BandwidthError, RoundAccountingError, RoundLimitError, SimulationError
from .graphs import Graph


@dataclass(frozen=True)
class EngineConfig:
    messages_per_channel_per_round: int = 1
    words_per_message: int = 4
    max_rounds_factor: int = 64  # safety cap = factor * n^2

    def __post_init__(self):
        if self.messages_per_channel_per_round < 1:
            from .errors import ConfigurationError
            raise ConfigurationError("channel capacity must be >= 1")
        if self.words_per_message < 1:
            from .errors import ConfigurationError
            raise ConfigurationError("words per message must be >= 1")

    def max_rounds(self, n: int) -> int:
        return self.max_rounds_factor * n * n


class Metrics:
    """Per-phase round/message accounting plus run-wide congestion stats."""

    def __init__(self, config: dict | None = None):
        self.config = config or {}
        self.phases: list[dict] = []
        self.steps: list[dict] = []
        self.per_node_sent: dict[int, int] = {}
        self.max_channel_load_per_round = 0
        self.blocker_trace: list[dict] = []
        self.derand_reports: list[dict] = []
        self.stage_trace: list[dict] = []
        self.soft_failures: list[dict] = []
        self.flags: list[str] = []
        self.summary: dict = {}

    @property
    def rounds(self) -> int:
        return sum(p["rounds"] for p in self.phases)

    @property
    def total_messages(self) -> int:
        return sum(p["messages"] for p in self.phases)

    def add_phase(self, name: str, rounds: int, messages: int) -> None:
        self.phases.append({"name": name, "rounds": rounds, "messages": messages})

    def count_send(self, node: int, k: int = 1) -> None:
        self.per_node_sent[node] = self.per_node_sent.get(node, 0) + k

    def begin_step(self, name: str):
        return _StepScope(self, name)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "phases": self.phases,
            "steps": self.steps,
            "totals": {"rounds": self.rounds, "messages": self.total_messages},
            "congestion": {
                "max_channel_load_per_round": self.max_channel_load_per_round,
                "per_node_sent": {str(k): v for k, v in sorted(self.per_node_sent.items())},
            },
            "blocker_trace": self.blocker_trace,
            "derand_reports": self.derand_reports,
            "stage_trace": self.stage_trace,
            "soft_failures": self.soft_failures,
            "flags": self.flags,
            "summary": self.summary,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class _StepScope:
    """Aggregates all phases recorded inside it into one named step record."""

    def __init__(self, metrics: Metrics, name: str):
        self.metrics = metrics
        self.name = name

    def __enter__(self):
        self._phase_mark = len(self.metrics.phases)
        return self

    def __exit__(self, exc_type, exc, tb):
        phases = self.metrics.phases[self._phase_mark:]
        self.metrics.steps.append({
            "name": self.name,
            "rounds": sum(p["rounds"] for p in phases),
            "messages": sum(p["messages"] for p in phases),
        })
        return False


class NodeProgram:
    """One node's local algorithm.

    setup() may return an outbox sent in round 0. step(r, inbox) is invoked
    for rounds r >= 1 whenever the node has inbound messages or a scheduled
    wakeup; inbox entries are (sender, message) sorted by sender. next_wake(r)
    returns the next round (> r) at which the node must be stepped even
    without inbound traffic, or None. Outboxes are iterables of
    (neighbor, message) with message a tuple of words.
    """

    def setup(self):
        return None

    def step(self, r: int, inbox):
        return None

    def next_wake(self, r: int):
        return None


def run_phase(
    g: Graph,
    programs: dict[int, NodeProgram],
    cfg: EngineConfig,
    metrics: Metrics,
    name: str,
    budget: int | None = None,
    record: bool = True,
    exact: bool = True,
) -> tuple[int, int]:
    """Run one phase; returns (rounds, messages).

    With budget=None the phase runs to quiescence and the round count is the
    last round in which any node was stepped. With a budget the phase counts
    exactly `budget` rounds regardless of early quiescence; exact=False turns
    the budget into a cap instead (stop at quiescence, count the last active
    round, never execute past the cap).
    """
    nbr_sets = {v: set(g.neighbors(v)) for v in g.node_ids()}
    cap = cfg.messages_per_channel_per_round
    wmax = cfg.words_per_message
    hard_cap = cfg.max_rounds(g.n) if budget is None else budget
    per_node = metrics.per_node_sent
    messages = 0
    max_load = metrics.max_channel_load_per_round

    inbox: dict[int, list] = {}
    inbox_round = None
    wakes: list[tuple[int, int]] = []

    def send(v: int, out, r: int, target_box: dict) -> None:
        nonlocal messages, max_load
        if not out:
            return
        allowed = nbr_sets[v]
        chan_count: dict[int, int] = {}
        sent = 0
        for tgt, msg in out:
            if tgt not in allowed:
                raise SimulationError(
                    f"node {v} sent to non-neighbor {tgt} in round {r}")
            if len(msg) > wmax:
                raise SimulationError(
                    f"node {v} message of {len(msg)} words exceeds {wmax} in round {r}")
            c = chan_count.get(tgt, 0) + 1
            if c > cap:
                raise BandwidthError(v, r, (v, tgt), c, cap)
            chan_count[tgt] = c
            target_box.setdefault(tgt, []).append((v, msg))
            sent += 1
        if chan_count:
            load = max(chan_count.values())
            if load > max_load:
                max_load = load
        messages += sent
        per_node[v] = per_node.get(v, 0) + sent

    # round 0: initial outboxes
    for v in sorted(programs):
        prog = programs[v]
        send(v, prog.setup(), 0, inbox)
        w = prog.next_wake(0)
        if w is not None:
            heapq.heappush(wakes, (w, v))
    if inbox:
        inbox_round = 1

    r = 0
    while True:
        nxt = None
        if inbox_round is not None:
            nxt = inbox_round
        if wakes and (nxt is None or wakes[0][0] < nxt):
            nxt = wakes[0][0]
        if nxt is None or (budget is not None and nxt > budget):
            break
        if nxt > hard_cap:
            raise RoundLimitError(
                f"phase {name!r} exceeded {hard_cap} rounds (next event at {nxt})")
        r = nxt

        active = set()
        if inbox_round == r:
            active.update(inbox)
        while wakes and wakes[0][0] == r:
            active.add(heapq.heappop(wakes)[1])

        new_inbox: dict[int, list] = {}
        cur_inbox = inbox if inbox_round == r else {}
        for v in sorted(active):
            prog = programs.get(v)
            if prog is None:
                continue
            msgs = cur_inbox.get(v, ())
            if msgs:
                msgs = sorted(msgs)
            out = prog.step(r, msgs)
            send(v, out, r, new_inbox)
            w = prog.next_wake(r)
            if w is not None:
                if w <= r:
                    raise SimulationError(f"node {v} scheduled wake {w} <= round {r}")
                heapq.heappush(wakes, (w, v))

        inbox = new_inbox
        inbox_round = r + 1 if inbox else None

    rounds = budget if (budget is not None and exact) else r
    if record:
        metrics.add_phase(name, rounds, messages)
    metrics.max_channel_load_per_round = max_load
    return rounds, messages


# ---------------------------------------------------------------------------
# BFS tree and broadcast/convergecast primitives
# ---------------------------------------------------------------------------

@dataclass
class BfsTree:
    root: int
    parent: dict[int, int | None]
    depth: dict[int, int]
    children: dict[int, tuple[int, ...]]

    @property
    def height(self) -> int:
        return max(self.depth.values())


_ANNOUNCE = 0
_CLAIM = 1


class _BfsProgram(NodeProgram):
    def __init__(self, v: int, root: int, nbrs):
        self.v = v
        self.root = root
        self.nbrs = nbrs
        self.depth = 0 if v == root else None
        self.parent = None
        self.children = []

    def setup(self):
        if self.v == self.root:
            return [(t, (_ANNOUNCE,)) for t in self.nbrs]
        return None

    def step(self, r, inbox):
        out = []
        announcers = [s for s, m in inbox if m[0] == _ANNOUNCE]
        for s, m in inbox:
            if m[0] == _CLAIM:
                self.children.append(s)
        if announcers and self.depth is None:
            self.depth = r
            self.parent = min(announcers)
            for t in self.nbrs:
                if t == self.parent:
                    out.append((t, (_CLAIM,)))
                else:
                    out.append((t, (_ANNOUNCE,)))
        return out


def build_bfs_tree(g: Graph, root: int, cfg: EngineConfig, metrics: Metrics,
                   name: str = "bfs_tree") -> BfsTree:
    """Hop-shortest spanning tree; parent = lowest-id closer neighbor."""
    programs = {v: _BfsProgram(v, root, g.neighbors(v)) for v in g.node_ids()}
    rounds, _ = run_phase(g, programs, cfg, metrics, name)
    parent = {v: programs[v].parent for v in g.node_ids()}
    depth = {v: programs[v].depth for v in g.node_ids()}
    children = {v: tuple(sorted(programs[v].children)) for v in g.node_ids()}
    if any(d is None for d in depth.values()):
        raise SimulationError("BFS did not span the graph; graph disconnected?")
    ecc = max(depth.values())
    if rounds > ecc + 2:
        raise RoundAccountingError(f"BFS took {rounds} rounds, eccentricity {ecc}")
    return BfsTree(root, parent, depth, children)


class _BroadcastProgram(NodeProgram):
    def __init__(self, v, tree: BfsTree, values):
        self.v = v
        self.is_root = v == tree.root
        self.kids = tree.children[v]
        self.values = values if self.is_root else None
        self.received = list(values) if self.is_root else []
        self._emit = 0

    def setup(self):
        if self.is_root and self.values:
            self._emit = 1
            return [(t, self.values[0]) for t in self.kids]
        return None

    def step(self, r, inbox):
        out = []
        if self.is_root:
            if self._emit < len(self.values):
                out = [(t, self.values[self._emit]) for t in self.kids]
                self._emit += 1
        else:
            for _, msg in inbox:
                self.received.append(msg)
                out.extend((t, msg) for t in self.kids)
        return out

    def next_wake(self, r):
        if self.is_root and self._emit < len(self.values or ()):
            return r + 1
        return None


def broadcast_k(g: Graph, v: int, values: list[tuple], cfg: EngineConfig,
                metrics: Metrics, tree: BfsTree | None = None,
                name: str = "broadcast_k") -> BfsTree:
    """Pipelined flood of k values from v down its BFS tree.

    Every node ends holding all k values in order; measured rounds are
    checked against depth + k.
    """
    if tree is None:
        tree = build_bfs_tree(g, v, cfg, metrics, name + "/bfs")
    programs = {u: _BroadcastProgram(u, tree, values) for u in g.node_ids()}
    rounds, _ = run_phase(g, programs, cfg, metrics, name)
    bound = tree.height + len(values)
    if rounds > bound:
        raise RoundAccountingError(f"broadcast_k took {rounds} > depth+k = {bound}")
    for u in g.node_ids():
        if programs[u].received != list(values):
            raise SimulationError(f"broadcast_k: node {u} missed values")
    return tree


class _GatherProgram(NodeProgram):
    def __init__(self, v, tree: BfsTree, own):
        self.v = v
        self.is_root = v == tree.root
        self.parent = tree.parent[v]
        self.queue = list(own)
        self.collected = list(own) if self.is_root else None

    def setup(self):
        if not self.is_root and self.queue:
            return [(self.parent, self.queue.pop(0))]
        return None

    def step(self, r, inbox):
        for _, msg in inbox:
            if self.is_root:
                self.collected.append(msg)
            else:
                self.queue.append(msg)
        if not self.is_root and self.queue:
            return [(self.parent, self.queue.pop(0))]
        return None

    def next_wake(self, r):
        if not self.is_root and self.queue:
            return r + 1
        return None


def all_to_all_broadcast(g: Graph, per_node_values: dict[int, list[tuple]],
                         cfg: EngineConfig, metrics: Metrics,
                         tree: BfsTree | None = None,
                         name: str = "all_to_all") -> list[tuple]:
    """Every node learns every value: gather at the leader, then scatter.

    Values are opaque word tuples (callers include the origin id when it
    matters). Returns the canonical sorted list all nodes hold. Measured
    rounds are checked against 2*depth + 2*K for K total values.
    """
    total = sum(len(vals) for vals in per_node_values.values())
    if tree is None:
        leader = min(g.node_ids())
        tree = build_bfs_tree(g, leader, cfg, metrics, name + "/bfs")
    programs = {u: _GatherProgram(u, tree, per_node_values.get(u, ())) for u in g.node_ids()}
    r1, _ = run_phase(g, programs, cfg, metrics, name + "/gather")
    gathered = programs[tree.root].collected
    if len(gathered) != total:
        raise SimulationError(
            f"all_to_all gather lost values: {len(gathered)} of {total}")
    gathered = sorted(gathered)
    scatter_progs = {u: _BroadcastProgram(u, tree, gathered) for u in g.node_ids()}
    r2, _ = run_phase(g, scatter_progs, cfg, metrics, name + "/scatter")
    bound = 2 * tree.height + 2 * total
    if r1 + r2 > bound:
        raise RoundAccountingError(
            f"all_to_all took {r1 + r2} > 2*depth+2k = {bound}")
    return gathered


class _ConvergecastSum(NodeProgram):
    # schedule: node at depth d sends at round (height - d) + 1
    def __init__(self, v, tree: BfsTree, addend):
        self.v = v
        self.is_root = v == tree.root
        self.parent = tree.parent[v]
        self.send_round = tree.height - tree.depth[v] + 1
        self.total = addend

    def step(self, r, inbox):
        for _, msg in inbox:
            self.total += msg[0]
        if not self.is_root and r == self.send_round:
            return [(self.parent, (self.total,))]
        return None

    def next_wake(self, r):
        if self.is_root:
            return None
        return self.send_round if r < self.send_round else None


def convergecast_sum(g: Graph, tree: BfsTree, addends: dict[int, int],
                     cfg: EngineConfig, metrics: Metrics,
                     name: str = "convergecast_sum") -> int:
    """Exact sum of all addends at the tree root in <= depth+1 rounds."""
    programs = {u: _ConvergecastSum(u, tree, addends.get(u, 0)) for u in g.node_ids()}
    rounds, _ = run_phase(g, programs, cfg, metrics, name)
    if rounds > tree.height + 1:
        raise RoundAccountingError(
            f"convergecast took {rounds} > depth+1 = {tree.height + 1}")
    return programs[tree.root].total
