"""Weighted graphs: representation, generators, DIMACS/JSON ingestion.

Nodes are integers 1..n. Weights are nonnegative integers (zero allowed,
capped at 2**32 so all arithmetic stays exact). A directed graph's
communication channels are those of its underlying undirected graph; the
underlying graph must be connected so that network-wide broadcasts reach
everyone. Graphs are immutable after construction and safe to share.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .errors import ConfigurationError, GraphValidationError

INF = math.inf
MAX_WEIGHT = 2**32


@dataclass(frozen=True)
class Graph:
    n: int
    directed: bool
    edges: tuple[tuple[int, int, int], ...]

    # adjacency caches, built once
    _out: dict = field(init=False, repr=False, compare=False)
    _in: dict = field(init=False, repr=False, compare=False)
    _nbrs: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        out = {v: [] for v in self.node_ids()}
        inc = {v: [] for v in self.node_ids()}
        nbrs = {v: set() for v in self.node_ids()}
        for u, v, w in self.edges:
            out[u].append((v, w))
            inc[v].append((u, w))
            if not self.directed:
                out[v].append((u, w))
                inc[u].append((v, w))
            nbrs[u].add(v)
            nbrs[v].add(u)
        for v in nbrs:
            out[v].sort()
            inc[v].sort()
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_in", inc)
        object.__setattr__(self, "_nbrs", {v: tuple(sorted(s)) for v, s in nbrs.items()})

    def node_ids(self) -> range:
        return range(1, self.n + 1)

    def out_edges(self, u: int) -> list[tuple[int, int]]:
        """(target, weight) pairs of edges usable leaving u."""
        return self._out[u]

    def in_edges(self, v: int) -> list[tuple[int, int]]:
        """(source, weight) pairs of edges usable entering v."""
        return self._in[v]

    def neighbors(self, v: int) -> tuple[int, ...]:
        """Channel neighbors in the underlying undirected graph."""
        return self._nbrs[v]

    def reversed(self) -> "Graph":
        if not self.directed:
            return self
        return Graph(self.n, True, tuple(sorted((v, u, w) for u, v, w in self.edges)))

    def validate(self) -> None:
        seen = set()
        for u, v, w in self.edges:
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise GraphValidationError(f"edge ({u},{v}) outside node range 1..{self.n}")
            if u == v:
                raise GraphValidationError(f"self-loop at node {u}")
            if w < 0:
                raise GraphValidationError(f"negative weight {w} on edge ({u},{v})")
            if w > MAX_WEIGHT:
                raise GraphValidationError(f"weight {w} exceeds 2^32 on edge ({u},{v})")
            key = (u, v) if self.directed else (min(u, v), max(u, v))
            if key in seen:
                raise GraphValidationError(f"duplicate edge ({u},{v})")
            seen.add(key)
        if not self.is_underlying_connected():
            raise GraphValidationError("underlying undirected graph is disconnected")

    def is_underlying_connected(self) -> bool:
        if self.n == 0:
            return False
        seen = {1}
        stack = [1]
        while stack:
            u = stack.pop()
            for v in self._nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n


def underlying_undirected(g: Graph) -> Graph:
    """Channel topology of g: one undirected edge per adjacent node pair.

    Used only for communication; weights are kept (min over the two
    directions) purely so the result is still a valid Graph.
    """
    best: dict[tuple[int, int], int] = {}
    for u, v, w in g.edges:
        key = (min(u, v), max(u, v))
        if key not in best or w < best[key]:
            best[key] = w
    edges = tuple(sorted((u, v, w) for (u, v), w in best.items()))
    return Graph(g.n, False, edges)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _check_n(n: int) -> None:
    if n < 2:
        raise ConfigurationError(f"need at least 2 nodes, got {n}")


def path_graph(n: int, w: int = 1, directed: bool = False) -> Graph:
    _check_n(n)
    edges = tuple((i, i + 1, w) for i in range(1, n))
    g = Graph(n, directed, edges)
    g.validate()
    return g


def cycle_graph(n: int, w: int = 1, directed: bool = False) -> Graph:
    _check_n(n)
    edges = tuple((i, i + 1, w) for i in range(1, n)) + ((n, 1, w),)
    g = Graph(n, directed, edges)
    g.validate()
    return g


def star_graph(n: int, w: int = 1, directed: bool = False) -> Graph:
    _check_n(n)
    edges = tuple((1, i, w) for i in range(2, n + 1))
    g = Graph(n, directed, edges)
    g.validate()
    return g


def grid_graph(rows: int, cols: int, w: int = 1) -> Graph:
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ConfigurationError(f"grid {rows}x{cols} too small")
    def nid(r, c):
        return r * cols + c + 1
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((nid(r, c), nid(r, c + 1), w))
            if r + 1 < rows:
                edges.append((nid(r, c), nid(r + 1, c), w))
    g = Graph(rows * cols, False, tuple(sorted(edges)))
    g.validate()
    return g


def gnp_graph(n: int, p: float, wmax: int, seed: int, directed: bool = False) -> Graph:
    """Erdos-Renyi with integer weights in [0, wmax].

    Deterministic for a fixed (n, p, wmax, seed, directed). If the sampled
    graph is not connected (underlying sense), the missing edges of the
    spanning path 1-2-...-n are added with seeded random weights.
    """
    _check_n(n)
    if not (0.0 <= p <= 1.0):
        raise ConfigurationError(f"edge probability {p} not in [0,1]")
    if wmax < 0:
        raise ConfigurationError(f"wmax must be nonnegative, got {wmax}")
    rng = random.Random(seed)
    present = {}
    if directed:
        for u in range(1, n + 1):
            for v in range(1, n + 1):
                if u != v and rng.random() < p:
                    present[(u, v)] = rng.randint(0, wmax)
    else:
        for u in range(1, n + 1):
            for v in range(u + 1, n + 1):
                if rng.random() < p:
                    present[(u, v)] = rng.randint(0, wmax)
    g = Graph(n, directed, tuple(sorted((u, v, w) for (u, v), w in present.items())))
    if not g.is_underlying_connected():
        for i in range(1, n):
            has_channel = (i, i + 1) in present or (directed and (i + 1, i) in present)
            if not has_channel:
                present[(i, i + 1)] = rng.randint(0, wmax)
        g = Graph(n, directed, tuple(sorted((u, v, w) for (u, v), w in present.items())))
    g.validate()
    return g


def generate_graph(spec: str, seed: int = 0) -> Graph:
    """Build a graph from a compact spec string.

    Forms: ``path:N[:W]``, ``cycle:N[:W]``, ``star:N[:W]``, ``grid:R:C[:W]``,
    ``gnp:N:P:WMAX``. Append ``:directed`` to any form for a directed graph.
    """
    parts = spec.split(":")
    name = parts[0]
    directed = False
    if parts and parts[-1] == "directed":
        directed = True
        parts = parts[:-1]
    args = parts[1:]
    try:
        if name == "path":
            return path_graph(int(args[0]), int(args[1]) if len(args) > 1 else 1, directed)
        if name == "cycle":
            return cycle_graph(int(args[0]), int(args[1]) if len(args) > 1 else 1, directed)
        if name == "star":
            return star_graph(int(args[0]), int(args[1]) if len(args) > 1 else 1, directed)
        if name == "grid":
            return grid_graph(int(args[0]), int(args[1]), int(args[2]) if len(args) > 2 else 1)
        if name == "gnp":
            return gnp_graph(int(args[0]), float(args[1]), int(args[2]), seed, directed)
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"bad generator spec {spec!r}: {exc}") from exc
    raise ConfigurationError(f"unknown generator {name!r}")


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def load_graph(path: str, fmt: str) -> Graph:
    if fmt == "dimacs":
        return _load_dimacs(path)
    if fmt == "json":
        return _load_json(path)
    raise ConfigurationError(f"unknown graph format {fmt!r}")


def _load_dimacs(path: str) -> Graph:
    """DIMACS shortest-path format: 'p sp <n> <m>' then 'a <u> <v> <w>' arcs."""
    n = None
    edges = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("c"):
                continue
            fields = line.split()
            if fields[0] == "p":
                if len(fields) != 4 or fields[1] != "sp":
                    raise ConfigurationError(f"{path}:{lineno}: bad problem line {line!r}")
                n = int(fields[2])
            elif fields[0] == "a":
                if len(fields) != 4:
                    raise ConfigurationError(f"{path}:{lineno}: bad arc line {line!r}")
                try:
                    u, v, w = int(fields[1]), int(fields[2]), int(fields[3])
                except ValueError as exc:
                    raise ConfigurationError(f"{path}:{lineno}: {exc}") from exc
                if w < 0:
                    raise GraphValidationError(f"{path}:{lineno}: negative weight {w}")
                edges.append((u, v, w))
            else:
                raise ConfigurationError(f"{path}:{lineno}: unknown line {line!r}")
    if n is None:
        raise ConfigurationError(f"{path}: missing 'p sp' problem line")
    g = Graph(n, True, tuple(sorted(edges)))
    g.validate()
    return g


def _load_json(path: str) -> Graph:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    try:
        n = int(data["n"])
        directed = bool(data["directed"])
        raw_edges = data["edges"]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"{path}: missing field {exc}") from exc
    edges = []
    for e in raw_edges:
        u, v, w = int(e[0]), int(e[1]), int(e[2])
        if w < 0:
            raise GraphValidationError(f"{path}: negative weight {w} on edge ({u},{v})")
        edges.append((u, v, w))
    g = Graph(n, directed, tuple(sorted(edges)))
    g.validate()
    return g


def dump_json(g: Graph, path: str) -> None:
    data = {"n": g.n, "directed": g.directed, "edges": [list(e) for e in g.edges]}
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)
        fh.write("\n")
