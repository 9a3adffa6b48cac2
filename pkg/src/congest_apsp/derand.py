"""Pairwise-independent sample spaces and leader-driven good-set search.

Two enumerable spaces provide the indicator assignments X_v:

* XorSpace: points are l-bit strings with 2n < 2^l <= 4n; node v is encoded
  as the bits of 2v+1 and X_v(z) is the GF(2) inner product. Marginals are
  exactly 1/2 and every pair (X_u, X_v), u != v, is exactly uniform on
  {0,1}^2 over the full enumeration.
* PrimeSpace: points are all (a, b) in Z_q^2 for the smallest prime
  q > max(n, ceil(1/p)); X_v = 1 iff (a*v + b) mod q < c with c the
  half-up rounding of p*q (clamped to >= 1). Marginals are exactly c/q and
  pairs are exactly (c/q)^2, so arbitrary quantized selection probabilities
  come with exact pairwise independence at the cost of a q^2-point space.

The good-set search aggregates per-node coverage counts for every sample
point to a leader over a BFS tree, one point per pipelined round; the leader
picks the first point whose induced set passes both coverage thresholds and
floods it back.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .engine import BfsTree, EngineConfig, Metrics, NodeProgram, broadcast_k, run_phase
from .errors import ConfigurationError, RoundAccountingError
from .graphs import Graph


def _next_prime(k: int) -> int:
    cand = k + 1
    while True:
        if cand < 2:
            cand = 2
        for d in range(2, int(cand ** 0.5) + 1):
            if cand % d == 0:
                break
        else:
            return cand
        cand += 1


@dataclass(frozen=True)
class XorSpace:
    n: int
    l: int

    @property
    def size(self) -> int:
        return 1 << self.l

    def encode(self, v: int) -> int:
        return 2 * v + 1

    def indicator(self, mu: int, v: int) -> int:
        return bin(self.encode(v) & mu).count("1") & 1

    def members(self, mu: int, candidates) -> list[int]:
        return [v for v in candidates if self.indicator(mu, v)]


def build_xor_space(n: int) -> XorSpace:
    if n < 1:
        raise ConfigurationError("sample space needs n >= 1")
    l = 1
    while (1 << l) <= 2 * n:
        l += 1
    assert 2 * n < (1 << l) <= 4 * n
    return XorSpace(n, l)


@dataclass(frozen=True)
class PrimeSpace:
    n: int
    p: Fraction
    q: int
    c: int

    @property
    def size(self) -> int:
        return self.q * self.q

    def indicator(self, mu: int, v: int) -> int:
        a, b = divmod(mu, self.q)
        return 1 if (a * v + b) % self.q < self.c else 0

    def members(self, mu: int, candidates) -> list[int]:
        a, b = divmod(mu, self.q)
        q, c = self.q, self.c
        return [v for v in candidates if (a * v + b) % q < c]


def build_prime_space(n: int, p: Fraction) -> PrimeSpace:
    if not (0 < p <= Fraction(1, 2)):
        raise ConfigurationError(f"selection probability {p} not in (0, 1/2]")
    bound = max(n, -(-p.denominator // p.numerator))  # ceil(1/p)
    q = _next_prime(bound)
    c = int(p * q + Fraction(1, 2))  # round half up
    c = max(1, c)
    if c == 0:
        raise ConfigurationError(f"probability {p} unrepresentable at q={q}")
    return PrimeSpace(n, p, q, c)


def sigma_local(pi_paths: list, pij_paths: list, selected: set[int]) -> tuple[int, int]:
    """Counts of a leaf's paths containing at least one selected node."""
    cov_pi = sum(1 for path in pi_paths if any(z in selected for z in path))
    cov_pij = sum(1 for path in pij_paths if any(z in selected for z in path))
    return cov_pi, cov_pij


class _NuPipeline(NodeProgram):
    # node at depth d sends sample point index m (0-based) at round
    # (height - d) + m + 1; children's values for m arrive exactly then
    def __init__(self, v, tree: BfsTree, sigma_pi, sigma_pij, m_count):
        self.v = v
        self.is_root = v == tree.root
        self.parent = tree.parent[v]
        self.base = tree.height - tree.depth[v]
        self.m_count = m_count
        self.pi = list(sigma_pi)
        self.pij = list(sigma_pij)

    def step(self, r, inbox):
        # children sit one level deeper, so their point-m values arrive in
        # exactly the round this node forwards point m
        m = r - self.base - 1
        if inbox and 0 <= m < self.m_count:
            for _, msg in inbox:
                self.pi[m] += msg[0]
                self.pij[m] += msg[1]
        if not self.is_root and 0 <= m < self.m_count:
            return [(self.parent, (self.pi[m], self.pij[m]))]
        return None

    def next_wake(self, r):
        if self.is_root or self.m_count == 0:
            return None
        first = self.base + 1
        last = self.base + self.m_count
        if r < first:
            return first
        if r < last:
            return r + 1
        return None


def aggregate_nu(g: Graph, tree: BfsTree, sigma_pi: dict[int, list[int]],
                 sigma_pij: dict[int, list[int]], m_count: int,
                 cfg: EngineConfig, metrics: Metrics,
                 name: str = "aggregate_nu") -> tuple[list[int], list[int]]:
    """Leader's total coverage counts for every sample point.

    Both count streams ride one pipelined convergecast (2 words/message);
    finishes within height + m_count rounds.
    """
    programs = {
        v: _NuPipeline(v, tree, sigma_pi.get(v, [0] * m_count),
                       sigma_pij.get(v, [0] * m_count), m_count)
        for v in g.node_ids()
    }
    rounds, _ = run_phase(g, programs, cfg, metrics, name)
    bound = tree.height + m_count
    if rounds > bound:
        raise RoundAccountingError(f"nu pipeline took {rounds} > depth+M = {bound}")
    root = programs[tree.root]
    return root.pi, root.pij


def is_good_set(a_size: int, coverage_pi: int, coverage_pij: int, i: int, j: int,
                p_i_size: int, p_ij_size: int, params) -> bool:
    """Both coverage thresholds, in exact rational arithmetic.

    p_i_size is part of the interface for symmetry; the first clause scales
    with |A| and the stage index, not with |P_i|.
    """
    eps, delta = params.epsilon, params.delta
    need_pi = a_size * (1 + eps) ** i * (1 - 3 * delta - eps)
    if Fraction(coverage_pi) < need_pi:
        return False
    if Fraction(coverage_pij) < Fraction(delta, 2) * p_ij_size:
        return False
    return True


@dataclass
class GoodPointResult:
    selected: list[int]
    mu: int
    good: bool


def find_good_point(g: Graph, space, v_i: list[int],
                    pi_paths_by_leaf: dict[int, list],
                    pij_paths_by_leaf: dict[int, list],
                    params, i: int, j: int, p_i_size: int, p_ij_size: int,
                    cfg: EngineConfig, metrics: Metrics, tree: BfsTree,
                    name: str = "find_good_point") -> GoodPointResult:
    """Exhaustive search: first enumerated sample point that is good.

    If no point passes, falls back to the point maximizing P_ij coverage
    (P_i coverage, then lowest index, as tie-breaks) and flags the run.
    The chosen indicator restricted to V_i is flooded to all nodes.
    """
    v_i_set = set(v_i)
    m_count = space.size
    member_cache = [space.members(mu, v_i) for mu in range(m_count)]
    sigma_pi: dict[int, list[int]] = {}
    sigma_pij: dict[int, list[int]] = {}
    for v in g.node_ids():
        pi_paths = pi_paths_by_leaf.get(v, ())
        pij_paths = pij_paths_by_leaf.get(v, ())
        if not pi_paths and not pij_paths:
            continue
        pi_row = [0] * m_count
        pij_row = [0] * m_count
        for mu in range(m_count):
            sel = set(member_cache[mu])
            a, b = sigma_local(pi_paths, pij_paths, sel)
            pi_row[mu] = a
            pij_row[mu] = b
        sigma_pi[v] = pi_row
        sigma_pij[v] = pij_row

    nu_pi, nu_pij = aggregate_nu(g, tree, sigma_pi, sigma_pij, m_count, cfg,
                                 metrics, name + "/nu")

    chosen = None
    for mu in range(m_count):
        a_size = len(member_cache[mu])
        if is_good_set(a_size, nu_pi[mu], nu_pij[mu], i, j, p_i_size,
                       p_ij_size, params):
            chosen = mu
            good = True
            break
    if chosen is None:
        good = False
        chosen = max(range(m_count), key=lambda mu: (nu_pij[mu], nu_pi[mu], -mu))

    selected = sorted(member_cache[chosen])
    broadcast_k(g, tree.root, [(v,) for v in selected], cfg, metrics,
                tree=tree, name=name + "/flood")
    metrics.derand_reports.append({
        "space_kind": type(space).__name__,
        "space_size": m_count,
        "chosen_mu": chosen,
        "good_flag": good,
    })
    return GoodPointResult(selected, chosen, good)
