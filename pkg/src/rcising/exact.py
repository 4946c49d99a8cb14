"""Brute-force oracles on small graphs.

Three independent routes to the same quantities:

* spin sums over all 2^V configurations (``SpinSumOracle``),
* parity sums over all 2^E edge subsets (``parity_sum_Z``),
* three-state trace enumeration (``TraceEnsemble``): each edge is zero,
  even and positive, or odd, with summed current weights 1, cosh b - 1, sinh b.

The switching identities are verified by comparing independently enumerated
sides.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import mpmath
import numpy as np

from .currents import EVEN_POSITIVE, ODD, ZERO, FoldPlan, Multigraph, TraceConfig
from .graph import SmallGraph, as_graph
from .lattice import GeometryError, Hyperplane
from .unionfind import masks_connected, masks_reach_set

MAX_SPIN_VERTICES = 20
MAX_PARITY_EDGES = 24
MAX_TRACE_EDGES = 16
MAX_SWITCH_COPIES = 14
_FIXED_POINT_BITS = 128
_EXACT_WORK_LIMIT = 400_000


class BudgetError(ValueError):
    pass


class UnrealizableSources(ValueError):
    pass


@dataclass(frozen=True)
class ExactResult:
    value: float
    method: str
    fingerprint: str

    def __float__(self):
        return self.value


def _vertex_mask(vertices) -> int:
    m = 0
    for v in vertices:
        m ^= 1 << int(v)
    return m


def _even_set(A) -> list[int]:
    A = sorted({int(a) for a in A})
    if len(A) % 2:
        raise ValueError(f"source set {A} has odd cardinality")
    return A


class SpinSumOracle:
    """All 2^V spin configurations of a small graph, with the first spin pinned to +1.

    When the work ``2^(V-1) * E`` is small the Boltzmann weights are held as
    fixed-point integers, so correlations are exact up to one final rounding
    even when they are tiny compared with the partition function.  Otherwise
    weights are float64 and sums use exact float summation.
    """

    def __init__(self, g: SmallGraph, exact: bool | None = None):
        V, E = g.num_vertices, g.num_edges
        if V > MAX_SPIN_VERTICES:
            raise BudgetError(f"spin sums limited to {MAX_SPIN_VERTICES} vertices, got {V}")
        self.graph = g
        C = 1 << (V - 1)
        codes = np.arange(C, dtype=np.int64) << 1
        spins_neg = ((codes[:, None] >> np.arange(V)) & 1).astype(bool)
        agree = spins_neg[:, g.edges[:, 0]] == spins_neg[:, g.edges[:, 1]] if E else np.ones((C, 0), bool)
        self.codes = codes
        if exact is None:
            exact = C * max(E, 1) <= _EXACT_WORK_LIMIT
        self.exact = exact
        if exact:
            with mpmath.workdps(60):
                scale = mpmath.mpf(2) ** _FIXED_POINT_BITS
                up = [int(mpmath.nint(mpmath.exp(mpmath.mpf(float(b))) * scale)) for b in g.couplings]
                dn = [int(mpmath.nint(mpmath.exp(-mpmath.mpf(float(b))) * scale)) for b in g.couplings]
            self.weights = [
                math.prod(up[e] if a else dn[e] for e, a in enumerate(row)) for row in agree.tolist()
            ]
            self.Z = sum(self.weights)
        else:
            energy = (np.where(agree, 1.0, -1.0) * g.couplings).sum(axis=1)
            self.weights = np.exp(energy - energy.max())
            self.Z = math.fsum(self.weights)

    def correlation(self, A) -> float:
        A = _even_set(A)
        if not A:
            return 1.0
        mask = _vertex_mask(A)
        sign_neg = np.bitwise_count(self.codes & mask) & 1 if hasattr(np, "bitwise_count") else _popcount(
            self.codes & mask
        ) & 1
        if self.exact:
            neg = sum(w for w, s in zip(self.weights, sign_neg.tolist()) if s)
            return (self.Z - 2 * neg) / self.Z
        pos = math.fsum(self.weights[sign_neg == 0])
        neg = math.fsum(self.weights[sign_neg == 1])
        return (pos - neg) / self.Z

    def two_point(self, u: int, v: int) -> float:
        return 1.0 if u == v else self.correlation([u, v])


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    c = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        c += (a & np.uint64(1)).astype(np.int64)
        a = a >> np.uint64(1)
    return c


def spin_sum_correlation(g: SmallGraph, A) -> float:
    """<sigma_A> by direct summation over every spin configuration."""
    _even_set(A)
    return SpinSumOracle(g).correlation(A)


def _incidence_masks(g: SmallGraph) -> np.ndarray:
    return (np.uint64(1) << g.edges[:, 0].astype(np.uint64)) | (np.uint64(1) << g.edges[:, 1].astype(np.uint64))


def _subset_tables(vmask: np.ndarray, factor: np.ndarray):
    """Boundary masks and weight products of every subset of a short edge list."""
    bd = np.zeros(1, dtype=np.uint64)
    w = np.ones(1, dtype=np.float64)
    for m, f in zip(vmask, factor):
        bd = np.concatenate([bd, bd ^ m])
        w = np.concatenate([w, w * f])
    return bd, w


class ParitySum:
    """Sums of prod tanh(b_e) over edge subsets grouped by boundary, for all source sets at once.

    The 2^E subsets are enumerated as (low half) x (high half); every subset
    is visited exactly once and contributes to the bucket of its boundary.
    """

    def __init__(self, g: SmallGraph):
        E = g.num_edges
        if E > MAX_PARITY_EDGES:
            raise BudgetError(f"parity sums limited to {MAX_PARITY_EDGES} edges, got {E}")
        if g.num_vertices > 63:
            raise BudgetError("parity sums use 64-bit vertex masks")
        self.graph = g
        vm = _incidence_masks(g)
        t = np.tanh(g.couplings)
        half = E // 2
        bl, wl = _subset_tables(vm[:half], t[:half])
        bh, wh = _subset_tables(vm[half:], t[half:])
        buckets: dict[int, list[float]] = {}
        for b_hi, w_hi in zip(bh.tolist(), wh.tolist()):
            bd = bl ^ np.uint64(b_hi)
            ww = wl * w_hi
            order = np.argsort(bd, kind="stable")
            bd_s, ww_s = bd[order], ww[order]
            keys, starts = np.unique(bd_s, return_index=True)
            for k, chunk in zip(keys.tolist(), np.split(ww_s, starts[1:])):
                buckets.setdefault(k, []).extend(chunk.tolist())
        self.sums = {k: math.fsum(v) for k, v in buckets.items()}
        self.log_cosh = math.fsum(np.log(np.cosh(g.couplings)).tolist())

    def Z(self, A=()) -> float:
        A = _even_set(A)
        return math.exp(self.log_cosh) * self.sums.get(_vertex_mask(A), 0.0)

    def ratio(self, A) -> float:
        """Z^A / Z^emptyset (the cosh prefactor cancels)."""
        A = _even_set(A)
        return self.sums.get(_vertex_mask(A), 0.0) / self.sums[0]


def parity_sum_Z(g: SmallGraph, A=()) -> ExactResult:
    """Z^A = prod cosh(b_e) * sum over subsets w with boundary A of prod_{e in w} tanh(b_e)."""
    return ExactResult(ParitySum(g).Z(A), "parity-sum", g.fingerprint())


# ---------------------------------------------------------------------------
# three-state trace enumeration


def _spanning_forest(V: int, edges: np.ndarray):
    """BFS forest: parent vertex, parent edge, visit order, and non-tree edges."""
    adj = [[] for _ in range(V)]
    for e, (u, v) in enumerate(edges.tolist()):
        adj[u].append((v, e))
        adj[v].append((u, e))
    parent = [-1] * V
    pedge = [-1] * V
    comp = [-1] * V
    order = []
    for root in range(V):
        if comp[root] >= 0:
            continue
        comp[root] = root
        queue = [root]
        order.append(root)
        i = 0
        while i < len(queue):
            u = queue[i]
            i += 1
            for w, e in adj[u]:
                if comp[w] < 0:
                    comp[w] = root
                    parent[w] = u
                    pedge[w] = e
                    queue.append(w)
                    order.append(w)
    tree = {e for e in pedge if e >= 0}
    nontree = [e for e in range(len(edges)) if e not in tree]
    return parent, pedge, comp, order, nontree


def particular_odd_set(V: int, edges: np.ndarray, A) -> int:
    """An edge bitmask with boundary exactly A, built leaves-up on a spanning forest."""
    parent, pedge, comp, order, _ = _spanning_forest(V, edges)
    need = [0] * V
    for a in A:
        need[int(a)] ^= 1
    mask = 0
    for v in reversed(order):
        if parent[v] < 0:
            if need[v]:
                raise UnrealizableSources(f"sources {sorted(A)} cannot be paired inside components")
            continue
        if need[v]:
            mask |= 1 << pedge[v]
            need[v] = 0
            need[parent[v]] ^= 1
    return mask


def cycle_basis(V: int, edges: np.ndarray) -> list[int]:
    """Fundamental cycles (edge bitmasks) of a spanning forest."""
    parent, pedge, comp, order, nontree = _spanning_forest(V, edges)
    path = [0] * V
    for v in order:
        if parent[v] >= 0:
            path[v] = path[parent[v]] | (1 << pedge[v])
    basis = []
    for e in nontree:
        u, v = edges[e]
        basis.append((1 << e) ^ path[u] ^ path[v])
    return basis


def _scatter_bits(k: int, positions: np.ndarray) -> np.ndarray:
    idx = np.arange(1 << k, dtype=np.uint64)
    out = np.zeros(1 << k, dtype=np.uint64)
    for j, p in enumerate(positions.tolist()):
        out |= ((idx >> np.uint64(j)) & np.uint64(1)) << np.uint64(p)
    return out


class TraceEnsemble:
    """Every trace configuration compatible with source set A, with its total current weight.

    Configurations are stored as parallel arrays of odd-edge bitmasks,
    support bitmasks and weights.  ``Z`` equals the current partition function
    Z^A, so unnormalised event sums are exact partition functions too.
    """

    def __init__(self, g: SmallGraph, A=(), max_edges: int = MAX_TRACE_EDGES):
        E = g.num_edges
        if E > max_edges:
            raise BudgetError(f"trace enumeration limited to {max_edges} edges, got {E}")
        A = _even_set(A)
        self.graph = g
        self.sources = tuple(A)
        b = g.couplings
        w_odd = np.sinh(b)
        w_even = 2.0 * np.sinh(b / 2.0) ** 2
        eta0 = particular_odd_set(g.num_vertices, g.edges, A)
        evens = np.zeros(1, dtype=np.uint64)
        for c in cycle_basis(g.num_vertices, g.edges):
            evens = np.concatenate([evens, evens ^ np.uint64(c)])
        odd_list, sup_list, w_list = [], [], []
        full = (1 << E) - 1
        bits = np.arange(E)
        for eta in (evens ^ np.uint64(eta0)).tolist():
            in_eta = ((eta >> bits) & 1).astype(bool)
            free = np.flatnonzero(~in_eta)
            extra = _scatter_bits(len(free), free)
            base = math.prod(w_odd[in_eta].tolist())
            # weight of each superset = base * prod over chosen free edges of (cosh - 1)
            _, wf = _subset_tables(np.zeros(len(free), dtype=np.uint64), w_even[free])
            odd_list.append(np.full(extra.shape, eta, dtype=np.uint64))
            sup_list.append(extra | np.uint64(eta))
            w_list.append(base * wf)
            assert eta <= full
        self.odd = np.concatenate(odd_list)
        self.support = np.concatenate(sup_list)
        self.weight = np.concatenate(w_list)
        if not np.any(self.weight > 0):
            raise UnrealizableSources(f"Z^A vanishes for A={A}")
        self.Z = math.fsum(self.weight.tolist())

    def __len__(self):
        return int(self.weight.shape[0])

    def partition(self, event) -> float:
        """Z^A[event]."""
        mask = self.evaluate(event)
        return math.fsum(self.weight[mask].tolist())

    def probability(self, event) -> float:
        return self.partition(event) / self.Z

    def expectation(self, values: np.ndarray) -> float:
        return math.fsum((self.weight * values).tolist()) / self.Z

    def evaluate(self, event) -> np.ndarray:
        if isinstance(event, MaskEvent):
            out = event.fn(self.odd, self.support)
            return np.asarray(out, dtype=bool)
        return np.array([bool(event(t)) for t in self.configs()], dtype=bool)

    def configs(self):
        E = self.graph.num_edges
        bits = np.arange(E, dtype=np.uint64)
        for o, s in zip(self.odd.tolist(), self.support.tolist()):
            o_b = ((np.uint64(o) >> bits) & np.uint64(1)).astype(bool)
            s_b = ((np.uint64(s) >> bits) & np.uint64(1)).astype(bool)
            states = np.where(o_b, ODD, np.where(s_b, EVEN_POSITIVE, ZERO)).astype(np.uint8)
            yield TraceConfig(states, self.graph.edges, self.graph.num_vertices)


@dataclass(frozen=True)
class MaskEvent:
    """Vectorised event: ``fn(odd_masks, support_masks) -> bool array``."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __and__(self, other: "MaskEvent") -> "MaskEvent":
        return MaskEvent(lambda o, s: self.fn(o, s) & other.fn(o, s))

    def __or__(self, other: "MaskEvent") -> "MaskEvent":
        return MaskEvent(lambda o, s: self.fn(o, s) | other.fn(o, s))

    def __invert__(self) -> "MaskEvent":
        return MaskEvent(lambda o, s: ~self.fn(o, s))


ALWAYS = MaskEvent(lambda o, s: np.ones(o.shape, dtype=bool))


def _bool_vertices(V: int, vertices) -> np.ndarray:
    m = np.zeros(V, dtype=np.bool_)
    m[np.asarray(list(vertices), dtype=np.int64)] = True
    return m


def event_connected(graph: SmallGraph, A, B, plan: FoldPlan | None = None) -> MaskEvent:
    """A <-> B in the trace (or in the folded graph of ``plan``)."""
    V = graph.num_vertices
    a, b = _bool_vertices(V, A), _bool_vertices(V, B)
    if plan is None:
        ea, eb = graph.edges[:, 0].copy(), graph.edges[:, 1].copy()
    else:
        ea, eb = plan.fa, plan.fb
    return MaskEvent(lambda o, s: masks_connected(s, ea, eb, V, a, b))


def event_edge_state(e: int, state: int) -> MaskEvent:
    bit = np.uint64(1) << np.uint64(e)

    def fn(o, s):
        if state == ODD:
            return (o & bit) != 0
        if state == ZERO:
            return (s & bit) == 0
        return ((s & bit) != 0) & ((o & bit) == 0)

    return MaskEvent(fn)


def event_support_nonempty() -> MaskEvent:
    return MaskEvent(lambda o, s: s != 0)


def trace_event_probability(g: SmallGraph, A, event) -> float:
    """P^A[event] by enumeration.  ``event`` is a MaskEvent or a predicate on TraceConfig."""
    return TraceEnsemble(g, A).probability(event)


# ---------------------------------------------------------------------------
# switching identities


@dataclass(frozen=True)
class IdentityCheck:
    lhs: object
    rhs: object
    ok: bool

    def __bool__(self):
        return bool(self.ok)


def _subset_boundaries(vmasks: list[int]) -> np.ndarray:
    bd = np.zeros(1, dtype=np.uint64)
    for m in vmasks:
        bd = np.concatenate([bd, bd ^ np.uint64(m)])
    return bd


def switching_sides(M: Multigraph, A, K: Multigraph, f: Callable[[int], object]) -> tuple:
    """Both sides of the switching identity; ``f`` takes a copy bitmask of M.

    K is realised as the first ``m_K(e)`` copies of each edge of M.
    """
    if M.total > MAX_SWITCH_COPIES:
        raise BudgetError(f"switching checks limited to {MAX_SWITCH_COPIES} copies, got {M.total}")
    if np.any(K.multiplicity > M.multiplicity):
        raise ValueError("K must be a sub-multigraph of M")
    ce = M.copy_edges()
    vm = [(1 << int(M.edges[e, 0])) | (1 << int(M.edges[e, 1])) for e in ce]
    bd = _subset_boundaries(vm)
    kmask = 0
    pos = 0
    for e, m in enumerate(M.multiplicity.tolist()):
        for j in range(m):
            if j < K.multiplicity[e]:
                kmask |= 1 << (pos + j)
        pos += m
    a = _vertex_mask(_even_set(A)) if len(A) else 0
    dk = _vertex_mask(K.boundary())
    left = [f(int(m)) for m in np.flatnonzero(bd == np.uint64(a)).tolist()]
    right = [f(int(m) ^ kmask) for m in np.flatnonzero(bd == np.uint64(a ^ dk)).tolist()]
    return _exact_sum(left), _exact_sum(right)


def _exact_sum(values):
    if all(isinstance(v, (int, bool, np.integer, Fraction)) for v in values):
        return sum((Fraction(int(v)) if not isinstance(v, Fraction) else v for v in values), Fraction(0))
    return math.fsum(float(v) for v in values)


def verify_switching(M: Multigraph, A, K: Multigraph, f: Callable[[int], object]) -> bool:
    """Sum over N in M with boundary A of f(N) against the sum over boundary A^dK of f(N^K)."""
    lhs, rhs = switching_sides(M, A, K, f)
    if isinstance(lhs, Fraction) and isinstance(rhs, Fraction):
        return lhs == rhs
    return abs(float(lhs) - float(rhs)) <= 1e-12 * max(1.0, abs(float(lhs)), abs(float(rhs)))


def _vertex_index(geom, x) -> int:
    if isinstance(x, (int, np.integer)):
        return int(x)
    v = geom.find_vertex(x)
    if v < 0:
        raise GeometryError(f"vertex {tuple(x)} not in graph")
    return v


def _strictly_left(geom, h: Hyperplane, vertices) -> bool:
    side = geom.vertex_sides(h)
    return all(side[v] < 0 for v in vertices)


def verify_reflected_switching(geom, h: Hyperplane, beta, A, x, rtol: float = 1e-10) -> IdentityCheck:
    """Z^A[x <-> H in M_n] against Z^{A ^ {x, R x}}[x <-> H in M_n], enumerated separately."""
    g = as_graph(geom, beta) if beta is not None else as_graph(geom)
    if not g.is_symmetric(h):
        raise GeometryError(f"graph is not symmetric under reflection in {h}")
    A = [_vertex_index(g, a) for a in A]
    xv = _vertex_index(g, x)
    if not _strictly_left(g, h, A + [xv]):
        raise GeometryError("sources and x must lie strictly left of the hyperplane")
    plan = FoldPlan(g, h)
    rx = int(plan.reflection[xv])
    event = event_connected(g, [xv], np.flatnonzero(plan.on_plane), plan)
    lhs = TraceEnsemble(g, A).partition(event)
    B = sorted(set(A) ^ {xv, rx})
    rhs = TraceEnsemble(g, B).partition(event)
    ok = abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs), 1e-300)
    return IdentityCheck(lhs, rhs, ok)


@dataclass(frozen=True)
class LemmaCheck:
    lhs: float
    rhs: float
    ok: bool
    details: dict

    def __bool__(self):
        return bool(self.ok)


def box_members(g: SmallGraph, m: int) -> np.ndarray:
    """Mask of vertices of g inside Lambda_m = [-m, m]^d."""
    return np.all(np.abs(g.coords) <= m, axis=1)


def verify_lemma25(geom, h: Hyperplane, beta=None) -> LemmaCheck:
    """Finite-volume folded-current inequality around the origin.

    lhs = E^0[1{0 in S1} sum_{x in S1, y ~ x, y in Lambda_n} 1{y <-> H in M_n} <s_0 s_x>_{S1}]
    rhs = sum_{x, y in Lambda_n, y ~ x} (<s_0 s_x> - <s_0 s_{Rx}>) <s_y s_{Ry}>
    with S1 the vertices of Lambda_{n-1} not joined to H in M_n, all on the graph itself.
    """
    g = as_graph(geom, beta) if beta is not None else as_graph(geom)
    if h.axis != 0 or h.sign != 1:
        raise GeometryError("the origin-based inequality is stated for H_n(+e_1)")
    if g.num_vertices > MAX_SPIN_VERTICES:
        raise BudgetError("graph too large for spin sums")
    n = h.level
    origin = g.find_vertex(np.zeros(g.dim, dtype=np.int64))
    if origin < 0:
        raise GeometryError("the graph must contain the origin")
    if not g.is_symmetric(h):
        raise GeometryError(f"graph is not symmetric under reflection in {h}")
    plan = FoldPlan(g, h)
    ens = TraceEnsemble(g, ())
    V = g.num_vertices
    in_n = box_members(g, n)
    in_n1 = box_members(g, n - 1)
    pairs = [(int(u), int(v)) for u, v in g.edges if in_n[u] and in_n[v]]
    pairs = pairs + [(v, u) for u, v in pairs]  # ordered (x, y)

    reach = masks_reach_set(ens.support, plan.fa, plan.fb, V, plan.on_plane)
    lam1 = _vertex_mask(np.flatnonzero(in_n1))
    s1 = np.uint64(lam1) & ~reach
    has0 = (s1 >> np.uint64(origin)) & np.uint64(1) == 1
    weights: dict[tuple[int, int], list[float]] = {}
    for s, r, w in zip(s1[has0].tolist(), reach[has0].tolist(), ens.weight[has0].tolist()):
        weights.setdefault((s, r), []).append(w)

    cache: dict[int, SpinSumOracle] = {}
    total = []
    for (s, r), ws in sorted(weights.items()):
        members = [v for v in range(V) if (s >> v) & 1]
        if s not in cache:
            sub, _ = g.induced(members)
            cache[s] = (SpinSumOracle(sub), {v: i for i, v in enumerate(members)})
        oracle, local = cache[s]
        val = []
        for x, y in pairs:
            if (s >> x) & 1 and (r >> y) & 1:
                val.append(oracle.two_point(local[origin], local[x]))
        total.append(math.fsum(ws) * math.fsum(val))
    lhs = math.fsum(total) / ens.Z

    full = SpinSumOracle(g)
    r = plan.reflection
    rhs_terms = [
        (full.two_point(origin, x) - full.two_point(origin, int(r[x]))) * full.two_point(y, int(r[y]))
        for x, y in pairs
    ]
    rhs = math.fsum(rhs_terms)
    ok = lhs <= rhs * (1 + 1e-12) + 1e-15
    return LemmaCheck(lhs, rhs, ok, {"pairs": len(pairs), "configs": len(ens), "S1_sets": len(cache)})
