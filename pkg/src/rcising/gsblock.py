"""Ising-type Griffiths-Simon block models realised as flat Ising graphs.

Each base site x carries N Ising spins sigma_(x,i); the block field is
tau_x = sum_i Q_i sigma_(x,i).  Spins in one block interact through J_ij
(one coupling per unordered pair), and spins of neighbouring blocks through
beta * Q_i * Q_j.  Zero couplings are dropped from the flat graph.

Block indices are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .currents import FoldPlan
from .exact import (
    MAX_SPIN_VERTICES,
    BudgetError,
    LemmaCheck,
    ParitySum,
    SpinSumOracle,
    TraceEnsemble,
    _vertex_mask,
    box_members,
    event_connected,
)
from .graph import SmallGraph, as_graph
from .lattice import GeometryError, Hyperplane
from .unionfind import masks_reach_set


class BlockModelError(ValueError):
    pass


@dataclass
class GSBlockModel:
    base: SmallGraph
    N: int
    J: np.ndarray
    Q: np.ndarray
    beta: float
    flat: SmallGraph = field(repr=False)
    _oracle: SpinSumOracle | None = field(default=None, repr=False)

    def block(self, x: int) -> np.ndarray:
        return np.arange(x * self.N, (x + 1) * self.N)

    def site(self, x) -> int:
        if isinstance(x, (int, np.integer)):
            if not 0 <= int(x) < self.base.num_vertices:
                raise BlockModelError(f"site {x} outside the base graph")
            return int(x)
        v = self.base.find_vertex(x) if self.base.coords is not None else -1
        if v < 0:
            raise BlockModelError(f"site {tuple(x)} outside the base graph")
        return v

    def oracle(self) -> SpinSumOracle:
        if self._oracle is None:
            self._oracle = SpinSumOracle(self.flat)
        return self._oracle

    def pair_correlations(self, x, y) -> np.ndarray:
        """Matrix of <sigma_(x,i) sigma_(y,j)> by exact spin sums."""
        x, y = self.site(x), self.site(y)
        o = self.oracle()
        bx, by = self.block(x), self.block(y)
        return np.array([[o.two_point(int(a), int(b)) for b in by] for a in bx])


def build_gs_model(base, N: int, J, Q, beta: float) -> GSBlockModel:
    """Flat graph on base x K_N with intra-block couplings J_ij and inter-block beta Q_i Q_j."""
    base = as_graph(base, 1.0) if not isinstance(base, SmallGraph) else base
    J = np.asarray(J, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if N < 1 or J.shape != (N, N) or Q.shape != (N,):
        raise BlockModelError(f"inconsistent shapes: N={N}, J{J.shape}, Q{Q.shape}")
    if np.any(J < 0) or np.any(Q < 0) or beta < 0:
        raise BlockModelError("block couplings must be nonnegative (ferromagnetic)")
    if not np.allclose(J, J.T):
        raise BlockModelError("J must be symmetric")
    V = base.num_vertices
    edges, coup = [], []
    for x in range(V):
        for i in range(N):
            for j in range(i + 1, N):
                if J[i, j] > 0:
                    edges.append((x * N + i, x * N + j))
                    coup.append(J[i, j])
    for u, v in base.edges.tolist():
        for i in range(N):
            for j in range(N):
                c = beta * Q[i] * Q[j]
                if c > 0:
                    edges.append((u * N + i, v * N + j))
                    coup.append(c)
    coords = None if base.coords is None else np.repeat(base.coords, N, axis=0)
    layers = np.tile(np.arange(N), V)
    flat = SmallGraph(V * N, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(coup), coords, layers,
                      name=f"{base.name}xK{N}")
    return GSBlockModel(base, N, J, Q, float(beta), flat)


def mean_field_block(N: int, j: float, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Convenience preset (not derived from any target single-site measure):
    complete-graph block J_ij = j/N off the diagonal, Q_i = q."""
    J = np.full((N, N), j / N)
    np.fill_diagonal(J, 0.0)
    return J, np.full(N, float(q))


def model_from_fixture(fx, beta: float) -> GSBlockModel:
    if not fx.is_block:
        raise BlockModelError(f"fixture {fx.name} is not a block model")
    base = SmallGraph(fx.num_vertices, fx.edges, 1.0, coords=fx.coords, name=fx.name)
    return build_gs_model(base, fx.block_size, fx.J, fx.Q, beta)


def block_two_point(model: GSBlockModel, x, y) -> float:
    """<tau_x tau_y> = sum_ij Q_i Q_j <sigma_(x,i) sigma_(y,j)> (exact spin sums)."""
    C = model.pair_correlations(x, y)
    return math.fsum((np.outer(model.Q, model.Q) * C).ravel().tolist())


@dataclass(frozen=True)
class BlockSourcePick:
    i: int
    j: int
    probabilities: np.ndarray


def block_source_probabilities(model: GSBlockModel, x, y) -> np.ndarray:
    C = model.pair_correlations(x, y)
    P = np.outer(model.Q, model.Q) * C
    total = math.fsum(P.ravel().tolist())
    if not total > 0:
        raise BlockModelError("<tau_x tau_y> vanishes; no source pick is defined")
    return P / total


def sample_block_sources(model: GSBlockModel, x, y, rng: np.random.Generator, size: int | None = None):
    """Draw (i, j) with probability Q_i Q_j <sigma_(x,i) sigma_(y,j)> / <tau_x tau_y>."""
    P = block_source_probabilities(model, x, y)
    flat = P.ravel()
    k = rng.choice(flat.size, size=size, p=flat / flat.sum())
    if size is None:
        return BlockSourcePick(int(k // model.N), int(k % model.N), P)
    return np.stack([k // model.N, k % model.N], axis=-1)


# ---------------------------------------------------------------------------
# reflected switching and the block inequality


@dataclass(frozen=True)
class BlockSwitchingCheck:
    equality_lhs: float | None
    equality_rhs: float | None
    equality_ok: bool
    bound_lhs: float
    bound_rhs: float
    bound_ok: bool

    @property
    def slack(self) -> float:
        return self.bound_rhs - self.bound_lhs

    def __bool__(self):
        return bool(self.equality_ok and self.bound_ok)


def _block_geometry(model: GSBlockModel, h: Hyperplane):
    g = model.flat
    if g.coords is None:
        raise GeometryError("block model needs base coordinates")
    if not model.base.is_symmetric(h):
        raise GeometryError(f"base graph is not symmetric under reflection in {h}")
    if g.num_edges > 16:
        raise BudgetError(f"flat graph has {g.num_edges} edges; trace enumeration allows 16")
    return g, FoldPlan(g, h)


def verify_block_switching(model: GSBlockModel, h: Hyperplane, x, rtol: float = 1e-10) -> BlockSwitchingCheck:
    """Block switching at a site x strictly left of h, each side enumerated separately.

    equality: sum_ij Q_i Q_j Z^{(0,i),(x,j)}[(x,j) <-> H x K_N in M_n]
              = sum_ij Q_i Q_j Z^{(0,i),(Rx,j)}
    bound:    Z^0[B_x <-> H x K_N in M_n] <= beta sum_{x' ~ x} sum_ij Q_i Q_j Z^{(x,i),(Rx',j)}

    The equality is only defined for x != 0; at the origin its fields are None.
    """
    g, plan = _block_geometry(model, h)
    xs = model.site(x)
    origin = model.base.find_vertex(np.zeros(model.base.dim, dtype=np.int64))
    side = model.base.vertex_sides(h)
    if side[xs] >= 0:
        raise GeometryError("x must lie strictly left of the hyperplane")
    if origin < 0 or side[origin] >= 0:
        raise GeometryError("the origin must be a base site strictly left of the hyperplane")
    rbase = model.base.reflection_map(h)
    rx = int(rbase[xs])
    plane = np.flatnonzero(plan.on_plane)
    Q, N = model.Q, model.N
    parity = ParitySum(g)

    lhs_terms, rhs_terms = [], []
    for i in range(N if xs != origin else 0):
        for j in range(N):
            q = Q[i] * Q[j]
            if q == 0:
                continue
            src = [origin * N + i, xs * N + j]
            ev = event_connected(g, [xs * N + j], plane, plan)
            lhs_terms.append(q * TraceEnsemble(g, src).partition(ev))
            rhs_terms.append(q * parity.Z([origin * N + i, rx * N + j]))
    if xs != origin:
        eq_l, eq_r = math.fsum(lhs_terms), math.fsum(rhs_terms)
        eq_ok = abs(eq_l - eq_r) <= rtol * max(abs(eq_l), abs(eq_r), 1e-300)
    else:
        eq_l = eq_r = None
        eq_ok = True

    ev_block = event_connected(g, model.block(xs), plane, plan)
    b_l = TraceEnsemble(g, ()).partition(ev_block)
    nbrs = [int(v) for u, v in model.base.edges if u == xs] + [int(u) for u, v in model.base.edges if v == xs]
    terms = []
    for xp in nbrs:
        rxp = int(rbase[xp])
        for i in range(N):
            for j in range(N):
                a, b = xs * N + i, rxp * N + j
                if a == b:
                    terms.append(Q[i] * Q[j] * parity.Z(()))
                else:
                    terms.append(Q[i] * Q[j] * parity.Z([a, b]))
    b_r = model.beta * math.fsum(terms)
    return BlockSwitchingCheck(eq_l, eq_r, eq_ok, b_l, b_r, b_l <= b_r * (1 + 1e-12))


def verify_lemma36(model: GSBlockModel, h: Hyperplane) -> LemmaCheck:
    """Block analogue of the origin inequality, by full enumeration on the flat graph.

    lhs = E^0[1{0 in S1} sum_{x in S1, y ~ x, y in Lambda_n} 1{B_y <-> H x K_N} <tau_0 tau_x>_{S1}]

    Two right-hand sides are reported.  ``rhs_literal`` weights each pair by
    beta sum_{y' ~ y} <tau_y tau_{R y'}> for every y.  ``rhs`` uses that weight
    only for y strictly left of H and weight 1 for y on H, where the block
    connection event is certain; this is the bound the conditioning argument
    supports, and ``ok`` refers to it.
    """
    g, plan = _block_geometry(model, h)
    if h.axis != 0 or h.sign != 1:
        raise GeometryError("the origin-based inequality is stated for H_n(+e_1)")
    if g.num_vertices > MAX_SPIN_VERTICES:
        raise BudgetError("flat graph too large for spin sums")
    base = model.base
    N, Q = model.N, model.Q
    n = h.level
    origin = base.find_vertex(np.zeros(base.dim, dtype=np.int64))
    if origin < 0:
        raise GeometryError("the base graph must contain the origin")
    in_n = box_members(base, n)
    in_n1 = box_members(base, n - 1)
    pairs = [(int(u), int(v)) for u, v in base.edges if in_n[u] and in_n[v]]
    pairs = pairs + [(v, u) for u, v in pairs]
    Vb = base.num_vertices

    ens = TraceEnsemble(g, ())
    reach = masks_reach_set(ens.support, plan.fa, plan.fb, g.num_vertices, plan.on_plane)
    block_bits = [_vertex_mask(range(x * N, (x + 1) * N)) for x in range(Vb)]
    # base-level masks: which blocks touch the plane cluster
    reach_list = reach.tolist()
    base_reach = np.array(
        [sum(1 << x for x in range(Vb) if r & block_bits[x]) for r in reach_list], dtype=np.uint64
    )
    lam1 = np.uint64(_vertex_mask(np.flatnonzero(in_n1)))
    s1 = lam1 & ~base_reach
    has0 = ((s1 >> np.uint64(origin)) & np.uint64(1)) == 1
    groups: dict[tuple[int, int], list[float]] = {}
    for s, r, w in zip(s1[has0].tolist(), base_reach[has0].tolist(), ens.weight[has0].tolist()):
        groups.setdefault((s, r), []).append(w)

    cache = {}
    total = []
    for (s, r), ws in sorted(groups.items()):
        if s not in cache:
            sites = [x for x in range(Vb) if (s >> x) & 1]
            flat_members = [x * N + i for x in sites for i in range(N)]
            sub, _ = g.induced(flat_members)
            local = {v: k for k, v in enumerate(flat_members)}
            cache[s] = (SpinSumOracle(sub), local)
        oracle, local = cache[s]

        def tau(a, b):
            return math.fsum(
                Q[i] * Q[j] * oracle.two_point(local[a * N + i], local[b * N + j])
                for i in range(N)
                for j in range(N)
            )

        vals = [tau(origin, x) for x, y in pairs if (s >> x) & 1 and (r >> y) & 1]
        total.append(math.fsum(ws) * math.fsum(vals))
    lhs = math.fsum(total) / ens.Z

    rb = base.reflection_map(h)
    on_h = base.vertex_sides(h) == 0
    two = {}

    def full_tau(a, b):
        key = (a, b)
        if key not in two:
            two[key] = block_two_point(model, a, b)
        return two[key]

    nbr = {v: [] for v in range(Vb)}
    for u, v in base.edges.tolist():
        nbr[u].append(v)
        nbr[v].append(u)
    lit, cor = [], []
    for x, y in pairs:
        diff = full_tau(origin, x) - full_tau(origin, int(rb[x]))
        w_lit = model.beta * math.fsum(full_tau(y, int(rb[yp])) for yp in nbr[y])
        lit.append(diff * w_lit)
        cor.append(diff * (1.0 if on_h[y] else w_lit))
    rhs_literal = math.fsum(lit)
    rhs = math.fsum(cor)
    ok = lhs <= rhs * (1 + 1e-12) + 1e-15
    return LemmaCheck(
        lhs,
        rhs,
        ok,
        {
            "rhs_literal": rhs_literal,
            "literal_ok": bool(lhs <= rhs_literal * (1 + 1e-12) + 1e-15),
            "pairs": len(pairs),
            "configs": len(ens),
        },
    )
