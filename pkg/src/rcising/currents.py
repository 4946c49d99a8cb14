"""Currents, their traces, folded multigraphs and the S_n sets.

A current is a nonnegative integer per edge.  Every connectivity event used
downstream depends only on the *trace*: for each edge whether the value is
zero, even and positive, or odd.  Traces are therefore the runtime
representation; integer currents stay in the exact engine and in tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .lattice import Box, GeometryError, GraphGeometry, Hyperplane, hyperplanes
from .unionfind import DisjointSet

ZERO, EVEN_POSITIVE, ODD = 0, 1, 2


def _parity_boundary(edges: np.ndarray, values: np.ndarray, num_vertices: int) -> np.ndarray:
    deg = np.zeros(num_vertices, dtype=np.int64)
    v = np.asarray(values, dtype=np.int64)
    np.add.at(deg, edges[:, 0], v)
    np.add.at(deg, edges[:, 1], v)
    return np.flatnonzero(deg & 1)


@dataclass(frozen=True)
class Current:
    values: np.ndarray
    edges: np.ndarray
    num_vertices: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.shape != (self.edges.shape[0],):
            raise ValueError("one current value per edge is required")
        if np.any(vals < 0):
            raise ValueError("current values are nonnegative")
        object.__setattr__(self, "values", vals)

    @classmethod
    def on(cls, graph, values) -> "Current":
        return cls(np.asarray(values), graph.edges, graph.num_vertices)

    def trace(self) -> "TraceConfig":
        states = np.where(self.values == 0, ZERO, np.where(self.values % 2 == 1, ODD, EVEN_POSITIVE))
        return TraceConfig(states.astype(np.uint8), self.edges, self.num_vertices)

    def multigraph(self) -> "Multigraph":
        return Multigraph(self.values, self.edges, self.num_vertices)


def sources(c: Current) -> np.ndarray:
    """Vertices with odd total incident current (sorted indices)."""
    return _parity_boundary(c.edges, c.values, c.num_vertices)


def log_weight(c: Current, beta) -> float:
    """log of prod_e beta_e^{n_e} / n_e!, accumulated with exact float summation."""
    beta = np.broadcast_to(np.asarray(beta, dtype=np.float64), c.values.shape)
    terms = []
    for n, b in zip(c.values.tolist(), beta.tolist()):
        if n == 0:
            continue
        if b <= 0:
            raise ValueError("weights need positive couplings on occupied edges")
        terms.append(n * math.log(b))
        terms.append(-math.lgamma(n + 1))
    return math.fsum(terms)


def weight(c: Current, beta) -> float:
    return math.exp(log_weight(c, beta))


@dataclass(frozen=True)
class Multigraph:
    """Edge multiplicities on a fixed edge list; copies of an edge are distinguishable."""

    multiplicity: np.ndarray
    edges: np.ndarray
    num_vertices: int

    def __post_init__(self):
        m = np.asarray(self.multiplicity, dtype=np.int64)
        if m.shape != (self.edges.shape[0],) or np.any(m < 0):
            raise ValueError("multiplicities must be nonnegative, one per edge")
        object.__setattr__(self, "multiplicity", m)

    @property
    def total(self) -> int:
        return int(self.multiplicity.sum())

    def boundary(self) -> np.ndarray:
        return _parity_boundary(self.edges, self.multiplicity, self.num_vertices)

    def copy_edges(self) -> np.ndarray:
        """Edge index of each individual copy, copies of one edge listed consecutively."""
        return np.repeat(np.arange(len(self.multiplicity)), self.multiplicity)

    def select(self, copy_mask: int) -> "Multigraph":
        """Sub-multigraph made of the copies whose bits are set in ``copy_mask``."""
        ce = self.copy_edges()
        chosen = [(copy_mask >> k) & 1 for k in range(len(ce))]
        m = np.bincount(ce, weights=chosen, minlength=len(self.multiplicity)).astype(np.int64)
        return Multigraph(m, self.edges, self.num_vertices)


def symm_diff(N: Multigraph, K: Multigraph) -> Multigraph:
    """N Delta K with chosen-copy semantics: per edge |m_N - m_K|."""
    if N.edges.shape != K.edges.shape or not np.array_equal(N.edges, K.edges):
        raise ValueError("multigraphs must share an edge list")
    return Multigraph(np.abs(N.multiplicity - K.multiplicity), N.edges, N.num_vertices)


@dataclass(frozen=True)
class TraceConfig:
    states: np.ndarray
    edges: np.ndarray
    num_vertices: int

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.uint8)
        if s.shape != (self.edges.shape[0],) or np.any(s > ODD):
            raise ValueError("trace states must be 0, 1 or 2, one per edge")
        object.__setattr__(self, "states", s)

    @classmethod
    def on(cls, graph, states) -> "TraceConfig":
        return cls(np.asarray(states), graph.edges, graph.num_vertices)

    @property
    def support(self) -> np.ndarray:
        return self.states != ZERO

    @property
    def odd(self) -> np.ndarray:
        return self.states == ODD

    def sources(self) -> np.ndarray:
        return _parity_boundary(self.edges, self.odd.astype(np.int64), self.num_vertices)

    def occupied_edges(self) -> np.ndarray:
        return self.edges[self.support]


@dataclass(frozen=True)
class FoldedGraph:
    """M_n: occupied left edges kept in place, occupied right edges mirrored."""

    edges: np.ndarray
    origin: np.ndarray
    num_vertices: int
    hyperplane: Hyperplane
    on_plane: np.ndarray = field(repr=False)
    left_closed: np.ndarray = field(repr=False)

    def occupied_edges(self) -> np.ndarray:
        return self.edges

    def plane_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.on_plane)


class FoldPlan:
    """Precomputed folding of every edge of ``geom`` through ``h``.

    ``fa[e], fb[e]`` are the endpoints of the image of edge ``e`` in M_n, or -1
    for edges of E_0.  Folding only needs mirror images of right-side edges to
    exist; strict reflection symmetry of the graph is not required here.
    """

    def __init__(self, geom: GraphGeometry, h: Hyperplane):
        part = geom.partition_edges(h)
        r = geom.reflection_map(h)
        E = geom.num_edges
        fa = np.full(E, -1, dtype=np.int64)
        fb = np.full(E, -1, dtype=np.int64)
        fa[part.minus] = geom.edges[part.minus, 0]
        fb[part.minus] = geom.edges[part.minus, 1]
        ra = r[geom.edges[part.plus, 0]]
        rb = r[geom.edges[part.plus, 1]]
        if np.any(ra < 0) or np.any(rb < 0):
            raise GeometryError(f"mirror image of a right-side edge leaves the graph for {h}")
        fa[part.plus] = ra
        fb[part.plus] = rb
        side = geom.vertex_sides(h)
        self.geom = geom
        self.hyperplane = h
        self.partition = part
        self.reflection = r
        self.fa, self.fb = fa, fb
        self.on_plane = side == 0
        self.left_closed = side <= 0
        self.num_vertices = geom.num_vertices
        # adjacency of the folded graph, for breadth-first searches
        keep = np.flatnonzero(fa >= 0)
        src = np.concatenate([fa[keep], fb[keep]])
        dst = np.concatenate([fb[keep], fa[keep]])
        eid = np.concatenate([keep, keep])
        order = np.lexsort((eid, src))
        src, dst, eid = src[order], dst[order], eid[order]
        self.adj_ptr = np.zeros(self.num_vertices + 1, dtype=np.int64)
        np.add.at(self.adj_ptr, src + 1, 1)
        self.adj_ptr = np.cumsum(self.adj_ptr)
        self.adj_nbr = dst
        self.adj_edge = eid

    def fold(self, trace: TraceConfig) -> FoldedGraph:
        if trace.edges.shape[0] != self.fa.shape[0]:
            raise ValueError("trace and geometry have different edge sets")
        occ = trace.support & (self.fa >= 0)
        idx = np.flatnonzero(occ)
        return FoldedGraph(
            edges=np.stack([self.fa[idx], self.fb[idx]], axis=1),
            origin=idx,
            num_vertices=self.num_vertices,
            hyperplane=self.hyperplane,
            on_plane=self.on_plane,
            left_closed=self.left_closed,
        )

    def plane_reach(self, support: np.ndarray) -> np.ndarray:
        """Boolean mask of vertices joined to the hyperplane in M_n."""
        return _plane_reach(support.astype(np.bool_), self.fa, self.fb, self.on_plane)

    def reaches_plane(self, support: np.ndarray, start: int) -> bool:
        return bool(
            _bfs_reaches(
                support.astype(np.bool_), start, self.adj_ptr, self.adj_nbr, self.adj_edge, self.on_plane
            )
        )


@nb.njit(cache=True)
def _plane_reach(support, fa, fb, on_plane):
    V = on_plane.shape[0]
    parent = np.arange(V)
    for e in range(fa.shape[0]):
        if support[e] and fa[e] >= 0:
            a = fa[e]
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            b = fb[e]
            while parent[b] != b:
                parent[b] = parent[parent[b]]
                b = parent[b]
            if a != b:
                if a < b:
                    parent[b] = a
                else:
                    parent[a] = b
    root = np.empty(V, dtype=np.int64)
    hit = np.zeros(V, dtype=np.bool_)
    for v in range(V):
        a = v
        while parent[a] != a:
            a = parent[a]
        root[v] = a
        if on_plane[v]:
            hit[a] = True
    out = np.empty(V, dtype=np.bool_)
    for v in range(V):
        out[v] = hit[root[v]]
    return out


@nb.njit(cache=True)
def _bfs_reaches(support, start, ptr, nbr, eid, on_plane):
    if on_plane[start]:
        return True
    V = on_plane.shape[0]
    seen = np.zeros(V, dtype=np.bool_)
    queue = np.empty(V, dtype=np.int64)
    head, tail = 0, 1
    queue[0] = start
    seen[start] = True
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(ptr[v], ptr[v + 1]):
            if support[eid[k]]:
                w = nbr[k]
                if not seen[w]:
                    if on_plane[w]:
                        return True
                    seen[w] = True
                    queue[tail] = w
                    tail += 1
    return False


def fold(trace: TraceConfig, geom: GraphGeometry, h: Hyperplane) -> FoldedGraph:
    return FoldPlan(geom, h).fold(trace)


def connected(g: FoldedGraph | TraceConfig, A, B) -> bool:
    """Whether some a in A and b in B share a component of the occupied-edge graph."""
    A = [int(a) for a in np.atleast_1d(A)]
    B = [int(b) for b in np.atleast_1d(B)]
    ds = DisjointSet(g.num_vertices)
    for u, v in g.occupied_edges():
        ds.union(int(u), int(v))
    roots = {ds.find(a) for a in A}
    return any(ds.find(b) in roots for b in B)


def _traces_by_direction(traces, d: int) -> list[TraceConfig]:
    if isinstance(traces, TraceConfig):
        return [traces] * (2 * d)
    traces = list(traces)
    if len(traces) != 2 * d:
        raise ValueError(f"expected one trace per direction ({2 * d}), got {len(traces)}")
    return traces


def compute_S_n(traces, box: Box, n: int, plans: list[FoldPlan] | None = None) -> np.ndarray:
    """Vertices of Lambda_n joined to none of the 2d hyperplanes H_n(+-e_i) in the
    corresponding folded graphs.  ``traces`` is one TraceConfig per direction, in
    the order of :func:`~rcising.lattice.hyperplanes`, or a single trace used for all.
    """
    d = box.dim
    if not box.contains_box(n):
        raise GeometryError(f"{box!r} does not contain Lambda_{n}")
    traces = _traces_by_direction(traces, d)
    for t in traces:
        if t.edges.shape != box.edges.shape or not np.array_equal(t.edges, box.edges):
            raise ValueError("trace does not live on the given box")
    if plans is None:
        plans = [FoldPlan(box, h) for h in hyperplanes(d, n)]
    inside = box.sub_box_mask(n)
    for t, plan in zip(traces, plans):
        inside &= ~plan.plane_reach(t.support)
    return np.flatnonzero(inside)


def origin_in_S_n(support: np.ndarray, plans: list[FoldPlan], origin: int) -> tuple[bool, bool]:
    """(0 in S_n, 0 in S_n(+e_1)) for one sourceless trace support."""
    first = not plans[0].reaches_plane(support, origin)
    if not first:
        return False, False
    for plan in plans[1:]:
        if plan.reaches_plane(support, origin):
            return False, True
    return True, True
