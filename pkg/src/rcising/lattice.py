"""Finite pieces of Z^d: boxes, tori, hyperplanes and reflections.

Vertices are indexed in row-major order; edges are enumerated as
``(vertex, positive direction)`` pairs in increasing vertex order, so edge ``e``
joins ``edges[e, 0]`` to ``edges[e, 0] + e_{edge_dir[e]}``.

Axes are 0-based throughout (``axis=0`` is the first coordinate direction).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_DIM, MAX_DIM = 2, 5


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperplane:
    """The hyperplane ``{x : x[axis] = sign * level}``.

    The side containing the origin (for ``level > 0``) is called *left*;
    a vertex is strictly left when ``sign * x[axis] < level``.
    """

    axis: int
    sign: int
    level: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise GeometryError(f"sign must be +1 or -1, got {self.sign}")
        if self.axis < 0:
            raise GeometryError("axis must be nonnegative")

    @property
    def position(self) -> int:
        return self.sign * self.level

    def side(self, coords: np.ndarray) -> np.ndarray:
        """-1 strictly left, 0 on the plane, +1 strictly right (vectorised)."""
        c = np.asarray(coords)[..., self.axis] * self.sign
        return np.sign(c - self.level).astype(np.int8)

    def contains(self, x) -> bool:
        return int(np.asarray(x)[self.axis]) == self.position

    def reflect(self, x) -> np.ndarray:
        return reflect(x, self)


def reflect(x, h: Hyperplane) -> np.ndarray:
    """Orthogonal reflection of ``x`` (or an array of points) through ``h``."""
    y = np.array(x, dtype=np.int64, copy=True)
    y[..., h.axis] = 2 * h.position - y[..., h.axis]
    return y


def hyperplanes(d: int, n: int) -> list[Hyperplane]:
    """The 2d hyperplanes H_n(+e_1), H_n(-e_1), ..., H_n(-e_d)."""
    return [Hyperplane(axis, sign, n) for axis in range(d) for sign in (1, -1)]


def mms_rearrangement(x) -> tuple[np.ndarray, np.ndarray]:
    """Comparison points ``(|x|_1 e_1, |x|_inf e_1)`` of the MMS sandwich."""
    x = np.asarray(x, dtype=np.int64)
    if not np.any(x):
        raise GeometryError("mms_rearrangement is undefined at the origin")
    low = np.zeros_like(x)
    high = np.zeros_like(x)
    low[0] = np.abs(x).sum()
    high[0] = np.abs(x).max()
    return low, high


@dataclass(frozen=True)
class EdgePartition:
    minus: np.ndarray
    plus: np.ndarray
    zero: np.ndarray


class GraphGeometry:
    """Geometric helpers shared by lattice pieces and small coordinate graphs.

    Subclasses provide ``num_vertices``, ``edges`` (E, 2), ``coords`` (V, d)
    and ``layers`` (V,) arrays.  ``layers`` distinguishes copies of the same
    site (block models); plain lattices use a single layer.
    """

    num_vertices: int
    edges: np.ndarray
    coords: np.ndarray
    layers: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def dim(self) -> int:
        return int(self.coords.shape[1])

    @cached_property
    def _coord_lookup(self) -> dict[tuple, int]:
        return {
            (tuple(int(c) for c in self.coords[v]), int(self.layers[v])): v
            for v in range(self.num_vertices)
        }

    def find_vertex(self, x, layer: int = 0) -> int:
        """Index of the vertex at coordinates ``x`` (and layer), or -1."""
        return self._coord_lookup.get((tuple(int(c) for c in x), int(layer)), -1)

    def reflection_map(self, h: Hyperplane) -> np.ndarray:
        """``r[v]`` = index of the mirror image of ``v`` through ``h``, or -1."""
        mirrored = reflect(self.coords, h)
        return np.array(
            [self.find_vertex(mirrored[v], self.layers[v]) for v in range(self.num_vertices)],
            dtype=np.int64,
        )

    def is_symmetric(self, h: Hyperplane) -> bool:
        """Vertex set and edge set are both invariant under the reflection."""
        r = self.reflection_map(h)
        if np.any(r < 0):
            return False
        edge_set = {tuple(sorted(e)) for e in self.edges.tolist()}
        return all(tuple(sorted((int(r[u]), int(r[v])))) in edge_set for u, v in self.edges)

    def vertex_sides(self, h: Hyperplane) -> np.ndarray:
        return h.side(self.coords)

    def partition_edges(self, h: Hyperplane) -> EdgePartition:
        """Split edges into E_-(h), E_+(h), E_0(h)."""
        side = self.vertex_sides(h)
        if not (side.min() <= 0 <= side.max()):
            raise GeometryError(f"{h} does not meet the vertex set")
        su = side[self.edges[:, 0]]
        sv = side[self.edges[:, 1]]
        minus = (su < 0) | (sv < 0)
        plus = (su > 0) | (sv > 0)
        if np.any(minus & plus):
            raise GeometryError("an edge jumps across the hyperplane")
        zero = ~(minus | plus)
        return EdgePartition(
            minus=np.flatnonzero(minus), plus=np.flatnonzero(plus), zero=np.flatnonzero(zero)
        )


class _Lattice(GraphGeometry):
    periodic = False

    def _build(self, shape: tuple[int, ...]):
        d = len(shape)
        V = int(np.prod(shape))
        idx = np.arange(V).reshape(shape)
        nbr = np.full((V, 2 * d), -1, dtype=np.int64)
        src, dirs = [], []
        for k in range(d):
            fwd = np.roll(idx, -1, axis=k)
            bwd = np.roll(idx, 1, axis=k)
            valid = np.ones(shape, dtype=bool)
            if not self.periodic:
                sl = [slice(None)] * d
                sl[k] = -1
                valid[tuple(sl)] = False
            f = np.where(valid, fwd, -1).ravel()
            nbr[:, 2 * k] = f
            bvalid = np.ones(shape, dtype=bool)
            if not self.periodic:
                sl = [slice(None)] * d
                sl[k] = 0
                bvalid[tuple(sl)] = False
            nbr[:, 2 * k + 1] = np.where(bvalid, bwd, -1).ravel()
            src.append(np.flatnonzero(valid.ravel()))
            dirs.append(np.full(src[-1].shape, k))
        src_all = np.concatenate(src)
        dir_all = np.concatenate(dirs)
        order = np.lexsort((dir_all, src_all))
        src_all, dir_all = src_all[order], dir_all[order]
        dst = nbr[src_all, 2 * dir_all]
        self.num_vertices = V
        self.neighbors = nbr
        self.edges = np.stack([src_all, dst], axis=1).astype(np.int64)
        self.edge_dir = dir_all.astype(np.int64)
        self.edge_index = np.full((V, d), -1, dtype=np.int64)
        self.edge_index[src_all, dir_all] = np.arange(len(src_all))
        self.layers = np.zeros(V, dtype=np.int64)
        for arr in (self.neighbors, self.edges, self.edge_dir, self.edge_index, self.layers):
            arr.setflags(write=False)


class Box(_Lattice):
    """The box ``[-n, n]^d (+ offset)`` with free boundary conditions."""

    def __init__(self, d: int, n: int, offset=None):
        if not MIN_DIM <= d <= MAX_DIM:
            raise GeometryError(f"dimension must lie in [{MIN_DIM}, {MAX_DIM}], got {d}")
        if n < 0:
            raise GeometryError("radius must be nonnegative")
        self.d = d
        self.n = n
        self.offset = np.zeros(d, dtype=np.int64) if offset is None else np.asarray(offset, dtype=np.int64)
        if self.offset.shape != (d,):
            raise GeometryError("offset must have length d")
        self.side = 2 * n + 1
        self._build((self.side,) * d)
        grids = np.indices((self.side,) * d).reshape(d, -1).T
        self.coords = grids - n + self.offset
        self.coords.setflags(write=False)

    def __repr__(self):
        return f"Box(d={self.d}, n={self.n}, offset={tuple(self.offset.tolist())})"

    def index(self, x) -> int:
        i = self.find_vertex(x)
        if i < 0:
            raise GeometryError(f"{tuple(np.asarray(x).tolist())} lies outside {self!r}")
        return i

    def vertex(self, i: int) -> np.ndarray:
        return self.coords[i].copy()

    def find_vertex(self, x, layer: int = 0) -> int:
        if layer != 0:
            return -1
        x = np.asarray(x, dtype=np.int64) - self.offset + self.n
        if np.any(x < 0) or np.any(x >= self.side):
            return -1
        return int(np.ravel_multi_index(tuple(x), (self.side,) * self.d))

    def reflection_map(self, h: Hyperplane) -> np.ndarray:
        mirrored = reflect(self.coords, h) - self.offset + self.n
        ok = np.all((mirrored >= 0) & (mirrored < self.side), axis=1)
        out = np.full(self.num_vertices, -1, dtype=np.int64)
        out[ok] = np.ravel_multi_index(tuple(mirrored[ok].T), (self.side,) * self.d)
        return out

    def contains_box(self, m: int) -> bool:
        """Whether the centred box Lambda_m is a subset of this box."""
        return bool(np.all(self.offset - self.n <= -m) and np.all(self.offset + self.n >= m))

    def sub_box_mask(self, m: int) -> np.ndarray:
        """Mask of vertices in Lambda_m = [-m, m]^d."""
        return np.all(np.abs(self.coords) <= m, axis=1)


class Torus(_Lattice):
    """The periodic box (Z / L Z)^d; coordinates run over [0, L)."""

    periodic = True

    def __init__(self, d: int, L: int):
        if not MIN_DIM <= d <= MAX_DIM:
            raise GeometryError(f"dimension must lie in [{MIN_DIM}, {MAX_DIM}], got {d}")
        if L < 3:
            raise GeometryError("periodic side must be at least 3 (no double edges)")
        self.d = d
        self.L = L
        self.side = L
        self._build((L,) * d)
        self.coords = np.indices((L,) * d).reshape(d, -1).T.copy()
        self.coords.setflags(write=False)

    def __repr__(self):
        return f"Torus(d={self.d}, L={self.L})"

    def index(self, x) -> int:
        x = np.mod(np.asarray(x, dtype=np.int64), self.L)
        return int(np.ravel_multi_index(tuple(x), (self.L,) * self.d))

    def vertex(self, i: int) -> np.ndarray:
        return self.coords[i].copy()

    def find_vertex(self, x, layer: int = 0) -> int:
        return self.index(x) if layer == 0 else -1

    def reflection_map(self, h: Hyperplane) -> np.ndarray:
        mirrored = np.mod(reflect(self.coords, h), self.L)
        return np.ravel_multi_index(tuple(mirrored.T), (self.L,) * self.d).astype(np.int64)

    def partition_edges(self, h: Hyperplane) -> EdgePartition:
        raise GeometryError("left/right of a hyperplane is undefined on a torus")
