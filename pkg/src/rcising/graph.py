"""Explicit weighted graphs with optional lattice coordinates.

``SmallGraph`` is the common currency of the exact engine, the samplers and
the block models: a simple graph with one coupling per edge.  When vertices
carry lattice coordinates (and optionally a block layer index) the geometric
helpers of :class:`~rcising.lattice.GraphGeometry` become available, so
hyperplanes, reflections and folding work on irregular fixtures too.
"""
from __future__ import annotations

import hashlib

import numpy as np

from .lattice import GraphGeometry, GeometryError, _Lattice


class GraphError(ValueError):
    pass


class SmallGraph(GraphGeometry):
    def __init__(self, num_vertices: int, edges, couplings, coords=None, layers=None, name: str = ""):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        couplings = np.broadcast_to(np.asarray(couplings, dtype=np.float64), (edges.shape[0],)).copy()
        if num_vertices < 1:
            raise GraphError("graph needs at least one vertex")
        if edges.size and (edges.min() < 0 or edges.max() >= num_vertices):
            raise GraphError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise GraphError("self-loops are not allowed")
        keys = np.sort(edges, axis=1)
        if len({tuple(k) for k in keys.tolist()}) != len(keys):
            raise GraphError("multi-edges are not allowed; compose couplings instead")
        if np.any(~np.isfinite(couplings)) or np.any(couplings < 0):
            raise GraphError("couplings must be finite and nonnegative")
        self.num_vertices = int(num_vertices)
        self.edges = edges
        self.couplings = couplings
        if coords is None:
            self.coords = None
        else:
            self.coords = np.asarray(coords, dtype=np.int64).reshape(num_vertices, -1)
        self.layers = (
            np.zeros(num_vertices, dtype=np.int64) if layers is None else np.asarray(layers, dtype=np.int64)
        )
        self.name = name
        for arr in (self.edges, self.couplings, self.layers):
            arr.setflags(write=False)
        if self.coords is not None:
            self.coords.setflags(write=False)

    @classmethod
    def from_lattice(cls, lat: _Lattice, beta: float, edge_mask=None, name: str = "") -> "SmallGraph":
        """Uniform-coupling copy of a box, optionally keeping only masked edges."""
        edges = lat.edges if edge_mask is None else lat.edges[np.asarray(edge_mask, dtype=bool)]
        return cls(lat.num_vertices, edges, beta, coords=lat.coords, name=name or repr(lat))

    def with_couplings(self, couplings) -> "SmallGraph":
        return SmallGraph(self.num_vertices, self.edges, couplings, self.coords, self.layers, self.name)

    def scaled(self, factor: float) -> "SmallGraph":
        return self.with_couplings(self.couplings * factor)

    def induced(self, vertices) -> tuple["SmallGraph", np.ndarray]:
        """Subgraph induced on ``vertices``; also returns the old->new index map (-1 if dropped)."""
        keep = np.zeros(self.num_vertices, dtype=bool)
        keep[np.asarray(list(vertices), dtype=np.int64)] = True
        new_index = np.full(self.num_vertices, -1, dtype=np.int64)
        new_index[keep] = np.arange(int(keep.sum()))
        emask = keep[self.edges[:, 0]] & keep[self.edges[:, 1]]
        sub = SmallGraph(
            max(int(keep.sum()), 1),
            new_index[self.edges[emask]],
            self.couplings[emask],
            None if self.coords is None else self.coords[keep],
            self.layers[keep],
            self.name,
        )
        return sub, new_index

    def _require_coords(self):
        if self.coords is None:
            raise GeometryError("this graph carries no lattice coordinates")

    def reflection_map(self, h):
        self._require_coords()
        return super().reflection_map(h)

    def partition_edges(self, h):
        self._require_coords()
        return super().partition_edges(h)

    def components(self) -> np.ndarray:
        """Connected-component label per vertex (labels are smallest member indices)."""
        from .unionfind import DisjointSet

        ds = DisjointSet(self.num_vertices)
        for u, v in self.edges:
            ds.union(int(u), int(v))
        return np.array([ds.find(v) for v in range(self.num_vertices)], dtype=np.int64)

    def is_connected(self) -> bool:
        return len(set(self.components().tolist())) == 1

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.num_vertices).tobytes())
        h.update(np.ascontiguousarray(self.edges).tobytes())
        h.update(np.ascontiguousarray(self.couplings).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self):
        return f"SmallGraph(V={self.num_vertices}, E={self.num_edges}{', ' + self.name if self.name else ''})"


def as_graph(obj, beta: float | None = None) -> SmallGraph:
    """Coerce a lattice (with a uniform ``beta``) or a SmallGraph to a SmallGraph."""
    if isinstance(obj, SmallGraph):
        return obj if beta is None else obj.with_couplings(beta)
    if isinstance(obj, _Lattice):
        if beta is None:
            raise GraphError("a lattice needs an explicit beta")
        return SmallGraph.from_lattice(obj, beta)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a graph")
