"""Disjoint-set forests: a small Python class and numba kernels for hot loops."""
from __future__ import annotations

import numba as nb
import numpy as np


class DisjointSet:
    """Union by rank with path compression. Roots are deterministic given the call order."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return ra

    def same(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


@nb.njit(cache=True)
def uf_find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@nb.njit(cache=True)
def uf_union(parent, rank, a, b):
    ra = uf_find(parent, a)
    rb = uf_find(parent, b)
    if ra == rb:
        return ra
    if rank[ra] < rank[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    if rank[ra] == rank[rb]:
        rank[ra] += 1
    return ra


@nb.njit(cache=True)
def uf_reset(parent, rank):
    for i in range(parent.shape[0]):
        parent[i] = i
        rank[i] = 0


@nb.njit(cache=True)
def masks_connected(support_masks, ea, eb, num_vertices, a_mask, b_mask):
    """For each edge bitmask, whether some vertex of ``a_mask`` meets one of ``b_mask``.

    Edges with ``ea[e] < 0`` are ignored (used for edges dropped by folding).
    """
    out = np.zeros(support_masks.shape[0], dtype=np.bool_)
    parent = np.empty(num_vertices, dtype=np.int64)
    rank = np.zeros(num_vertices, dtype=np.int64)
    hit = np.zeros(num_vertices, dtype=np.bool_)
    for k in range(support_masks.shape[0]):
        uf_reset(parent, rank)
        m = support_masks[k]
        for e in range(ea.shape[0]):
            if ea[e] >= 0 and (m >> np.uint64(e)) & np.uint64(1):
                uf_union(parent, rank, ea[e], eb[e])
        for v in range(num_vertices):
            hit[v] = False
        for v in range(num_vertices):
            if a_mask[v]:
                hit[uf_find(parent, v)] = True
        found = False
        for v in range(num_vertices):
            if b_mask[v] and hit[uf_find(parent, v)]:
                found = True
                break
        out[k] = found
    return out


@nb.njit(cache=True)
def masks_reach_set(support_masks, ea, eb, num_vertices, target_mask):
    """Per edge bitmask, the vertex bitmask of everything connected to ``target_mask``."""
    out = np.zeros(support_masks.shape[0], dtype=np.uint64)
    parent = np.empty(num_vertices, dtype=np.int64)
    rank = np.zeros(num_vertices, dtype=np.int64)
    hit = np.zeros(num_vertices, dtype=np.bool_)
    for k in range(support_masks.shape[0]):
        uf_reset(parent, rank)
        m = support_masks[k]
        for e in range(ea.shape[0]):
            if ea[e] >= 0 and (m >> np.uint64(e)) & np.uint64(1):
                uf_union(parent, rank, ea[e], eb[e])
        for v in range(num_vertices):
            hit[v] = False
        for v in range(num_vertices):
            if target_mask[v]:
                hit[uf_find(parent, v)] = True
        r = np.uint64(0)
        for v in range(num_vertices):
            if hit[uf_find(parent, v)]:
                r |= np.uint64(1) << np.uint64(v)
        out[k] = r
    return out
