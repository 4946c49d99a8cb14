"""Numba kernels for the spin and current samplers.

All kernels read uniforms from a caller-supplied buffer and never draw random
numbers themselves, so the consumption order is fixed by the state alone.
Adjacency is CSR: neighbours of ``v`` are ``nbr[ptr[v]:ptr[v+1]]`` with
per-half-edge coupling ``cpl`` and edge id ``eid``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

NEED_UNIFORMS = -1


@njit(cache=True)
def wolff_clusters(spins, ptr, nbr, padd, buf, pos, target, reserve, stack, by_clusters):
    """Grow Wolff clusters until ``target`` sites have been flipped, or until
    ``target`` clusters have been built when ``by_clusters`` is set.

    Before each new cluster the buffer must still hold ``reserve`` uniforms
    (an upper bound on one cluster's use); otherwise the kernel returns early
    with ``done < target`` and the caller refills.  Returns
    ``(pos, flipped, clusters)``.
    """
    V = spins.shape[0]
    nb = buf.shape[0]
    flipped = 0
    clusters = 0
    while (clusters if by_clusters else flipped) < target:
        if nb - pos < reserve:
            break
        seed = int(buf[pos] * V)
        pos += 1
        if seed >= V:
            seed = V - 1
        s0 = spins[seed]
        spins[seed] = -s0
        top = 0
        stack[top] = seed
        top += 1
        size = 1
        while top > 0:
            top -= 1
            v = stack[top]
            for k in range(ptr[v], ptr[v + 1]):
                w = nbr[k]
                if spins[w] == s0:
                    u = buf[pos]
                    pos += 1
                    if u < padd[k]:
                        spins[w] = -s0
                        stack[top] = w
                        top += 1
                        size += 1
        flipped += size
        clusters += 1
    return pos, flipped, clusters


@njit(cache=True)
def metropolis_sweep(spins, ptr, nbr, cpl, uniforms):
    """Sequential single-site Metropolis sweep for Ising spins; returns accepts."""
    V = spins.shape[0]
    acc = 0
    for v in range(V):
        h = 0.0
        for k in range(ptr[v], ptr[v + 1]):
            h += cpl[k] * spins[nbr[k]]
        dE = 2.0 * spins[v] * h
        if dE <= 0.0 or uniforms[v] < np.exp(-dE):
            spins[v] = -spins[v]
            acc += 1
    return acc


@njit(cache=True)
def phi4_sweep(phi, ptr, nbr, cpl, g, a, width, uniforms):
    """Single-site Metropolis for e^{-g t^4 - a t^2} sites coupled by ``cpl``.

    Uses two uniforms per site (proposal, acceptance).  Returns accepts.
    """
    V = phi.shape[0]
    acc = 0
    for v in range(V):
        old = phi[v]
        new = old + width * (2.0 * uniforms[2 * v] - 1.0)
        h = 0.0
        for k in range(ptr[v], ptr[v + 1]):
            h += cpl[k] * phi[nbr[k]]
        o2 = old * old
        n2 = new * new
        dS = g * (n2 * n2 - o2 * o2) + a * (n2 - o2) - h * (new - old)
        if dS <= 0.0 or uniforms[2 * v + 1] < np.exp(-dS):
            phi[v] = new
            acc += 1
    return acc


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def swendsen_wang_step(spins, ea, eb, pbond, uniforms, bonds, parent):
    """One Swendsen-Wang update.

    Consumes ``E + V`` uniforms: one per edge for bond activation (used or
    not), one per vertex for the cluster flip (the root's is used).  Fills
    ``bonds`` with the random-cluster configuration that is jointly
    distributed with the new spins.  Returns the number of clusters.
    """
    V = spins.shape[0]
    E = ea.shape[0]
    for v in range(V):
        parent[v] = v
    for e in range(E):
        u = ea[e]
        w = eb[e]
        on = spins[u] == spins[w] and uniforms[e] < pbond[e]
        bonds[e] = on
        if on:
            ru = _find(parent, u)
            rw = _find(parent, w)
            if ru != rw:
                if ru < rw:
                    parent[rw] = ru
                else:
                    parent[ru] = rw
    nclus = 0
    for v in range(V):
        r = _find(parent, v)
        if r == v:
            nclus += 1
    for v in range(V):
        r = _find(parent, v)
        if uniforms[E + r] < 0.5:
            spins[v] = -spins[v]
    return nclus


@njit(cache=True)
def even_subgraph(bonds, ptr, nbr, eid, ea, eb, src_u, src_v, uniforms, odd, order, par_edge, need, seen):
    """Uniform subset of the active edges with boundary ``{src_u, src_v}``.

    ``src_u < 0`` means the empty boundary.  A BFS forest of the active edges
    is built in vertex-index order; every non-tree active edge is included
    with probability 1/2 (uniform ``uniforms[e]``), then tree edges are fixed
    from the leaves up so that the parity constraint holds.  Returns False
    when the sources sit in different clusters (the caller rejects).
    """
    V = ptr.shape[0] - 1
    E = ea.shape[0]
    for v in range(V):
        seen[v] = False
        need[v] = False
        par_edge[v] = -1
    nord = 0
    for r in range(V):
        if seen[r]:
            continue
        seen[r] = True
        head = nord
        order[nord] = r
        nord += 1
        while head < nord:
            v = order[head]
            head += 1
            for k in range(ptr[v], ptr[v + 1]):
                e = eid[k]
                if not bonds[e]:
                    continue
                w = nbr[k]
                if not seen[w]:
                    seen[w] = True
                    par_edge[w] = e
                    order[nord] = w
                    nord += 1
    for e in range(E):
        odd[e] = False
    for e in range(E):
        if bonds[e]:
            if par_edge[ea[e]] == e or par_edge[eb[e]] == e:
                continue
            if uniforms[e] < 0.5:
                odd[e] = True
                need[ea[e]] = not need[ea[e]]
                need[eb[e]] = not need[eb[e]]
    if src_u >= 0:
        need[src_u] = not need[src_u]
        need[src_v] = not need[src_v]
    for i in range(V - 1, -1, -1):
        v = order[i]
        if need[v]:
            e = par_edge[v]
            if e < 0:
                return False
            odd[e] = True
            need[v] = False
            w = ea[e] if eb[e] == v else eb[e]
            need[w] = not need[w]
    return True


@njit(cache=True)
def trace_batch(spins, ea, eb, ptr, nbr, eid, pbond, psprinkle, src_u, src_v, uniforms, states, accepted):
    """Run ``len(uniforms)`` sampler steps, writing one trace per step.

    Row ``s`` of ``uniforms`` has ``3E + V`` entries: SW bonds and flips
    (``E + V``), even-subgraph coin flips (``E``), sprinkling (``E``).
    ``states[s]`` receives 0 (zero), 1 (even positive) or 2 (odd) per edge;
    ``accepted[s]`` is False for rejected two-source steps.
    """
    V = spins.shape[0]
    E = ea.shape[0]
    bonds = np.zeros(E, dtype=np.bool_)
    odd = np.zeros(E, dtype=np.bool_)
    parent = np.empty(V, dtype=np.int64)
    order = np.empty(V, dtype=np.int64)
    par_edge = np.empty(V, dtype=np.int64)
    need = np.zeros(V, dtype=np.bool_)
    seen = np.zeros(V, dtype=np.bool_)
    B = uniforms.shape[0]
    for s in range(B):
        row = uniforms[s]
        swendsen_wang_step(spins, ea, eb, pbond, row[: E + V], bonds, parent)
        ok = even_subgraph(bonds, ptr, nbr, eid, ea, eb, src_u, src_v, row[E + V : 2 * E + V], odd,
                           order, par_edge, need, seen)
        accepted[s] = ok
        sp = row[2 * E + V :]
        for e in range(E):
            if not ok:
                states[s, e] = 0
            elif odd[e]:
                states[s, e] = 2
            elif sp[e] < psprinkle[e]:
                states[s, e] = 1
            else:
                states[s, e] = 0
    return 0


@njit(cache=True)
def pack_masks(states, out_odd, out_support):
    """Pack per-edge trace states (E <= 64) into uint64 odd/support masks."""
    B, E = states.shape
    for s in range(B):
        o = np.uint64(0)
        m = np.uint64(0)
        for e in range(E):
            st = states[s, e]
            if st != 0:
                m |= np.uint64(1) << np.uint64(e)
                if st == 2:
                    o |= np.uint64(1) << np.uint64(e)
        out_odd[s] = o
        out_support[s] = m


@njit(cache=True)
def reaches_target(support, ptr, nbr, eid, start, target, queue, seen):
    """BFS over edges whose folded image is occupied; True if ``target`` is hit.

    ``ptr/nbr/eid`` describe the folded graph; ``target`` is a vertex mask.
    """
    if target[start]:
        return True
    V = ptr.shape[0] - 1
    for v in range(V):
        seen[v] = False
    seen[start] = True
    head = 0
    tail = 1
    queue[0] = start
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(ptr[v], ptr[v + 1]):
            if not support[eid[k]]:
                continue
            w = nbr[k]
            if seen[w]:
                continue
            if target[w]:
                return True
            seen[w] = True
            queue[tail] = w
            tail += 1
    return False
