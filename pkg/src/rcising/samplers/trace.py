"""Sampling traces of random currents through the spin / random-cluster coupling.

One step: Swendsen-Wang update of the spins (which also yields a random-cluster
configuration), a uniform subset of the active edges with the prescribed
boundary, then every remaining edge is independently marked even-positive
with probability (cosh b - 1) / cosh b.  With sources {u, v} the step is
rejected when u and v lie in different clusters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..currents import FoldPlan, TraceConfig, origin_in_S_n
from ..exact import MaskEvent, UnrealizableSources
from ..lattice import Box, GeometryError, hyperplanes
from ..rng import stream
from ..unionfind import DisjointSet
from .common import SamplerConfig, SamplerError, sampling_graph, validate_seed
from .kernels import pack_masks, trace_batch


@dataclass
class TraceSamples:
    """Accepted traces of one chain, in order, with their batch labels."""

    states: np.ndarray
    batch: np.ndarray
    attempts: int
    edges: np.ndarray
    num_vertices: int
    sources: tuple
    batches: int

    def __len__(self):
        return len(self.states)

    def trace(self, i: int) -> TraceConfig:
        return TraceConfig(self.states[i], self.edges, self.num_vertices)

    def __iter__(self):
        for i in range(len(self)):
            yield self.trace(i)

    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        """(odd, support) as uint64 masks; needs at most 64 edges."""
        if self.states.shape[1] > 64:
            raise SamplerError("mask packing needs at most 64 edges")
        odd = np.empty(len(self), dtype=np.uint64)
        sup = np.empty(len(self), dtype=np.uint64)
        pack_masks(self.states, odd, sup)
        return odd, sup

    @property
    def acceptance(self) -> float:
        return len(self) / self.attempts if self.attempts else 0.0

    def frequency(self, indicator: np.ndarray) -> tuple[float, float]:
        """Mean and batch-means standard error of a per-sample indicator."""
        indicator = np.asarray(indicator, dtype=np.float64)
        return batch_mean(indicator, self.batch, self.batches)

    def event_frequency(self, event: MaskEvent) -> tuple[float, float]:
        odd, sup = self.masks()
        return self.frequency(event.fn(odd, sup))


def batch_mean(values: np.ndarray, labels: np.ndarray, batches: int) -> tuple[float, float]:
    counts = np.bincount(labels, minlength=batches).astype(np.float64)
    sums = np.bincount(labels, weights=values, minlength=batches)
    if np.any(counts == 0):
        raise SamplerError("empty batch; increase the number of samples")
    means = sums / counts
    return float(sums.sum() / counts.sum()), float(means.std(ddof=1) / np.sqrt(batches))


def _check_sources(geom, sources) -> tuple[int, int]:
    src = sorted({int(s) for s in sources})
    if len(src) != len(list(sources)):
        raise UnrealizableSources("repeated source vertex")
    if len(src) == 0:
        return -1, -1
    if len(src) != 2:
        raise UnrealizableSources("the trace sampler supports the empty source set or one pair {u, v}")
    V = geom.num_vertices
    if not all(0 <= s < V for s in src):
        raise UnrealizableSources("source outside the graph")
    ds = DisjointSet(V)
    for a, b in np.asarray(geom.edges).tolist():
        ds.union(a, b)
    if ds.find(src[0]) != ds.find(src[1]):
        raise UnrealizableSources("sources lie in different components")
    return src[0], src[1]


class TraceSampler:
    """Stateful chain producing trace batches; see the module docstring."""

    def __init__(self, cfg: SamplerConfig, geom, sources=()):
        if cfg.algorithm != "current-trace":
            raise SamplerError("trace sampling needs algorithm='current-trace'")
        self.cfg = cfg
        self.seed = validate_seed(cfg)
        self.geom = geom
        self.sg = sampling_graph(geom, cfg.beta)
        self.src = _check_sources(geom, sources)
        b = self.sg.couplings
        self.pbond = -np.expm1(-2.0 * b)
        self.psprinkle = (np.cosh(b) - 1.0) / np.cosh(b)
        self.ea = self.sg.edges[:, 0].copy()
        self.eb = self.sg.edges[:, 1].copy()
        init = stream(self.seed, cfg.chain_id, 0, lane=0)
        self.spins = np.where(init.random(self.sg.num_vertices) < 0.5, -1, 1).astype(np.int8)
        self.step = 0

    @property
    def row_width(self) -> int:
        return 3 * self.sg.num_edges + self.sg.num_vertices

    def advance(self, steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Run ``steps`` steps; return (states, accepted) for each of them.

        Steps are grouped by segment so that the uniforms of step k depend only
        on (seed, chain, k).
        """
        S = self.cfg.segment
        E = self.sg.num_edges
        states = np.zeros((steps, E), dtype=np.uint8)
        accepted = np.zeros(steps, dtype=np.bool_)
        done = 0
        while done < steps:
            seg, off = divmod(self.step, S)
            take = min(S - off, steps - done)
            gen = stream(self.seed, self.cfg.chain_id, seg)
            u = gen.random((S, self.row_width))[off : off + take]
            sg = self.sg
            trace_batch(
                self.spins, self.ea, self.eb, sg.ptr, sg.nbr, sg.eid, self.pbond, self.psprinkle,
                self.src[0], self.src[1], u, states[done : done + take], accepted[done : done + take],
            )
            done += take
            self.step += take
        return states, accepted


def sample_current_trace(cfg: SamplerConfig, box, sources=()) -> TraceSamples:
    """``cfg.thermalization`` discarded steps, then ``cfg.sweeps`` steps of which
    every ``cfg.stride``-th is kept (rejected two-source steps are dropped)."""
    sampler = TraceSampler(cfg, box, sources)
    if cfg.thermalization:
        sampler.advance(cfg.thermalization)
    states, accepted = sampler.advance(cfg.sweeps)
    keep = np.zeros(cfg.sweeps, dtype=bool)
    keep[cfg.stride - 1 :: cfg.stride] = True
    idx = np.flatnonzero(keep)
    batch = (np.arange(len(idx)) * cfg.batches) // len(idx)
    ok = accepted[idx]
    return TraceSamples(
        states=states[idx][ok],
        batch=batch[ok],
        attempts=len(idx),
        edges=np.asarray(box.edges),
        num_vertices=box.num_vertices,
        sources=tuple(s for s in sampler.src if s >= 0),
        batches=cfg.batches,
    )


@dataclass
class SnEstimate:
    n: int
    probability: float
    stderr: float
    single_direction: float
    single_stderr: float
    samples: int
    meta: dict = field(default_factory=dict)

    def ci(self, z: float = 3.0) -> tuple[float, float]:
        return self.probability - z * self.stderr, self.probability + z * self.stderr


def estimate_S_n_probability(cfg: SamplerConfig, box: Box, n: int, enforce_radius: bool = True,
                             chunk: int = 4096) -> SnEstimate:
    """Monte Carlo estimate of P^0[0 in S_n] (sourceless traces on ``box``).

    Also reports the single-direction probability P[0 in S_n(+e_1)].  The box
    must contain Lambda_{4n} unless ``enforce_radius`` is False.
    """
    if not isinstance(box, Box):
        raise GeometryError("S_n estimation needs a centred Box")
    if n < 1:
        raise GeometryError("n must be >= 1")
    if enforce_radius and box.n < 4 * n:
        raise GeometryError(f"box radius {box.n} < 4n = {4 * n}")
    if not box.contains_box(n):
        raise GeometryError(f"box does not contain Lambda_{n}")
    plans = [FoldPlan(box, h) for h in hyperplanes(box.d, n)]
    origin = box.find_vertex(np.zeros(box.d, dtype=np.int64))
    sampler = TraceSampler(cfg, box, ())
    if cfg.thermalization:
        sampler.advance(cfg.thermalization)
    M = cfg.measurements
    full = np.zeros(M, dtype=np.float64)
    single = np.zeros(M, dtype=np.float64)
    m = 0
    remaining = cfg.sweeps
    pos = 0
    while remaining > 0:
        take = min(chunk, remaining)
        states, _ = sampler.advance(take)
        for i in range(take):
            if (pos + i + 1) % cfg.stride:
                continue
            a, b = origin_in_S_n(states[i] != 0, plans, origin)
            full[m], single[m] = a, b
            m += 1
        pos += take
        remaining -= take
    labels = (np.arange(M) * cfg.batches) // M
    p, se = batch_mean(full, labels, cfg.batches)
    q, qe = batch_mean(single, labels, cfg.batches)
    return SnEstimate(n, p, se, q, qe, M, {"beta": cfg.beta, "d": box.d, "radius": box.n, "seed": cfg.seed})
