"""Shared plumbing for the chains: config, sampling graphs, accumulators."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..graph import SmallGraph
from ..lattice import Box, GraphGeometry, Torus
from ..rng import check_seed

ALGORITHMS = ("cluster-flip", "single-site", "current-trace", "phi4-site")


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    algorithm: str
    beta: float
    seed: int | None = None
    g: float | None = None
    a: float | None = None
    thermalization: int = 1000
    sweeps: int = 10000
    stride: int = 1
    chain_id: int = 0
    batches: int = 20
    segment: int = 64
    width: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise SamplerError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise SamplerError("beta must be finite and >= 0")
        if self.sweeps <= 0:
            raise SamplerError("sweeps must be > 0")
        if self.thermalization < 0:
            raise SamplerError("thermalization must be >= 0")
        if self.stride < 1:
            raise SamplerError("stride must be >= 1")
        if self.batches < 2:
            raise SamplerError("need at least two batches for error bars")
        if self.sweeps // self.stride < self.batches:
            raise SamplerError("fewer measurements than batches")
        if self.segment < 1:
            raise SamplerError("segment must be >= 1")
        if self.algorithm == "phi4-site":
            if self.g is None or not self.g > 0:
                raise SamplerError("phi4 needs g > 0")
            if self.a is None or not np.isfinite(self.a):
                raise SamplerError("phi4 needs a finite a")
            if not self.width > 0:
                raise SamplerError("proposal width must be > 0")

    @property
    def measurements(self) -> int:
        return self.sweeps // self.stride

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self, extra: str = "") -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True) + "|" + extra
        return hashlib.sha256(blob.encode()).digest()


@dataclass(frozen=True)
class SamplingGraph:
    """CSR view of a geometry with absolute per-edge couplings."""

    num_vertices: int
    edges: np.ndarray
    couplings: np.ndarray
    ptr: np.ndarray
    nbr: np.ndarray
    cpl: np.ndarray
    eid: np.ndarray
    boundary: str
    coords: np.ndarray | None
    reference: int
    shape: tuple | None = None
    fingerprint: str = ""

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def max_degree(self) -> int:
        return int(np.max(np.diff(self.ptr))) if self.num_vertices else 0


def _csr(V: int, edges: np.ndarray, couplings: np.ndarray):
    E = len(edges)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    eid = np.concatenate([np.arange(E), np.arange(E)])
    order = np.lexsort((eid, src))
    src, dst, eid = src[order], dst[order], eid[order]
    ptr = np.zeros(V + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), dst.astype(np.int64), couplings[eid].astype(np.float64), eid.astype(np.int64)


def sampling_graph(geom, beta: float) -> SamplingGraph:
    """Lattices get the uniform coupling ``beta``; a SmallGraph keeps its own
    couplings (they already include beta, e.g. block models)."""
    if isinstance(geom, SmallGraph):
        edges = np.asarray(geom.edges, dtype=np.int64)
        cpl = np.asarray(geom.couplings, dtype=np.float64)
        boundary = "graph"
        coords = geom.coords
        ref = 0
        if coords is not None:
            hit = np.flatnonzero(~np.any(coords, axis=1) & (np.asarray(geom.layers) == 0))
            if len(hit):
                ref = int(hit[0])
        shape = None
        fp = geom.fingerprint()
    elif isinstance(geom, (Box, Torus)):
        edges = np.asarray(geom.edges, dtype=np.int64)
        cpl = np.full(len(edges), float(beta))
        coords = geom.coords
        if isinstance(geom, Torus):
            boundary, ref, shape = "periodic", 0, (geom.side,) * geom.d
        else:
            boundary, ref, shape = "free", geom.find_vertex(np.zeros(geom.d, dtype=np.int64)), None
        fp = f"{type(geom).__name__}:{geom.d}:{geom.side}:{beta!r}"
    elif isinstance(geom, GraphGeometry):
        raise SamplerError(f"unsupported geometry {type(geom).__name__}")
    else:
        raise SamplerError(f"not a geometry: {geom!r}")
    ptr, nbr, hcpl, eid = _csr(geom.num_vertices, edges, cpl)
    return SamplingGraph(geom.num_vertices, edges, cpl, ptr, nbr, hcpl, eid, boundary, coords, ref, shape, fp)


def displacements(sg: SamplingGraph) -> np.ndarray:
    """Displacement label of each accumulator slot."""
    if sg.boundary == "periodic":
        L = sg.shape[0]
        c = sg.coords.copy()
        c[c > L // 2] -= L
        return c
    if sg.coords is None:
        return np.arange(sg.num_vertices, dtype=np.int64).reshape(-1, 1)
    return sg.coords - sg.coords[sg.reference]


class Accumulator:
    """Batch-means accumulator for a two-point vector and named scalars."""

    def __init__(self, batches: int, measurements: int, size: int, scalars=()):
        self.batches = batches
        self.measurements = measurements
        self.sums = np.zeros((batches, size))
        self.counts = np.zeros(batches, dtype=np.int64)
        self.scalars = {k: np.zeros(batches) for k in scalars}
        self.done = 0

    def batch_of(self, m: int) -> int:
        return m * self.batches // self.measurements

    def add(self, vec, **scalars):
        b = self.batch_of(self.done)
        self.sums[b] += vec
        self.counts[b] += 1
        for k, v in scalars.items():
            self.scalars[k][b] += v
        self.done += 1


@dataclass
class ChainOutput:
    config: SamplerConfig
    boundary: str
    displacements: np.ndarray
    batch_sums: np.ndarray
    batch_counts: np.ndarray
    scalar_sums: dict
    diagnostics: dict = field(default_factory=dict)
    fingerprint: str = ""

    @property
    def count(self) -> int:
        return int(self.batch_counts.sum())

    def batch_means(self) -> np.ndarray:
        return self.batch_sums / self.batch_counts[:, None]

    def mean(self) -> np.ndarray:
        return self.batch_sums.sum(0) / self.count

    def stderr(self) -> np.ndarray:
        bm = self.batch_means()
        return bm.std(axis=0, ddof=1) / np.sqrt(len(bm))

    def scalar(self, name: str) -> tuple[float, float]:
        """(mean, standard error) of a scalar observable."""
        bm = self.scalar_sums[name] / self.batch_counts
        return float(self.scalar_sums[name].sum() / self.count), float(bm.std(ddof=1) / np.sqrt(len(bm)))

    def correlation(self, x) -> tuple[float, float]:
        """(estimate, standard error) at one displacement label."""
        x = np.atleast_1d(np.asarray(x, dtype=np.int64))
        hit = np.flatnonzero(np.all(self.displacements == x, axis=1))
        if not len(hit):
            raise KeyError(tuple(x))
        k = int(hit[0])
        return float(self.mean()[k]), float(self.stderr()[k])


def merge_outputs(outputs: list[ChainOutput]) -> ChainOutput:
    """Concatenate batches of independent chains (ordered by chain id)."""
    if not outputs:
        raise SamplerError("nothing to merge")
    outputs = sorted(outputs, key=lambda o: o.config.chain_id)
    first = outputs[0]
    for o in outputs[1:]:
        if o.fingerprint != first.fingerprint or not np.array_equal(o.displacements, first.displacements):
            raise SamplerError("chains were run on different geometries")
    return ChainOutput(
        config=first.config,
        boundary=first.boundary,
        displacements=first.displacements,
        batch_sums=np.concatenate([o.batch_sums for o in outputs]),
        batch_counts=np.concatenate([o.batch_counts for o in outputs]),
        scalar_sums={k: np.concatenate([o.scalar_sums[k] for o in outputs]) for k in first.scalar_sums},
        diagnostics={"chains": [o.diagnostics for o in outputs]},
        fingerprint=first.fingerprint,
    )


def validate_seed(cfg: SamplerConfig) -> int:
    try:
        return check_seed(cfg.seed)
    except ValueError as exc:
        raise SamplerError(str(exc)) from exc
