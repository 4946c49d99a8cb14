"""Ising and phi^4 Markov chains with batch-means two-point accumulators."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.fft

from ..rng import LANE_INIT, stream
from . import checkpoint as ckpt
from .common import (
    Accumulator,
    ChainOutput,
    SamplerConfig,
    SamplerError,
    SamplingGraph,
    displacements,
    sampling_graph,
    validate_seed,
)
from .kernels import metropolis_sweep, phi4_sweep, wolff_clusters

ISING_SCALARS = ("m", "abs_m", "m2", "energy")
PHI4_SCALARS = ("m", "abs_m", "m2", "phi1", "phi2", "phi3", "phi4")
TUNE_EVERY = 10


class Interrupted(Exception):
    """Raised when a run is stopped on purpose after a checkpoint."""


def _two_point(values: np.ndarray, sg: SamplingGraph) -> np.ndarray:
    if sg.boundary == "periodic":
        x = values.reshape(sg.shape)
        f = scipy.fft.rfftn(x, workers=1)
        c = scipy.fft.irfftn(f * np.conj(f), s=sg.shape, workers=1)
        return c.ravel() / sg.num_vertices
    return values[sg.reference] * values


def _energy(values, sg: SamplingGraph) -> float:
    return float(np.dot(sg.couplings, values[sg.edges[:, 0]] * values[sg.edges[:, 1]]))


class _Chain:
    def __init__(self, cfg: SamplerConfig, geom, checkpoint=None, block=None):
        self.cfg = cfg
        self.seed = validate_seed(cfg)
        self.sg = sampling_graph(geom, cfg.beta)
        # block = (base geometry, Q): measure tau_x = sum_i Q_i sigma_(x,i) on the base
        self.block_q = None
        self.msg = self.sg
        if block is not None:
            base, q = block
            self.block_q = np.asarray(q, dtype=np.float64)
            self.msg = sampling_graph(base, 0.0)
            if self.msg.num_vertices * len(self.block_q) != self.sg.num_vertices:
                raise SamplerError("block weights do not match the flat graph")
        self.phi4 = cfg.algorithm == "phi4-site"
        self.total = cfg.thermalization + cfg.sweeps
        self.path = Path(checkpoint) if checkpoint is not None else None
        extra = self.sg.fingerprint
        if self.block_q is not None:
            extra += "|block:" + self.msg.fingerprint + ":" + repr(self.block_q.tolist())
        self.hash = cfg.digest(extra)
        V = self.sg.num_vertices
        self.acc = Accumulator(cfg.batches, cfg.measurements, self.msg.num_vertices, PHI4_SCALARS if self.phi4 else ISING_SCALARS)
        self.width = cfg.width
        self.diag = np.zeros(4, dtype=np.uint64)  # accepts, proposals, clusters, flipped
        self.segment = 0
        self.clusters_per_sweep = 0
        init = stream(self.seed, cfg.chain_id, 0, LANE_INIT)
        if self.phi4:
            self.state = init.standard_normal(V) * 0.5
        else:
            self.state = np.where(init.random(V) < 0.5, -1, 1).astype(np.int8)
        if self.path is not None and self.path.exists():
            self._restore(ckpt.load(self.path))
        # Wolff bond probabilities per half-edge
        self.padd = -np.expm1(-2.0 * self.sg.cpl)
        self.stack = np.empty(V, dtype=np.int64)
        self.reserve = self.sg.max_degree * V + 1

    def _restore(self, cs: ckpt.ChainState):
        if cs.config_hash != self.hash:
            raise ckpt.CheckpointError("checkpoint belongs to a different config or geometry")
        if cs.state.shape != self.state.shape or cs.state.dtype != self.state.dtype:
            raise ckpt.CheckpointError("checkpoint state does not match the geometry")
        self.segment = cs.segment
        self.clusters_per_sweep = cs.clusters_per_sweep
        self.width = cs.width
        self.diag = cs.diag.copy()
        self.state = cs.state.copy()
        self.acc.sums = cs.sums.copy()
        self.acc.counts = cs.counts.copy()
        self.acc.scalars = {k: v.copy() for k, v in cs.scalars.items()}
        self.acc.done = cs.measured

    def _save(self):
        cs = ckpt.ChainState(
            self.hash, self.segment, self.acc.done, self.width, self.clusters_per_sweep, self.diag, self.state,
            self.acc.sums, self.acc.counts, self.acc.scalars,
        )
        ckpt.save(self.path, cs)

    def _measure(self):
        x = self.state.astype(np.float64)
        energy = None if self.phi4 else _energy(x, self.sg)
        if self.block_q is not None:
            x = x.reshape(-1, len(self.block_q)) @ self.block_q
        sg = self.msg
        V = sg.num_vertices
        m = x.sum() / V
        sc = {"m": m, "abs_m": abs(m), "m2": m * m}
        if self.phi4:
            x2 = x * x
            sc.update(phi1=m, phi2=x2.sum() / V, phi3=(x2 * x).sum() / V, phi4=(x2 * x2).sum() / V)
        else:
            sc["energy"] = energy
        self.acc.add(_two_point(x, sg), **sc)

    def _sweep(self, gen, buf):
        sg = self.sg
        alg = self.cfg.algorithm
        V = sg.num_vertices
        if alg == "cluster-flip":
            # thermalization sweeps flip ~V sites; measured sweeps build a fixed
            # number of clusters (a size-based stopping rule would bias them)
            by_clusters = self.clusters_per_sweep > 0
            target = self.clusters_per_sweep if by_clusters else V
            done = 0
            while done < target:
                if len(buf[0]) - buf[1] < self.reserve:
                    buf[0] = np.concatenate([buf[0][buf[1]:], gen.random(max(2 * self.reserve, 1 << 16))])
                    buf[1] = 0
                pos, fl, nc = wolff_clusters(
                    self.state, sg.ptr, sg.nbr, self.padd, buf[0], buf[1], target - done, self.reserve, self.stack,
                    by_clusters,
                )
                buf[1] = pos
                done += nc if by_clusters else fl
                self.diag[2] += np.uint64(nc)
                self.diag[3] += np.uint64(fl)
        elif alg == "single-site":
            acc = metropolis_sweep(self.state, sg.ptr, sg.nbr, sg.cpl, gen.random(V))
            self.diag[0] += np.uint64(acc)
            self.diag[1] += np.uint64(V)
        else:
            acc = phi4_sweep(self.state, sg.ptr, sg.nbr, sg.cpl, self.cfg.g, self.cfg.a, self.width, gen.random(2 * V))
            return acc
        return 0

    def run(self, stop_after: int | None = None) -> ChainOutput:
        cfg = self.cfg
        S = cfg.segment
        nseg = -(-self.total // S)
        therm = cfg.thermalization
        ran = 0
        while self.segment < nseg:
            gen = stream(self.seed, cfg.chain_id, self.segment)
            buf = [np.empty(0), 0]
            tune_acc = 0
            for sweep in range(self.segment * S, min((self.segment + 1) * S, self.total)):
                if sweep == therm and cfg.algorithm == "cluster-flip":
                    self._calibrate()
                acc = self._sweep(gen, buf)
                if self.phi4:
                    if sweep < therm:
                        tune_acc += acc
                        if (sweep + 1) % TUNE_EVERY == 0:
                            rate = tune_acc / (TUNE_EVERY * self.sg.num_vertices)
                            if rate < 0.4:
                                self.width *= 0.8
                            elif rate > 0.6:
                                self.width *= 1.25
                            tune_acc = 0
                    else:
                        self.diag[0] += np.uint64(acc)
                        self.diag[1] += np.uint64(self.sg.num_vertices)
                if sweep >= therm and (sweep - therm + 1) % cfg.stride == 0:
                    self._measure()
            self.segment += 1
            ran += 1
            if self.path is not None:
                self._save()
            if stop_after is not None and ran >= stop_after and self.segment < nseg:
                raise Interrupted(f"stopped after segment {self.segment}")
        return self._output()

    def _calibrate(self):
        """Clusters per measured sweep: V / mean cluster size over thermalization (1 without it)."""
        nc, fl = int(self.diag[2]), int(self.diag[3])
        V = self.sg.num_vertices
        self.clusters_per_sweep = max(1, int(round(V * nc / fl))) if fl else 1

    def _output(self) -> ChainOutput:
        acc = self.acc
        if acc.done != self.cfg.measurements:
            raise SamplerError("measurement count does not match the sweep schedule")
        d = self.diag
        diag = {"width": self.width}
        if self.clusters_per_sweep:
            diag["clusters_per_sweep"] = self.clusters_per_sweep
        if d[1]:
            diag["acceptance"] = float(d[0]) / float(d[1])
        if d[2]:
            diag["clusters"] = int(d[2])
            diag["mean_cluster_size"] = float(d[3]) / float(d[2])
        return ChainOutput(
            config=self.cfg,
            boundary=self.msg.boundary,
            displacements=displacements(self.msg),
            batch_sums=acc.sums,
            batch_counts=acc.counts,
            scalar_sums=acc.scalars,
            diagnostics=diag,
            fingerprint=self.sg.fingerprint,
        )


def run_ising_chain(cfg: SamplerConfig, box, checkpoint=None, stop_after: int | None = None,
                    block=None) -> ChainOutput:
    """Cluster-flip (Wolff) or single-site Metropolis chain for the Ising model.

    ``checkpoint`` names a file written after every segment; an existing file
    is resumed from.  ``stop_after`` interrupts after that many segments
    (used to exercise resumption).  ``block = (base, Q)`` runs on a flat
    block-model graph (site-major layout) and records <tau_0 tau_x> on ``base``.
    """
    if cfg.algorithm not in ("cluster-flip", "single-site"):
        raise SamplerError(f"{cfg.algorithm!r} is not an Ising spin dynamics")
    return _Chain(cfg, box, checkpoint, block).run(stop_after)


def run_phi4_chain(cfg: SamplerConfig, box, checkpoint=None, stop_after: int | None = None) -> ChainOutput:
    """Single-site Metropolis chain for e^{beta sum phi phi} prod e^{-g phi^4 - a phi^2} dphi.

    The proposal width is adapted during thermalization towards 40-60%
    acceptance and frozen afterwards.
    """
    if cfg.algorithm != "phi4-site":
        raise SamplerError("phi4 chains need algorithm='phi4-site'")
    if cfg.g is None or cfg.g <= 0:
        raise SamplerError("g must be > 0")
    return _Chain(cfg, box, checkpoint).run(stop_after)
