"""Two-point tables and the quantities derived from them.

A :class:`TwoPointTable` maps displacements to estimates of <tau_0 tau_x>.
Exact tables (spin sums, transfer matrices) and Monte Carlo tables share the
same type, so every derived quantity goes through one code path.  Tables that
were averaged over the lattice symmetry group are stored "canonically": only
displacements with ``x_1 >= x_2 >= ... >= x_d >= 0`` are kept and lookups
fold any displacement into that wedge.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exact import SpinSumOracle
from .graph import SmallGraph
from .lattice import Box, Torus


class TableError(ValueError):
    pass


class RangeError(TableError):
    pass


def _orbit_sizes(points: np.ndarray) -> np.ndarray:
    """Number of distinct images of each canonical point under the hyperoctahedral group."""
    d = points.shape[1]
    out = np.empty(len(points), dtype=np.int64)
    fd = math.factorial(d)
    for i, p in enumerate(points.tolist()):
        _, mult = np.unique(p, return_counts=True)
        perms = fd // math.prod(math.factorial(int(m)) for m in mult)
        out[i] = perms * 2 ** sum(1 for c in p if c != 0)
    return out


def canonical_points(d: int, n: int) -> np.ndarray:
    """All x with n >= x_1 >= ... >= x_d >= 0."""
    pts = [c[::-1] for c in itertools.combinations_with_replacement(range(n + 1), d)]
    return np.array(pts, dtype=np.int64).reshape(-1, d)


def box_points(d: int, n: int) -> np.ndarray:
    r = np.arange(-n, n + 1)
    return np.stack(np.meshgrid(*([r] * d), indexing="ij"), axis=-1).reshape(-1, d)


@dataclass
class TwoPointTable:
    d: int
    displacements: np.ndarray
    estimate: np.ndarray
    variance: np.ndarray
    count: np.ndarray
    provenance: dict = field(default_factory=dict)
    period: int | None = None
    canonical: bool = False
    batches: np.ndarray | None = None

    def __post_init__(self):
        # contiguous copies: reductions must not depend on how the arrays were loaded
        self.displacements = np.ascontiguousarray(self.displacements, dtype=np.int64).reshape(-1, self.d)
        K = len(self.displacements)
        self.estimate = np.ascontiguousarray(self.estimate, dtype=np.float64).reshape(K)
        self.variance = np.ascontiguousarray(self.variance, dtype=np.float64).reshape(K)
        self.count = np.asarray(self.count, dtype=np.int64).reshape(K)
        if not np.all(np.isfinite(self.estimate)) or not np.all(np.isfinite(self.variance)):
            raise TableError("table entries must be finite")
        if self.batches is not None:
            self.batches = np.ascontiguousarray(self.batches, dtype=np.float64).reshape(-1, K)
        self._radius = int(np.abs(self.displacements).max()) if K else 0
        self._base = 2 * self._radius + 1
        keys = self._encode(self.displacements)
        self._order = np.argsort(keys, kind="stable")
        self._sorted = keys[self._order]
        if len(np.unique(keys)) != K:
            raise TableError("duplicate displacements")
        self._range = None

    # -- lookup ---------------------------------------------------------
    def _encode(self, pts: np.ndarray) -> np.ndarray:
        key = np.zeros(len(pts), dtype=np.int64)
        for k in range(self.d):
            key = key * self._base + (pts[:, k] + self._radius)
        return key

    def fold(self, pts) -> np.ndarray:
        """Map displacements to the stored representative."""
        pts = np.array(pts, dtype=np.int64).reshape(-1, self.d)
        if self.period is not None:
            L = self.period
            pts = np.mod(pts, L)
            pts[pts > L // 2] -= L
        if self.canonical:
            pts = -np.sort(-np.abs(pts), axis=1)
        return pts

    def index(self, pts) -> np.ndarray:
        """Row indices of the given displacements; -1 where absent."""
        p = self.fold(pts)
        inside = np.all(np.abs(p) <= self._radius, axis=1)
        out = np.full(len(p), -1, dtype=np.int64)
        if np.any(inside):
            keys = self._encode(p[inside])
            pos = np.searchsorted(self._sorted, keys)
            pos = np.minimum(pos, len(self._sorted) - 1)
            hit = self._sorted[pos] == keys
            out[np.flatnonzero(inside)[hit]] = self._order[pos[hit]]
        return out

    def _rows(self, pts) -> np.ndarray:
        idx = self.index(pts)
        if np.any(idx < 0):
            bad = np.asarray(pts).reshape(-1, self.d)[np.flatnonzero(idx < 0)[0]]
            raise RangeError(f"displacement {tuple(int(c) for c in bad)} is outside the table")
        return idx

    def values(self, pts) -> np.ndarray:
        return self.estimate[self._rows(pts)]

    def value(self, x) -> float:
        return float(self.values(np.atleast_2d(x))[0])

    def var(self, x) -> float:
        return float(self.variance[self._rows(np.atleast_2d(x))][0])

    def axis(self, kmax: int, axis: int = 0) -> np.ndarray:
        pts = np.zeros((kmax + 1, self.d), dtype=np.int64)
        pts[:, axis] = np.arange(kmax + 1)
        return self.values(pts)

    @property
    def range(self) -> int:
        """Largest n with every point of Lambda_n present and not wrapped onto another."""
        if self._range is None:
            if self.period is not None:
                self._range = (self.period - 1) // 2
            else:
                n = 0
                while n < self._radius and np.all(self.index(self._shell(n + 1)) >= 0):
                    n += 1
                self._range = n if np.all(self.index(np.zeros((1, self.d), dtype=np.int64)) >= 0) else -1
        return self._range

    @property
    def reach(self) -> int:
        """Largest axis distance that can be looked up (with wrapping for periodic tables)."""
        return self.period // 2 if self.period is not None else self._radius

    def _shell(self, n: int) -> np.ndarray:
        if self.canonical:
            pts = canonical_points(self.d, n)
            return pts[pts[:, 0] == n]
        pts = box_points(self.d, n)
        return pts[np.abs(pts).max(axis=1) == n]

    def require_range(self, n: int, allow_wrap: bool = False):
        lim = self.reach if allow_wrap else self.range
        if n > lim:
            raise RangeError(f"need Lambda_{n} but the table covers radius {lim}")

    def box_sum_points(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Points and multiplicities that enumerate Lambda_n once."""
        self.require_range(n)
        if self.canonical:
            pts = canonical_points(self.d, n)
            return pts, _orbit_sizes(pts)
        pts = box_points(self.d, n)
        return pts, np.ones(len(pts), dtype=np.int64)

    # -- derived tables -------------------------------------------------
    def with_estimate(self, estimate: np.ndarray) -> "TwoPointTable":
        return TwoPointTable(self.d, self.displacements, estimate, np.zeros_like(estimate), self.count,
                             dict(self.provenance), self.period, self.canonical, None)

    def replicas(self) -> list["TwoPointTable"]:
        """Leave-one-batch-out tables for jackknife errors."""
        if self.batches is None:
            return []
        B = len(self.batches)
        total = self.batches.sum(axis=0)
        return [self.with_estimate((total - self.batches[b]) / (B - 1)) for b in range(B)]

    def scaled(self, factor: float) -> "TwoPointTable":
        return TwoPointTable(self.d, self.displacements, self.estimate * factor, self.variance * factor**2,
                             self.count, dict(self.provenance), self.period, self.canonical,
                             None if self.batches is None else self.batches * factor)

    # -- io -------------------------------------------------------------
    def write(self, stem) -> list[Path]:
        """Write ``stem.csv`` + ``stem.json`` (+ ``stem.batches.npy`` for MC tables)."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        csv = stem.with_suffix(".csv")
        header = ",".join([f"dx_{k + 1}" for k in range(self.d)] + ["estimate", "variance", "count"])
        lines = [header]
        for p, e, v, c in zip(self.displacements.tolist(), self.estimate.tolist(), self.variance.tolist(),
                              self.count.tolist()):
            lines.append(",".join([str(x) for x in p] + [repr(e), repr(v), str(c)]))
        csv.write_text("\n".join(lines) + "\n")
        side = stem.with_suffix(".json")
        meta = {"d": self.d, "period": self.period, "canonical": self.canonical, "range": self.range,
                "provenance": self.provenance, "batches": None if self.batches is None else len(self.batches)}
        side.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
        out = [csv, side]
        if self.batches is not None:
            bpath = stem.with_suffix(".batches.npy")
            np.save(bpath, self.batches)
            out.append(bpath)
        return out

    @classmethod
    def read(cls, stem) -> "TwoPointTable":
        stem = Path(stem)
        if stem.suffix == ".csv":
            stem = stem.with_suffix("")
        meta = json.loads(stem.with_suffix(".json").read_text())
        d = meta["d"]
        raw = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        batches = None
        if meta.get("batches"):
            batches = np.load(stem.with_suffix(".batches.npy"))
        return cls(d, raw[:, :d].astype(np.int64), raw[:, d], raw[:, d + 1], raw[:, d + 2].astype(np.int64),
                   meta["provenance"], meta["period"], meta["canonical"], batches)


# ---------------------------------------------------------------------------
# construction


def _symmetry_group(d: int):
    for perm in itertools.permutations(range(d)):
        for flips in itertools.product((False, True), repeat=d):
            yield perm, flips


def symmetrize_grid(arr: np.ndarray, periodic: bool) -> np.ndarray:
    """Average a (B, n_1, ..., n_d) array over axis permutations and reflections.

    Periodic grids are indexed by r mod L (reflection r -> -r); free grids are
    centred (reflection is a flip).
    """
    d = arr.ndim - 1
    acc = np.zeros_like(arr)
    count = 0
    for perm, flips in _symmetry_group(d):
        a = arr.transpose((0,) + tuple(p + 1 for p in perm))
        for k, f in enumerate(flips):
            if f:
                a = np.flip(a, axis=k + 1)
                if periodic:
                    a = np.roll(a, 1, axis=k + 1)
        acc += a
        count += 1
    return acc / count


def _canonical_from_grid(arr: np.ndarray, d: int, n: int, periodic: bool):
    pts = canonical_points(d, n)
    if periodic:
        L = arr.shape[1]
        idx = tuple(np.mod(pts[:, k], L) for k in range(d))
    else:
        idx = tuple(pts[:, k] + n for k in range(d))
    return pts, arr[(slice(None),) + idx]


def table_from_batches(batch_means: np.ndarray, counts: np.ndarray, displacements: np.ndarray, d: int,
                       provenance: dict, period: int | None = None, canonical: bool = False) -> TwoPointTable:
    B = len(batch_means)
    est = (batch_means * counts[:, None]).sum(axis=0) / counts.sum()
    var = batch_means.var(axis=0, ddof=1) / B
    cnt = np.full(len(est), int(counts.sum()))
    return TwoPointTable(d, displacements, est, var, cnt, provenance, period, canonical, batch_means)


def table_from_chain(out, geom, provenance: dict | None = None, symmetrize: bool = True) -> TwoPointTable:
    """Two-point table from a :class:`~rcising.samplers.ChainOutput`.

    Periodic and centred free boxes are averaged over the lattice symmetry
    group and stored canonically when ``symmetrize`` is set.
    """
    prov = {"source": "mc", "boundary": out.boundary, "beta": out.config.beta, "seed": out.config.seed,
            "algorithm": out.config.algorithm, "sweeps": out.config.sweeps, "chains": len(out.batch_counts)
            // out.config.batches}
    if provenance:
        prov.update(provenance)
    bm = out.batch_means()
    counts = out.batch_counts.astype(np.float64)
    if isinstance(geom, Torus):
        d, L = geom.d, geom.side
        prov["L"] = L
        if symmetrize:
            grid = symmetrize_grid(bm.reshape((-1,) + (L,) * d), periodic=True)
            pts, vals = _canonical_from_grid(grid, d, L // 2, periodic=True)
            prov["symmetrized"] = True
            return table_from_batches(vals, counts, pts, d, prov, period=L, canonical=True)
        return table_from_batches(bm, counts, out.displacements, d, prov, period=L)
    if isinstance(geom, Box):
        d, n = geom.d, geom.n
        prov["radius"] = n
        if symmetrize and not np.any(geom.offset):
            grid = symmetrize_grid(bm.reshape((-1,) + (2 * n + 1,) * d), periodic=False)
            pts, vals = _canonical_from_grid(grid, d, n, periodic=False)
            prov["symmetrized"] = True
            return table_from_batches(vals, counts, pts, d, prov, canonical=True)
        return table_from_batches(bm, counts, out.displacements, d, prov)
    d = out.displacements.shape[1]
    return table_from_batches(bm, counts, out.displacements, d, prov)


def exact_table(geom, beta: float | None = None, reference=None, provenance: dict | None = None) -> TwoPointTable:
    """<sigma_ref sigma_x> for every vertex by direct spin summation (<= 20 sites)."""
    g = geom if isinstance(geom, SmallGraph) else SmallGraph.from_lattice(geom, beta)
    if g.coords is None:
        raise TableError("exact tables need vertex coordinates")
    if reference is None:
        ref = geom.find_vertex(np.zeros(g.coords.shape[1], dtype=np.int64)) if isinstance(geom, (Box, Torus)) \
            else int(np.flatnonzero(~np.any(g.coords, axis=1))[0])
    else:
        ref = int(reference)
    oracle = SpinSumOracle(g)
    est = np.array([oracle.two_point(ref, v) for v in range(g.num_vertices)])
    disp = g.coords - g.coords[ref]
    prov = {"source": "exact", "beta": beta, "boundary": "periodic" if isinstance(geom, Torus) else "free",
            "model": "ising", "method": "spin-sum"}
    if provenance:
        prov.update(provenance)
    period = None
    if isinstance(geom, Torus):
        period = geom.side
        L = period
        disp = np.mod(disp, L)
        disp[disp > L // 2] -= L
    return TwoPointTable(g.coords.shape[1], disp, est, np.zeros(len(est)), np.zeros(len(est), dtype=np.int64),
                         prov, period)


def transfer_matrix_torus_table(L: int, beta: float) -> TwoPointTable:
    """Exact <sigma_0 sigma_x> on the L x L torus (L <= 10) by column transfer matrices."""
    if not 3 <= L <= 10:
        raise TableError("transfer-matrix tables support 3 <= L <= 10")
    S = 1 << L
    states = ((np.arange(S)[:, None] >> np.arange(L)) & 1) * -2 + 1  # (S, L) spins
    intra = (states * np.roll(states, -1, axis=1)).sum(axis=1)
    inter = states @ states.T
    # symmetric split of the intra-column weight
    half = np.exp(0.5 * beta * intra)
    T = half[:, None] * np.exp(beta * inter) * half[None, :]
    # rescale to keep powers finite
    T /= np.abs(T).max()
    w, U = np.linalg.eigh(T)
    def power(k):
        return (U * w**k) @ U.T
    Z = np.trace(power(L))
    D0 = states[:, 0].astype(np.float64)
    est = np.empty((L, L))
    for i in range(L):  # column offset
        P = power(i)
        Q = power(L - i)
        for j in range(L):  # row offset
            Dj = states[:, j].astype(np.float64)
            est[i, j] = np.einsum("a,ab,b,ba->", D0, P, Dj, Q)
    est /= Z
    pts = np.indices((L, L)).reshape(2, -1).T
    disp = pts.copy()
    disp[disp > L // 2] -= L
    prov = {"source": "exact", "beta": beta, "boundary": "periodic", "model": "ising", "method": "transfer-matrix",
            "L": L}
    return TwoPointTable(2, disp, est.ravel(), np.zeros(L * L), np.zeros(L * L, dtype=np.int64), prov, L)


def synthetic_table(d: int, n: int, fn, canonical: bool = True, provenance: dict | None = None) -> TwoPointTable:
    """Table of ``fn(points) -> values`` on Lambda_n (fn must be symmetric if canonical)."""
    pts = canonical_points(d, n) if canonical else box_points(d, n)
    vals = np.asarray(fn(pts), dtype=np.float64)
    prov = {"source": "synthetic"}
    if provenance:
        prov.update(provenance)
    return TwoPointTable(d, pts, vals, np.zeros(len(pts)), np.zeros(len(pts), dtype=np.int64), prov,
                         None, canonical)


class RadialTable(TwoPointTable):
    """Table depending on the sup norm only: ``profile[r]`` for r = 0..R.

    Sums over Lambda_n use exact shell counts, so very large boxes cost O(n).
    """

    def __init__(self, d: int, profile, provenance: dict | None = None):
        profile = np.asarray(profile, dtype=np.float64)
        R = len(profile) - 1
        pts = np.zeros((R + 1, d), dtype=np.int64)
        pts[:, 0] = np.arange(R + 1)
        prov = {"source": "synthetic", "radial": True}
        if provenance:
            prov.update(provenance)
        super().__init__(d, pts, profile, np.zeros(R + 1), np.zeros(R + 1, dtype=np.int64), prov, None, True)
        self._range = R

    def fold(self, pts) -> np.ndarray:
        pts = np.array(pts, dtype=np.int64).reshape(-1, self.d)
        out = np.zeros_like(pts)
        out[:, 0] = np.abs(pts).max(axis=1)
        return out

    @property
    def range(self) -> int:
        return self._range

    def box_sum_points(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        self.require_range(n)
        r = np.arange(n + 1, dtype=object)
        counts = np.array([1] + [int((2 * k + 1) ** self.d - (2 * k - 1) ** self.d) for k in r[1:]],
                          dtype=np.float64)
        return self.displacements[: n + 1], counts

    def with_estimate(self, estimate):
        return RadialTable(self.d, estimate, self.provenance)


def radial_table(d: int, R: int, fn, provenance: dict | None = None) -> RadialTable:
    """RadialTable with ``profile[r] = fn(r)`` (fn receives an int array)."""
    return RadialTable(d, fn(np.arange(R + 1)), provenance)


def zero_mode(t: TwoPointTable) -> float:
    """Average of a periodic table over the whole torus (the p = 0 Fourier mode / volume)."""
    if t.period is None:
        raise TableError("zero mode is defined for periodic tables only")
    L = t.period
    if not t.canonical:
        if len(t.estimate) != L**t.d:
            raise TableError("periodic table does not cover the torus")
        return math.fsum(t.estimate.tolist()) / len(t.estimate)
    pts = t.displacements
    fd = math.factorial(t.d)
    w = np.empty(len(pts))
    for i, p in enumerate(pts.tolist()):
        _, mult = np.unique(p, return_counts=True)
        perms = fd // math.prod(math.factorial(int(m)) for m in mult)
        w[i] = perms * 2 ** sum(1 for c in p if c != 0 and 2 * c != L)
    if int(w.sum()) != L**t.d:
        raise TableError("canonical periodic table does not cover the torus")
    return math.fsum((w * t.estimate).tolist()) / L**t.d


def jackknife(table: TwoPointTable, fn) -> tuple[float, float]:
    """``fn(table)`` and its jackknife standard error over batches (0 for exact tables)."""
    value = fn(table)
    reps = table.replicas()
    if not reps:
        return value, 0.0
    r = np.array([fn(t) for t in reps], dtype=np.float64)
    B = len(r)
    return value, float(np.sqrt((B - 1) / B * np.sum((r - r.mean(axis=0)) ** 2, axis=0)))


# ---------------------------------------------------------------------------
# observables


def susceptibility(t: TwoPointTable, n: int) -> float:
    """chi_n = sum over Lambda_n of t(x)."""
    pts, w = t.box_sum_points(n)
    return float(np.dot(w, t.values(pts)))


def bubble(t: TwoPointTable, n: int) -> float:
    """B_n = sum over Lambda_n of t(x)^2."""
    pts, w = t.box_sum_points(n)
    return float(np.dot(w, t.values(pts) ** 2))


def xi_p(t: TwoPointTable, p: float, n: int) -> float:
    """(sum_{Lambda_n} |x|^p t(x) / chi_n)^(1/p) with the sup norm; n is capped at the table range."""
    if not p > 0:
        raise ValueError("p must be > 0")
    n = min(n, t.range)
    pts, w = t.box_sum_points(n)
    vals = t.values(pts)
    chi = np.dot(w, vals)
    if not chi > 0:
        raise TableError("chi_n must be positive")
    norm = np.abs(pts).max(axis=1).astype(np.float64)
    return float((np.dot(w, norm**p * vals) / chi) ** (1.0 / p))


def _boundary_pairs(S: np.ndarray) -> np.ndarray:
    """For each x in S, the number of nearest neighbours outside S."""
    d = S.shape[1]
    keys = {tuple(p) for p in S.tolist()}
    out = np.zeros(len(S), dtype=np.int64)
    for i, p in enumerate(S.tolist()):
        for k in range(d):
            for s in (-1, 1):
                q = list(p)
                q[k] += s
                if tuple(q) not in keys:
                    out[i] += 1
    return out


def phi_S(beta: float, S, inner_table: TwoPointTable) -> float:
    """beta * sum over boundary pairs (x in S, y not in S, y ~ x) of <tau_0 tau_x>_S.

    ``S`` is an array of lattice points containing the origin; ``inner_table``
    holds the finite-volume correlations on S with free boundary.
    """
    S = np.asarray(S, dtype=np.int64)
    S = S.reshape(-1, inner_table.d)
    if not np.any(np.all(S == 0, axis=1)):
        raise ValueError("S must contain the origin")
    mult = _boundary_pairs(S)
    keep = mult > 0
    if not np.any(keep):
        return 0.0
    return float(beta * np.dot(mult[keep], inner_table.values(S[keep])))


def phi_box(beta: float, k: int, inner_table: TwoPointTable) -> float:
    """phi_beta(Lambda_k) from a table of <tau_0 tau_x>_{Lambda_k}."""
    d = inner_table.d
    return phi_S(beta, box_points(d, k), inner_table)


SHARP_LENGTH_CAVEAT = (
    "box-restricted: only S = Lambda_k is searched, so L_box over-estimates the sharp length "
    "(infimum over a sub-family of admissible sets)"
)


@dataclass
class SharpLengthEstimate:
    threshold: float
    k: int | None
    L_box: int | None
    curve: dict
    verdict: str
    caveat: str = SHARP_LENGTH_CAVEAT

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "k": self.k, "L_box": self.L_box, "verdict": self.verdict,
                "curve": {str(k): list(v) for k, v in self.curve.items()}, "caveat": self.caveat}


class BoxTableProvider:
    """Tables of <sigma_0 sigma_x>_{Lambda_k} (free boundary) for the sharp-length scan.

    k = 0 is trivial, boxes with at most 20 sites use spin sums, larger boxes
    use a Wolff chain built from ``mc`` (a SamplerConfig template).
    """

    def __init__(self, d: int, beta: float, mc=None):
        self.d = d
        self.beta = beta
        self.mc = mc
        self._cache = {}

    def __call__(self, k: int) -> TwoPointTable:
        if k in self._cache:
            return self._cache[k]
        if k == 0:
            z = np.zeros((1, self.d), dtype=np.int64)
            t = TwoPointTable(self.d, z, [1.0], [0.0], [0], {"source": "exact", "beta": self.beta})
        elif (2 * k + 1) ** self.d <= 20:
            t = exact_table(Box(self.d, k), self.beta)
        else:
            if self.mc is None:
                raise TableError(f"Lambda_{k} is too large for spin sums and no MC config was given")
            from dataclasses import replace

            from .rng import derive_seed
            from .samplers import run_ising_chain

            cfg = replace(self.mc, beta=self.beta, seed=derive_seed(self.mc.seed, "box", self.d, k))
            box = Box(self.d, k)
            t = table_from_chain(run_ising_chain(cfg, box), box)
        self._cache[k] = t
        return t


def sharp_length_box(beta: float, threshold: float, k_max: int, d: int = 2, provider=None) -> SharpLengthEstimate:
    """Smallest k <= k_max with phi_beta(Lambda_k) < threshold (boxes only)."""
    if threshold not in (0.5, 0.25):
        raise ValueError("threshold must be 1/2 or 1/4")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    provider = provider or BoxTableProvider(d, beta)
    curve = {}
    for k in range(0, k_max + 1):
        t = provider(k)
        val, err = jackknife(t, lambda tt, k=k: phi_box(beta, k, tt))
        curve[k] = (val, err)
        if val < threshold:
            return SharpLengthEstimate(threshold, k, max(k, 1), curve, "found")
    return SharpLengthEstimate(threshold, None, None, curve, "exceeded-budget")


@dataclass
class XiFit:
    xi: float
    stderr: float
    window: tuple
    slope: float
    intercept: float
    subadditivity_violations: list


def _axis_fit_window(vals: np.ndarray, lo: int, hi: int):
    ks = np.arange(lo, hi + 1)
    y = vals[lo : hi + 1]
    if np.any(y <= 0):
        raise TableError("nonpositive entries in the fit window")
    slope, intercept = np.polyfit(ks, np.log(y), 1)
    return slope, intercept


def correlation_length_fit(t: TwoPointTable, window: tuple | None = None) -> XiFit:
    """-1/slope of log t(k e_1) against k, with a Griffiths subadditivity check."""
    kmax = t.reach
    vals = t.axis(kmax)
    if window is None:
        hi0 = max(2, kmax // 2)
        pos = np.flatnonzero(vals[1 : hi0 + 1] <= 0)
        if len(pos):
            hi0 = int(pos[0])
        s0, _ = _axis_fit_window(vals, 1, max(hi0, 2))
        guess = -1.0 / s0 if s0 < 0 else float(kmax)
        lo = max(1, int(round(guess)))
        hi = min(kmax, max(lo + 2, int(round(3 * guess))))
        lo = min(lo, hi - 2)
        window = (lo, hi)
    lo, hi = window
    if hi > kmax or lo < 0 or hi - lo < 1:
        raise RangeError(f"fit window {window} outside axis range 0..{kmax}")

    def fit(tt):
        s, _ = _axis_fit_window(tt.axis(hi), lo, hi)
        return -1.0 / s

    slope, intercept = _axis_fit_window(vals, lo, hi)
    xi, err = jackknife(t, fit)
    sd = np.sqrt(t.variance[t.index(np.pad(np.arange(kmax + 1)[:, None], ((0, 0), (0, t.d - 1))))])
    viol = []
    for k in range(1, hi + 1):
        for m in range(k, hi + 1 - k):
            if k + m > kmax:
                continue
            lhs, rhs = vals[k + m], vals[k] * vals[m]
            band = 3 * np.sqrt(sd[k + m] ** 2 + (vals[m] * sd[k]) ** 2 + (vals[k] * sd[m]) ** 2)
            if lhs < rhs - band - 1e-12 * abs(rhs):
                viol.append((k, m))
    return XiFit(float(-1.0 / slope), err, (lo, hi), float(slope), float(intercept), viol)


@dataclass
class ExponentFit:
    exponent: float  # d - 2 + eta_eff
    eta: float
    stderr: float
    window: tuple
    method: str
    plain_exponent: float


def _powerlaw_slope(k, y):
    return -np.polyfit(np.log(k), np.log(y), 1)[0]


def _image_fit(k, y, L, p0):
    from scipy.optimize import least_squares

    logk = np.log(k)
    logk2 = np.log(L - k)

    def resid(theta):
        lnA, p = theta
        return lnA + np.logaddexp(-p * logk, -p * logk2) - np.log(y)

    res = least_squares(resid, x0=[np.log(y[0]) + p0 * logk[0], p0])
    return float(res.x[1])


def fit_effective_exponent(t: TwoPointTable, window: tuple | None = None, images: bool = False) -> ExponentFit:
    """Slope of log t(k e_1) against log k, reported as d - 2 + eta_eff.

    On a periodic table the default window is the short-distance range
    [2, L/16], where the torus has not yet bent the axis profile upwards.
    ``images=True`` instead fits t(k) = A (k^-p + (L - k)^-p); that model
    over-corrects for interacting critical tables and is kept for comparison.
    """
    periodic = t.period is not None
    if images and not periodic:
        raise TableError("image correction needs a periodic table")
    kmax = t.reach
    if window is None:
        window = (2, max(5, t.period // 16)) if periodic else (2, kmax)
    lo, hi = window
    if hi > kmax:
        raise RangeError(f"window {window} beyond reach {kmax}")
    ks = np.arange(lo, hi + 1)
    if len(ks) < 4 or lo < 1:
        raise TableError("need at least 4 usable scales")

    def est(tt):
        y = tt.axis(hi)[lo:]
        if np.any(y <= 0):
            raise TableError("nonpositive entries in the fit window")
        p0 = _powerlaw_slope(ks, y)
        return _image_fit(ks.astype(float), y, float(t.period), p0) if images else p0

    val, err = jackknife(t, est)
    y = t.axis(hi)[lo:]
    plain = float(_powerlaw_slope(ks, y))
    return ExponentFit(float(val), float(val - (t.d - 2)), err, (lo, hi), "image" if images else "power", plain)


def nu_eff(betas, L_boxes, beta_c: float) -> float:
    """-slope of log L_box against log(beta_c - beta)."""
    b = np.asarray(betas, dtype=float)
    Lb = np.asarray(L_boxes, dtype=float)
    if np.any(b >= beta_c) or np.any(Lb <= 0) or len(b) < 2:
        raise ValueError("need >= 2 subcritical points with positive L_box")
    return float(-np.polyfit(np.log(beta_c - b), np.log(Lb), 1)[0])


def cauchy_schwarz_bubble(t: TwoPointTable, n: int) -> tuple[float, float]:
    """(chi_4n, |Lambda_4n|^(1/2) sqrt(B_4n)); the first never exceeds the second."""
    chi = susceptibility(t, 4 * n)
    B = bubble(t, 4 * n)
    return chi, float((8 * n + 1) ** (t.d / 2) * np.sqrt(B))
