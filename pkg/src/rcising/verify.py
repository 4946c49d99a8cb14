"""Inequality harness: both sides of each bound from tables, with verdicts.

Paper constants are existential, so nothing here asserts their values.  The
verdicts are structural: positivity with a 3-sigma margin, boundedness away
from zero through a trend test, pointwise domination.  "Bounded away from
zero" means: at least 4 scales, fitted log-log slope >= -0.1, and the smallest
value's 3-sigma interval excludes 0.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .observables import (
    RangeError,
    TwoPointTable,
    box_points,
    bubble,
    jackknife,
    phi_box,
    susceptibility,
    zero_mode,
)

SCHEMA_VERSION = 1
SLOPE_FLOOR = -0.1
MIN_SCALES = 4
EXACT_TOL = 1e-12
# dyadic increments of a divergent bubble do not decay faster than this ratio
DIVERGENCE_RATIO = 0.75
# tolerance for "stable under doubling the window" in the infrared statistic
IR_STABILITY = 0.10

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


@dataclass
class CheckReport:
    check_id: str
    inputs_digest: str
    lhs: float
    rhs: float
    sigma: float
    verdict: str
    metadata: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = SCHEMA_VERSION
        return _clean(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def table_digest(*tables: TwoPointTable, extra=None) -> str:
    h = hashlib.sha256()
    for t in tables:
        h.update(np.ascontiguousarray(t.displacements).tobytes())
        h.update(np.ascontiguousarray(t.estimate).tobytes())
        h.update(np.ascontiguousarray(t.variance).tobytes())
        h.update(json.dumps(_clean(t.provenance), sort_keys=True).encode())
    if extra is not None:
        h.update(json.dumps(_clean(extra), sort_keys=True).encode())
    return h.hexdigest()[:16]


def lower_bound_verdict(value: float, sigma: float, bound: float, exact: bool = False) -> str:
    """value >= bound: pass when the 3-sigma band clears the bound, fail when it is below."""
    if exact or sigma == 0:
        tol = EXACT_TOL * max(1.0, abs(bound))
        return PASS if value >= bound - tol else FAIL
    if value - 3 * sigma > bound:
        return PASS
    if value + 3 * sigma < bound:
        return FAIL
    return INCONCLUSIVE


def loglog_slope(ns, values) -> float:
    ns = np.asarray(ns, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0):
        return -math.inf
    return float(np.polyfit(np.log(ns), np.log(v), 1)[0])


def bounded_away_verdict(ns, values, sigmas) -> tuple[str, dict]:
    info = {"rule": "slope >= -0.1 and min 3-sigma CI excludes 0 over >= 4 scales"}
    values = np.asarray(values, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    lower = values - 3 * sigmas
    info["min_lower_3sigma"] = float(lower.min())
    if len(ns) < MIN_SCALES:
        info["slope"] = None
        info["note"] = f"trend test needs {MIN_SCALES} scales"
        return (INCONCLUSIVE if lower.min() > 0 else FAIL), info
    slope = loglog_slope(ns, values)
    info["slope"] = slope
    if lower.min() > 0 and slope >= SLOPE_FLOOR:
        return PASS, info
    if np.any(values + 3 * sigmas < 0) or slope < SLOPE_FLOOR:
        return FAIL, info
    return INCONCLUSIVE, info


def _is_exact(t: TwoPointTable) -> bool:
    return t.batches is None and not np.any(t.variance)


def _sigma(t: TwoPointTable, fn) -> tuple[float, float]:
    v, e = jackknife(t, fn)
    return float(v), float(e)


def _axis_point(d: int, k) -> np.ndarray:
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    p = np.zeros((len(k), d), dtype=np.int64)
    p[:, 0] = k
    return p


# ---------------------------------------------------------------------------
# reflection double sum and the ratio test


def reflection_lhs(t: TwoPointTable, beta: float, n: int) -> float:
    """beta * sum_{x,y in Lambda_n, y~x} (t(x) - t(R x)) t(R y - y), R the reflection in x_1 = n."""
    d = t.d
    X = box_points(d, n)
    RX = X.copy()
    RX[:, 0] = 2 * n - X[:, 0]
    diff = t.values(X) - t.values(RX)
    gap = t.values(_axis_point(d, np.arange(0, 4 * n + 1, 2)))  # t((2n - 2 y_1) e_1) at 2n - 2y_1 = 0..4n
    total = 0.0
    for k in range(d):
        for s in (-1, 1):
            Y = X.copy()
            Y[:, k] += s
            ok = np.abs(Y[:, k]) <= n
            g = gap[(n - Y[ok, 0])]  # (2n - 2 y_1) / 2 = n - y_1
            total += float(np.dot(diff[ok], g))
    return beta * total


def _needs_wrap(t: TwoPointTable, reach: int) -> bool:
    if t.period is None:
        return False
    return reach > t.range


def _require(t: TwoPointTable, reach: int, allow_wrap: bool):
    if t.period is not None:
        if reach > t.range and not allow_wrap:
            raise RangeError(f"needs displacements up to {reach}; periodic table range is {t.range} "
                             "(pass allow_wrap=True to evaluate the torus version)")
        return
    if reach > t.reach or 3 * reach // 4 > t.range:
        # axis reach and full-box coverage up to 3n are both needed
        raise RangeError(f"needs displacements up to {reach}; table reaches {t.reach}")


def check_theorem11(t: TwoPointTable, beta: float, n, c0: float = 0.0, allow_wrap: bool = False) -> CheckReport:
    """Reflection double sum for one n or a scan of n.

    A single n passes when LHS(n) - 3 sigma > c0.  A scan of n additionally
    applies the bounded-away-from-zero trend rule.
    """
    ns = [int(n)] if np.isscalar(n) else [int(m) for m in n]
    curve = []
    wrapped = False
    for m in ns:
        _require(t, 4 * m, allow_wrap)
        wrapped |= _needs_wrap(t, 4 * m)
        v, s = _sigma(t, lambda tt, m=m: reflection_lhs(tt, beta, m))
        curve.append({"n": m, "lhs": v, "sigma": s})
    vals = [c["lhs"] for c in curve]
    sig = [c["sigma"] for c in curve]
    meta = {"beta": beta, "d": t.d, "n": ns, "c0": c0, "normalization_t0": t.value(np.zeros(t.d)),
            "wrapped": wrapped, "table": t.provenance}
    exact = _is_exact(t)
    if len(ns) == 1:
        verdict = lower_bound_verdict(vals[0], sig[0], c0, exact)
    else:
        lows = [lower_bound_verdict(v, s, c0, exact) for v, s in zip(vals, sig)]
        verdict, info = bounded_away_verdict(ns, vals, sig)
        meta.update(info)
        if FAIL in lows:
            verdict = FAIL
        elif INCONCLUSIVE in lows and verdict == PASS:
            verdict = INCONCLUSIVE
    k = int(np.argmin(vals))
    return CheckReport("theorem11", table_digest(t, extra=[beta, ns, c0]), vals[k], c0, sig[k], verdict, meta, curve)


def theorem12_ratio(t: TwoPointTable, beta: float, n: int) -> float:
    d = t.d
    chi = susceptibility(t, 4 * n)
    ks = np.arange(0, 4 * n + 1)
    tail = float(np.dot(ks + 2, t.values(_axis_point(d, ks))))
    D = chi + n ** (d - 2) * tail
    return float(t.value(_axis_point(d, n)[0]) * beta * D)


def check_theorem12(t: TwoPointTable, beta: float, n) -> CheckReport:
    """r(n) = t(n e_1) beta D(n), D(n) = chi_4n + n^(d-2) sum_{k<=4n} (k+2) t(k e_1)."""
    ns = [int(n)] if np.isscalar(n) else [int(m) for m in n]
    curve = []
    for m in ns:
        t.require_range(4 * m)
        v, s = _sigma(t, lambda tt, m=m: theorem12_ratio(tt, beta, m))
        curve.append({"n": m, "r": v, "sigma": s})
    vals = [c["r"] for c in curve]
    sig = [c["sigma"] for c in curve]
    verdict, info = bounded_away_verdict(ns, vals, sig)
    meta = {"beta": beta, "d": t.d, "n": ns, "table": t.provenance, **info}
    k = int(np.argmin(vals))
    return CheckReport("theorem12", table_digest(t, extra=[beta, ns]), vals[k], 0.0, sig[k], verdict, meta, curve)


# ---------------------------------------------------------------------------
# infrared / Simon / MMS


def _window_points(t: TwoPointTable, lo: int, hi: int) -> np.ndarray:
    from .observables import canonical_points

    pts = canonical_points(t.d, hi) if t.canonical else box_points(t.d, hi)
    norm = np.abs(pts).max(axis=1)
    return pts[(norm >= lo) & (norm <= hi)]


def _scaled_stat(t, pts, power):
    norm = np.abs(pts).max(axis=1).astype(float)
    return norm**power * t.values(pts)


def check_ir_bound(t: TwoPointTable, window: int | None = None) -> CheckReport:
    """sup |x|^(d-2) t(x) over 1 <= |x| <= W, compared with the same sup over W/2.

    On a torus the constant Fourier mode (the table's average over the torus,
    i.e. <m^2>) is subtracted first: the infrared bound controls the nonzero
    modes only, and at criticality the zero mode dominates t at distances of
    order L.
    """
    W = window or t.range
    if W < 1:
        raise RangeError("table has no nonzero displacements")
    outer = _window_points(t, 1, W)
    inner = _window_points(t, 1, max(1, W // 2))
    p = t.d - 2
    periodic = t.period is not None

    def stat(tt, pts):
        vals = tt.values(pts) - (zero_mode(tt) if periodic else 0.0)
        return float((np.abs(pts).max(axis=1).astype(float) ** p * vals).max())

    s_out, e_out = _sigma(t, lambda tt: stat(tt, outer))
    s_in, e_in = _sigma(t, lambda tt: stat(tt, inner))
    rhs = s_in * (1 + IR_STABILITY)
    sig = math.hypot(e_out, e_in * (1 + IR_STABILITY))
    finite = math.isfinite(s_out)
    if _is_exact(t):
        verdict = PASS if finite and s_out <= rhs + EXACT_TOL * max(1.0, rhs) else FAIL
    elif not finite or s_out - 3 * sig > rhs:
        verdict = FAIL
    elif s_out + 3 * sig <= rhs or s_out <= rhs:
        verdict = PASS
    else:
        verdict = INCONCLUSIVE
    meta = {"statistic": "sup |x|^(d-2) (t(x) - zero mode)" if periodic else "sup |x|^(d-2) t(x)", "window": W, "constant": s_out, "half_window_constant": s_in,
            "stability_tolerance": IR_STABILITY, "table": t.provenance}
    return CheckReport("ir_bound", table_digest(t, extra=["ir", W]), s_out, rhs, sig, verdict, meta)


def check_simon_bound(t: TwoPointTable, window: int | None = None) -> CheckReport:
    """inf |x|^(d-1) t(x) over 1 <= |x| <= W must be positive."""
    W = window or t.range
    if W < 1:
        raise RangeError("table has no nonzero displacements")
    pts = _window_points(t, 1, W)
    val, sig = _sigma(t, lambda tt: float(_scaled_stat(tt, pts, t.d - 1).min()))
    verdict = lower_bound_verdict(val, sig, 0.0, _is_exact(t))
    if verdict == PASS and val <= 0:
        verdict = FAIL
    meta = {"statistic": "inf |x|^(d-1) t(x)", "window": W, "constant": val, "table": t.provenance}
    return CheckReport("simon_bound", table_digest(t, extra=["simon", W]), val, 0.0, sig, verdict, meta)


def check_mms(t: TwoPointTable, reach: int | None = None) -> CheckReport:
    """Axis monotonicity and the l1 / sup-norm sandwich.

    Violations are counted beyond 2 sigma; the check passes iff none exceed
    3 sigma (exact tables: none beyond 1e-12).
    """
    R = t.reach if reach is None else reach
    exact = _is_exact(t)
    pairs_hi, pairs_lo = [], []  # require value(hi) >= value(lo)
    d = t.d
    for k in range(R):
        pairs_hi.append(_axis_point(d, k)[0])
        pairs_lo.append(_axis_point(d, k + 1)[0])
    pts = _window_points(t, 1, R)
    for x in pts:
        l1 = int(np.abs(x).sum())
        linf = int(np.abs(x).max())
        if l1 <= R:
            pairs_hi.append(x)
            pairs_lo.append(_axis_point(d, l1)[0])
        pairs_hi.append(_axis_point(d, linf)[0])
        pairs_lo.append(x)
    hi = np.array(pairs_hi).reshape(-1, d)
    lo = np.array(pairs_lo).reshape(-1, d)
    gap = t.values(hi) - t.values(lo)
    sd = np.sqrt(t.variance[t.index(hi)] + t.variance[t.index(lo)])
    if exact:
        over2 = over3 = int(np.sum(gap < -EXACT_TOL))
    else:
        if t.batches is not None:
            bm_hi = t.batches[:, t.index(hi)]
            bm_lo = t.batches[:, t.index(lo)]
            sd = (bm_hi - bm_lo).std(axis=0, ddof=1) / np.sqrt(len(t.batches))
        over2 = int(np.sum(gap < -2 * sd))
        over3 = int(np.sum(gap < -3 * sd))
    verdict = PASS if over3 == 0 else FAIL
    worst = float((gap / np.where(sd > 0, sd, 1.0)).min()) if len(gap) else 0.0
    meta = {"comparisons": len(gap), "violations_2sigma": over2, "violations_3sigma": over3,
            "worst_gap_over_sigma": worst if not exact else float(gap.min()), "reach": R, "table": t.provenance}
    return CheckReport("mms", table_digest(t, extra=["mms", R]), float(over3), 0.0, 0.0, verdict, meta)


# ---------------------------------------------------------------------------
# Simon-Lieb envelope


def envelope_value(phi: float, k: int, M: float) -> float:
    return float(phi ** max(k, 0) * M)


@dataclass
class SimonLiebEnvelope:
    phi: float
    L: int
    M: float
    beta: float

    def steps(self, norm) -> np.ndarray:
        norm = np.asarray(norm, dtype=np.int64)
        return np.maximum(norm // (2 * self.L) - 1, 0)

    def bound(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, np.asarray(pts).shape[-1])
        k = self.steps(np.abs(pts).max(axis=1))
        return self.phi ** k * self.M

    def check(self, t: TwoPointTable, window: int | None = None) -> CheckReport:
        W = window or t.reach
        pts = _window_points(t, 0, W)
        vals = t.values(pts)
        b = self.bound(pts)
        sd = np.sqrt(t.variance[t.index(pts)])
        over = vals - b > 3 * sd + EXACT_TOL
        verdict = PASS if not np.any(over) else FAIL
        margin = float((b - vals).min())
        meta = {"phi": self.phi, "L": self.L, "M": self.M, "beta": self.beta, "window": W,
                "violations": int(over.sum()), "table": t.provenance}
        return CheckReport("simon_lieb_envelope", table_digest(t, extra=[self.phi, self.L, self.M]), margin, 0.0,
                           0.0, verdict, meta)


def simon_lieb_envelope(beta: float, S_radius: int, t_S: TwoPointTable, boundary_max: float) -> SimonLiebEnvelope:
    """Envelope phi^k M, k = floor(|x| / 2L) - 1, from S = Lambda_{S_radius} with phi(S) < 1/2."""
    phi = phi_box(beta, S_radius, t_S)
    if not phi < 0.5:
        raise ValueError(f"phi_beta(Lambda_{S_radius}) = {phi:.4g} is not below 1/2")
    return SimonLiebEnvelope(phi, max(S_radius, 1), float(boundary_max), beta)


# ---------------------------------------------------------------------------
# bubble divergence


def check_bubble_divergence(t, ns, d: int | None = None) -> CheckReport:
    """B_n over dyadic n from one table (or one table per n).

    Pass: strictly increasing with every increment above 3 sigma and dyadic
    increments that do not decay (geometric mean ratio >= 0.75).  A summable
    tail shows up as ``plateau`` in the metadata.
    """
    ns = [int(m) for m in ns]
    tables = t if isinstance(t, (list, tuple)) else [t] * len(ns)
    if len(tables) != len(ns):
        raise ValueError("one table per n expected")
    vals, sig = [], []
    reps_all = []
    for tt, m in zip(tables, ns):
        v, s = _sigma(tt, lambda x, m=m: bubble(x, m))
        vals.append(v)
        sig.append(s)
        reps_all.append([bubble(r, m) for r in tt.replicas()])
    inc = np.diff(vals)
    shared = len({id(x) for x in tables}) == 1 and tables[0].batches is not None
    if shared:
        R = np.array(reps_all)  # (len(ns), B)
        B = R.shape[1]
        dr = np.diff(R, axis=0)
        inc_sig = np.sqrt((B - 1) / B * ((dr - dr.mean(axis=1, keepdims=True)) ** 2).sum(axis=1))
    else:
        inc_sig = np.sqrt(np.array(sig[1:]) ** 2 + np.array(sig[:-1]) ** 2)
    ok_inc = bool(np.all(inc > 3 * inc_sig)) and bool(np.all(inc > 0))
    ratios = inc[1:] / inc[:-1] if len(inc) > 1 else np.array([])
    gm = float(np.exp(np.mean(np.log(ratios)))) if len(ratios) and np.all(ratios > 0) else float("nan")
    divergent = bool(len(ratios) and gm >= DIVERGENCE_RATIO)
    plateau = bool(len(ratios) and np.all(ratios > 0) and gm < DIVERGENCE_RATIO)
    dd = d or tables[0].d
    meta = {"n": ns, "increments": inc.tolist(), "increment_sigma": np.asarray(inc_sig).tolist(),
            "increment_ratio_geomean": gm, "divergent_trend": divergent, "plateau": plateau, "d": dd}
    if dd == 3 and len(ns) >= 2:
        meta["slope_B2_vs_log_n"] = float(np.polyfit(np.log(ns), np.square(vals), 1)[0])
    verdict = PASS if ok_inc and divergent else FAIL
    curve = [{"n": m, "B": v, "sigma": s} for m, v, s in zip(ns, vals, sig)]
    digest = table_digest(*{id(x): x for x in tables}.values(), extra=ns)
    return CheckReport("bubble_divergence", digest, vals[-1], vals[0], sig[-1], verdict, meta, curve)


# ---------------------------------------------------------------------------
# origin membership in S_n


def check_lemma24(estimates, exact: dict | None = None) -> CheckReport:
    """P[0 in S_n] positive with CIs excluding 0, no decay trend, and the union bound
    P[0 notin S_n] <= 2d P[0 notin S_n(+e_1)] within error.  ``exact`` maps n to an
    enumerated probability for cross-checking."""
    est = sorted(estimates, key=lambda e: e.n)
    ns = [e.n for e in est]
    p = np.array([e.probability for e in est])
    s = np.array([e.stderr for e in est])
    q = np.array([e.single_direction for e in est])
    qs = np.array([e.single_stderr for e in est])
    d = est[0].meta.get("d", 2)
    union_gap = 2 * d * (1 - q) - (1 - p)
    union_sig = np.sqrt((2 * d * qs) ** 2 + s**2)
    union_ok = bool(np.all(union_gap > -3 * union_sig))
    pos_ok = bool(np.all(p - 3 * s > 0))
    meta = {"n": ns, "d": d, "union_bound_ok": union_ok, "positive": pos_ok}
    trend_ok = True
    if len(ns) >= MIN_SCALES:
        slope = loglog_slope(ns, p)
        meta["slope"] = slope
        trend_ok = slope >= SLOPE_FLOOR
    else:
        meta["slope"] = None
    exact_ok = True
    if exact:
        dev = {}
        for e in est:
            if e.n in exact:
                z = (e.probability - exact[e.n]) / e.stderr if e.stderr > 0 else 0.0
                dev[e.n] = z
                exact_ok &= abs(z) <= 3
        meta["exact_z"] = dev
    verdict = PASS if (union_ok and pos_ok and trend_ok and exact_ok) else FAIL
    curve = [{"n": e.n, "p": e.probability, "sigma": e.stderr, "p_single": e.single_direction,
              "sigma_single": e.single_stderr} for e in est]
    digest = hashlib.sha256(json.dumps(_clean(curve), sort_keys=True).encode()).hexdigest()[:16]
    k = int(np.argmin(p))
    return CheckReport("lemma24", digest, float(p[k]), 0.0, float(s[k]), verdict, meta, curve)


# ---------------------------------------------------------------------------
# output


SUMMARY_HEADER = ["check_id", "beta", "n", "lhs", "rhs", "sigma", "verdict"]


def summary_rows(reports) -> list[list]:
    rows = []
    for r in reports:
        beta = r.metadata.get("beta", "")
        n = r.metadata.get("n", "")
        if isinstance(n, list):
            n = " ".join(str(v) for v in n)
        rows.append([r.check_id, "" if beta is None else beta, n, repr(float(r.lhs)), repr(float(r.rhs)),
                     repr(float(r.sigma)), r.verdict])
    return rows


def summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    w.writerows(summary_rows(reports))
    return buf.getvalue()
