"""Plot-ready long-format CSVs (``series,x,y,yerr``) from an artifact directory.

Plot kinds and their inputs:

==============  ==========================================  =====================
kind            rows                                        reads
==============  ==========================================  =====================
two-point       k, t(k e_1), one series per table           tables/*.csv
theorem11       n, LHS(n), one series per beta label        reports/*/theorem11.json
bubble          n, B_n                                      reports/*/bubble_divergence.json
                                                            or observables/*.json
phi-curve       k, phi_beta(Lambda_k), per threshold        observables/*.json (sharp_length)
exponent        k, local slope -dlog t/dlog k, plus the     tables/*.csv, observables/*.json
                fitted d-2+eta as a flat series
==============  ==========================================  =====================
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .observables import TwoPointTable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("two-point", "theorem11", "bubble", "phi-curve", "exponent")
HEADER = ["series", "x", "y", "yerr"]


class PlotError(ValueError):
    pass


def _tables(art: Path):
    stems = sorted(p.with_suffix("") for p in (art / "tables").glob("*.csv"))
    if not stems:
        raise PlotError(f"missing inputs: {art / 'tables'}/*.csv (+ .json sidecars)")
    return [(s.name, TwoPointTable.read(s)) for s in stems]


def _reports(art: Path, check: str):
    paths = sorted((art / "reports").glob(f"*/{check}.json"))
    return [(p.parent.name, json.loads(p.read_text())) for p in paths]


def _observables(art: Path):
    paths = sorted((art / "observables").glob("*.json"))
    return [(p.stem, json.loads(p.read_text())) for p in paths]


def _num(v) -> float:
    return float(v) if not isinstance(v, str) else float(v)


def two_point_rows(art: Path):
    rows = []
    for label, t in _tables(art):
        kmax = t.reach
        for k in range(kmax + 1):
            x = np.zeros(t.d, dtype=np.int64)
            x[0] = k
            rows.append([label, k, t.value(x), math.sqrt(t.var(x))])
    return rows


def theorem11_rows(art: Path):
    reps = _reports(art, "theorem11")
    if not reps:
        raise PlotError(f"missing inputs: {art / 'reports'}/<label>/theorem11.json")
    rows = []
    for label, r in reps:
        for pt in r["curve"]:
            rows.append([label, pt["n"], _num(pt["lhs"]), _num(pt["sigma"])])
    return rows


def bubble_rows(art: Path):
    rows = []
    for label, r in _reports(art, "bubble_divergence"):
        for pt in r["curve"]:
            rows.append([label, pt["n"], _num(pt["B"]), _num(pt["sigma"])])
    if rows:
        return rows
    for label, obs in _observables(art):
        for n, val in sorted(obs.get("bubble", {}).items(), key=lambda kv: int(kv[0])):
            if isinstance(val, list):
                rows.append([label, int(n), _num(val[0]), _num(val[1])])
    if not rows:
        raise PlotError(f"missing inputs: {art / 'reports'}/<label>/bubble_divergence.json or "
                        f"{art / 'observables'}/<label>.json with a 'bubble' entry")
    return rows


def phi_curve_rows(art: Path):
    rows = []
    for label, obs in _observables(art):
        sl = obs.get("sharp_length")
        if not isinstance(sl, dict) or "error" in sl:
            continue
        for th, est in sorted(sl.items()):
            for k, (v, e) in sorted(est["curve"].items(), key=lambda kv: int(kv[0])):
                rows.append([f"{label}:threshold={th}", int(k), _num(v), _num(e)])
    if not rows:
        raise PlotError(f"missing inputs: {art / 'observables'}/<label>.json with a 'sharp_length' entry")
    return rows


def exponent_rows(art: Path):
    rows = []
    fits = {label: obs.get("eta") for label, obs in _observables(art)}
    for label, t in _tables(art):
        kmax = t.reach
        y = t.axis(kmax)
        for k in range(1, kmax):
            if y[k] > 0 and y[k + 1] > 0:
                rows.append([f"{label}:local", k + 0.5, -math.log(y[k + 1] / y[k]) / math.log((k + 1) / k), ""])
        fit = fits.get(label)
        if isinstance(fit, dict) and "exponent" in fit:
            lo, hi = fit["window"]
            for k in (lo, hi):
                rows.append([f"{label}:fit", k, _num(fit["exponent"]), _num(fit["stderr"])])
    if not rows:
        raise PlotError(f"missing inputs: {art / 'tables'}/*.csv with positive axis values")
    return rows


_BUILDERS = {
    "two-point": two_point_rows,
    "theorem11": theorem11_rows,
    "bubble": bubble_rows,
    "phi-curve": phi_curve_rows,
    "exponent": exponent_rows,
}


def _kinds(spec) -> list[str]:
    if isinstance(spec, (list, tuple)):
        kinds = list(spec)
    elif spec == "all":
        kinds = list(KINDS)
    elif spec in KINDS:
        kinds = [spec]
    else:
        p = Path(spec)
        if not p.is_file():
            raise PlotError(f"unknown plot spec {spec!r}; expected one of {list(KINDS)}, 'all' or a spec file")
        data = json.loads(p.read_text()) if p.suffix == ".json" else tomllib.loads(p.read_text())
        kinds = list(data.get("plots", []))
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise PlotError(f"unknown plot kind(s) {bad}; expected {list(KINDS)}")
    return kinds


def format_rows(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for s, x, y, e in rows:
        w.writerow([s, x, repr(float(y)), "" if e == "" else repr(float(e))])
    return buf.getvalue()


def emit_plot_data(artifact_dir, spec="all") -> list[Path]:
    """Write ``plots/<kind>.csv`` for each requested kind; returns the paths."""
    art = Path(artifact_dir)
    if not art.is_dir():
        raise PlotError(f"artifact directory {art} does not exist")
    out = []
    for kind in _kinds(spec):
        rows = _BUILDERS[kind](art)
        p = art / "plots" / f"{kind}.csv"
        p.parent.mkdir(exist_ok=True)
        p.write_text(format_rows(rows))
        out.append(p)
    return out
