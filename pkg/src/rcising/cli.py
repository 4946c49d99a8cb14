"""Command line entry point.

Verbs::

    rcising run <config> [--workers N] [--output-root DIR]
    rcising verify <artifact-dir>
    rcising plot <artifact-dir> <spec>
    rcising oracle <fixture> [--beta B ...]

Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 runtime error.
The output root may also be set with the RCISING_OUTPUT_ROOT environment variable.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_BETAS = (0.05, 0.2, 0.4, 0.8)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rcising", description="Random current Ising toolkit")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--output-root", default=None)
    v = sub.add_parser("verify", help="check manifest hashes and re-derive reports")
    v.add_argument("artifact_dir")
    pl = sub.add_parser("plot", help="emit plot-ready CSVs")
    pl.add_argument("artifact_dir")
    pl.add_argument("spec", help="two-point | theorem11 | bubble | phi-curve | exponent | all | spec file")
    o = sub.add_parser("oracle", help="run the exact engines on a fixture")
    o.add_argument("fixture", help="shipped fixture name, or a fixture file")
    o.add_argument("--beta", type=float, action="append", default=None)
    return p


# ---------------------------------------------------------------------------
# oracle verb


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def plain_oracle(g) -> dict:
    """Spin-sum correlations against parity-sum ratios for every vertex pair."""
    from .exact import ParitySum, SpinSumOracle

    spins = SpinSumOracle(g)
    par = ParitySum(g)
    z0 = par.Z(())
    worst = 0.0
    comp = g.components()
    pairs = []
    for u in range(g.num_vertices):
        for v in range(u + 1, g.num_vertices):
            s = spins.two_point(u, v)
            p = par.Z([u, v]) / z0 if comp[u] == comp[v] else 0.0
            worst = max(worst, _rel(s, p)) if s or p else worst
            pairs.append({"u": u, "v": v, "spin_sum": s, "parity_ratio": p})
    return {"pairs": pairs, "max_rel_dev": worst, "ok": worst <= 1e-12}


def switching_oracle(g, plane) -> dict:
    from .exact import verify_lemma25, verify_reflected_switching

    side = g.vertex_sides(plane)
    left = [int(v) for v in np.flatnonzero(side < 0)]
    rows, ok = [], True
    choices = [[]] + [[a, b] for a in left for b in left if a < b][:3]
    for x in left:
        for A in choices:
            r = verify_reflected_switching(g, plane, None, A, x)
            ok &= r.ok
            rows.append({"x": x, "A": A, "lhs": r.lhs, "rhs": r.rhs, "ok": r.ok})
    out = {"lemma_reflected_switching": rows, "ok": ok}
    if plane.axis == 0 and plane.sign == 1 and g.find_vertex(np.zeros(g.dim, dtype=np.int64)) >= 0:
        L = verify_lemma25(g, plane)
        out["lemma_origin_inequality"] = {"lhs": L.lhs, "rhs": L.rhs, "ok": L.ok}
        out["ok"] = ok and L.ok
    return out


def block_oracle(fx, beta: float) -> dict:
    from .gsblock import model_from_fixture, verify_block_switching, verify_lemma36

    m = model_from_fixture(fx, beta)
    out: dict = {"flat_vertices": m.flat.num_vertices, "flat_edges": m.flat.num_edges}
    ok = True
    if fx.plane is not None:
        side = m.base.vertex_sides(fx.plane)
        rows = []
        for x in np.flatnonzero(side < 0):
            r = verify_block_switching(m, fx.plane, int(x))
            ok &= bool(r)
            rows.append({"x": int(x), "equality": [r.equality_lhs, r.equality_rhs, r.equality_ok],
                         "bound": [r.bound_lhs, r.bound_rhs, r.bound_ok], "slack": r.slack})
        out["block_switching"] = rows
        L = verify_lemma36(m, fx.plane)
        out["block_origin_inequality"] = {"lhs": L.lhs, "rhs": L.rhs, "ok": L.ok, "details": L.details}
        ok &= L.ok
    out["ok"] = ok
    return out


def fixture_oracle(fx, betas=None) -> dict:
    """All exact-engine results for one fixture, per beta (or the stored couplings)."""
    runs = []
    if betas is None:
        betas = [None] if (fx.couplings is not None and not fx.is_block) else list(DEFAULT_BETAS)
    ok = True
    for b in betas:
        if fx.is_block:
            res = block_oracle(fx, b)
        else:
            g = fx.graph(b)
            res = {"correlations": plain_oracle(g)}
            res["ok"] = res["correlations"]["ok"]
            if fx.plane is not None:
                res["switching"] = switching_oracle(g, fx.plane)
                res["ok"] = res["ok"] and res["switching"]["ok"]
        res["beta"] = b
        ok &= res["ok"]
        runs.append(res)
    return {"fixture": fx.name, "runs": runs, "ok": ok}


def _load_fixtures(ref: str):
    from .fixtures import load, shipped_by_name

    p = Path(ref)
    if p.exists():
        return load(p)
    return [shipped_by_name(ref)]


# ---------------------------------------------------------------------------


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    return str(o)


def _dump(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    from .config import ConfigError
    from .fixtures import FixtureError
    from .plots import PlotError

    try:
        if args.verb == "run":
            from .runner import run

            if args.workers < 1:
                print("rcising: error: --workers must be >= 1", file=sys.stderr)
                return EXIT_USAGE
            res = run(args.config, output_root=args.output_root, workers=args.workers)
            print(res.path)
            for r in res.reports:
                print(f"{r.metadata.get('label', '')}\t{r.check_id}\t{r.verdict}")
            return EXIT_FAIL if res.failed else EXIT_OK
        if args.verb == "verify":
            from .runner import verify_artifacts

            vr = verify_artifacts(args.artifact_dir)
            _dump(vr.to_dict())
            return EXIT_OK if vr.intact and not vr.failed_checks else EXIT_FAIL
        if args.verb == "plot":
            from .plots import emit_plot_data

            for p in emit_plot_data(args.artifact_dir, args.spec):
                print(p)
            return EXIT_OK
        if args.verb == "oracle":
            results = [fixture_oracle(fx, args.beta) for fx in _load_fixtures(args.fixture)]
            _dump(results)
            return EXIT_OK if all(r["ok"] for r in results) else EXIT_FAIL
    except ConfigError as exc:
        for path, msg in exc.problems:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (FixtureError, PlotError) as exc:
        print(f"rcising: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"rcising: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
