"""Experiment runner: samplers -> tables -> observables -> checks -> artifacts.

Artifact layout below ``<root>/<output or name>/``::

    config.json                 canonical copy of the validated config
    tables/<label>.{csv,json,batches.npy}
    observables/<label>.json
    reports/<label>/<check>.json
    checkpoints/<label>-chain<c>.rclb
    summary.csv
    manifest.json               config hash, code revision, sha256 of every file

``<label>`` is ``beta0``, ``beta1``, ... in config order (plus ``beta_c-`` and
``beta_c+`` for sensitivity companions).  Nothing in the artifacts depends on
wall-clock time, absolute paths or the number of workers.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .fixtures import Fixture, load as load_fixtures, shipped_by_name
from .gsblock import build_gs_model, model_from_fixture
from .lattice import Box, Torus
from .observables import (
    BoxTableProvider,
    TableError,
    TwoPointTable,
    bubble,
    correlation_length_fit,
    fit_effective_exponent,
    jackknife,
    sharp_length_box,
    susceptibility,
    table_from_chain,
    xi_p,
)
from .rng import derive_seed
from .samplers import (
    SamplerConfig,
    estimate_S_n_probability,
    merge_outputs,
    run_ising_chain,
    run_phi4_chain,
)
from .verify import (
    FAIL,
    INCONCLUSIVE,
    CheckReport,
    _clean,
    check_bubble_divergence,
    check_ir_bound,
    check_lemma24,
    check_mms,
    check_simon_bound,
    check_theorem11,
    check_theorem12,
    summary_csv,
)

OUTPUT_ROOT_ENV = "RCISING_OUTPUT_ROOT"
DEFAULT_ROOT = "artifacts"
MANIFEST = "manifest.json"
MANIFEST_SCHEMA = 1
# checks that only read the stored table (re-derivable by `verify`)
TABLE_CHECKS = ("theorem11", "theorem12", "mms", "ir", "simon", "bubble_divergence")


class RunError(RuntimeError):
    pass


def output_dir(cfg: ExperimentConfig, output_root=None) -> Path:
    root = output_root or os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_ROOT
    return Path(root) / (cfg.output or cfg.name)


def code_revision() -> dict:
    """Package version plus a digest of the package sources."""
    pkg = Path(__file__).resolve().parent
    h = hashlib.sha256()
    for p in sorted(pkg.rglob("*")):
        if p.suffix in (".py", ".txt", ".toml") and "__pycache__" not in p.parts:
            h.update(p.relative_to(pkg).as_posix().encode() + b"\x00")
            h.update(p.read_bytes())
    return {"version": __version__, "source_sha256": h.hexdigest()}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# geometry


def _fixture(ref: str) -> Fixture:
    p = Path(ref)
    if p.suffix and p.exists():
        fxs = load_fixtures(p)
        if len(fxs) != 1:
            raise RunError(f"fixture file {ref} must hold exactly one record")
        return fxs[0]
    return shipped_by_name(ref)


@dataclass
class Geometry:
    """What the sampler runs on and where the two-point table lives."""

    sample: object
    measure: object
    block_q: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def block(self):
        return None if self.block_q is None else (self.measure, self.block_q)


def build_geometry(cfg: ExperimentConfig, beta: float) -> Geometry:
    if cfg.boundary == "periodic":
        base = Torus(cfg.d, cfg.L)
        meta = {"boundary": "periodic", "d": cfg.d, "L": cfg.L}
    elif cfg.boundary == "free":
        base = Box(cfg.d, cfg.radius)
        meta = {"boundary": "free", "d": cfg.d, "radius": cfg.radius}
    else:
        fx = _fixture(cfg.fixture)
        meta = {"boundary": "graph", "fixture": fx.name}
        if cfg.model == "gs-block" and cfg.block is None:
            model = model_from_fixture(fx, beta)
            return Geometry(model.flat, model.base, model.Q, meta | {"N": model.N})
        if fx.is_block:
            raise RunError(f"fixture {fx.name} is a block model; use model = 'gs-block'")
        base = fx.graph(beta) if fx.couplings is None else fx.graph()
    if cfg.model == "gs-block":
        b = cfg.block
        model = build_gs_model(base, b.N, np.array(b.J), np.array(b.Q), beta)
        return Geometry(model.flat, base, model.Q, meta | {"N": b.N})
    return Geometry(base, base, None, meta)


# ---------------------------------------------------------------------------
# chains


def sampler_config(cfg: ExperimentConfig, beta: float, chain_id: int) -> SamplerConfig:
    s = cfg.sampler
    return SamplerConfig(
        algorithm=s.algorithm, beta=beta, seed=derive_seed(s.seed, "beta", repr(float(beta))), g=s.g, a=s.a,
        thermalization=s.thermalization, sweeps=s.sweeps, stride=s.stride, chain_id=chain_id,
        batches=s.batches, segment=s.segment, width=s.width,
    )


def _chain_job(job):
    cfg, beta, chain_id, ckpt, stop_after = job
    geo = build_geometry(cfg, beta)
    scfg = sampler_config(cfg, beta, chain_id)
    if cfg.model == "phi4":
        return run_phi4_chain(scfg, geo.sample, ckpt, stop_after)
    return run_ising_chain(scfg, geo.sample, ckpt, stop_after, block=geo.block)


def _run_chains(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_chain_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chain_job, jobs))


# ---------------------------------------------------------------------------
# observables and checks


def _guarded(fn):
    try:
        return fn()
    except (TableError, ValueError) as exc:
        return {"error": str(exc)}


def compute_observables(cfg: ExperimentConfig, beta: float, t: TwoPointTable) -> dict:
    ob = cfg.observables
    out: dict = {"beta": beta}
    names = set(ob.names)
    ns = [n for n in ob.n]
    if "susceptibility" in names:
        out["susceptibility"] = {str(n): _guarded(lambda n=n: list(jackknife(t, lambda x: susceptibility(x, n))))
                                 for n in ns}
    if "bubble" in names:
        out["bubble"] = {str(n): _guarded(lambda n=n: list(jackknife(t, lambda x: bubble(x, n)))) for n in ns}
    if "xi_p" in names:
        out["xi_p"] = {str(n): _guarded(lambda n=n: list(jackknife(t, lambda x: xi_p(x, ob.p, n)))) for n in ns}
    if "xi" in names:
        out["xi"] = _guarded(lambda: vars(correlation_length_fit(t)))
    if "eta" in names:
        out["eta"] = _guarded(lambda: vars(fit_effective_exponent(t, ob.window)))
    if "two_point" in names:
        out["two_point_axis"] = _guarded(lambda: t.axis(t.reach).tolist())
    if "sharp_length" in names:
        if cfg.model != "ising" or cfg.d is None:
            out["sharp_length"] = {"error": "sharp length needs an Ising lattice config with d"}
        else:
            s = cfg.sampler
            mc = SamplerConfig("cluster-flip", beta, seed=derive_seed(s.seed, "sharp", repr(float(beta))),
                               thermalization=s.thermalization, sweeps=s.sweeps, stride=s.stride,
                               batches=s.batches, segment=s.segment)
            provider = BoxTableProvider(cfg.d, beta, mc)
            out["sharp_length"] = {str(th): sharp_length_box(beta, th, ob.k_max, cfg.d, provider).to_dict()
                                   for th in (0.5, 0.25)}
    return _clean(out)


def _error_report(check_id: str, exc: Exception) -> CheckReport:
    return CheckReport(check_id, "", float("nan"), float("nan"), float("nan"), INCONCLUSIVE,
                       {"error": f"{type(exc).__name__}: {exc}"})


def table_check(cfg: ExperimentConfig, name: str, beta: float, t: TwoPointTable) -> CheckReport:
    ck = cfg.checks
    try:
        if name == "theorem11":
            return check_theorem11(t, beta, ck.n, ck.c0, ck.allow_wrap)
        if name == "theorem12":
            return check_theorem12(t, beta, ck.n)
        if name == "mms":
            return check_mms(t)
        if name == "ir":
            return check_ir_bound(t, ck.window)
        if name == "simon":
            return check_simon_bound(t, ck.window)
        if name == "bubble_divergence":
            return check_bubble_divergence(t, ck.n, t.d)
    except (TableError, ValueError) as exc:
        return _error_report(name, exc)
    raise RunError(f"{name} is not a table check")


def lemma24_check(cfg: ExperimentConfig, beta: float) -> CheckReport:
    if cfg.model != "ising" or cfg.d is None or not cfg.checks.n:
        return _error_report("lemma24", ValueError("lemma24 needs an Ising lattice config with d and checks.n"))
    s = cfg.sampler
    est = []
    for n in cfg.checks.n:
        scfg = SamplerConfig("current-trace", beta, seed=derive_seed(s.seed, "lemma24", repr(float(beta)), n),
                             thermalization=s.thermalization, sweeps=cfg.checks.lemma24_samples,
                             batches=s.batches, segment=s.segment)
        est.append(estimate_S_n_probability(scfg, Box(cfg.d, 4 * n), n))
    return check_lemma24(est)


def _annotate(r: CheckReport, label: str, beta: float, cfg: ExperimentConfig) -> CheckReport:
    r.metadata.setdefault("beta", beta)
    r.metadata["label"] = label
    if cfg.beta_c is not None:
        r.metadata["beta_c_config"] = cfg.beta_c
    return r


# ---------------------------------------------------------------------------
# run


@dataclass
class RunResult:
    path: Path
    reports: list
    tables: dict

    @property
    def failed(self) -> bool:
        return any(r.verdict == FAIL for r in self.reports)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def write_manifest(out: Path, cfg: ExperimentConfig) -> dict:
    files = {}  # plots/ is derived later by `plot` and stays out of the manifest
    for p in sorted(out.rglob("*")):
        rel = p.relative_to(out).as_posix()
        if p.is_file() and p.name != MANIFEST and not p.name.endswith(".tmp") and not rel.startswith("plots/"):
            files[rel] = sha256_file(p)
    man = {"schema": MANIFEST_SCHEMA, "config_sha256": cfg.digest(), "code_revision": code_revision(),
           "files": files}
    _write_json(out / MANIFEST, man)
    return man


def run(config, output_root=None, workers: int = 1, stop_after: int | None = None) -> RunResult:
    """Execute a config; ``stop_after`` interrupts every chain after that many
    segments (checkpoints stay on disk and a later call resumes)."""
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    out = output_dir(cfg, output_root)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.model_dump(mode="json"))
    grid = cfg.beta_grid()
    jobs = []
    for label, beta in grid:
        for c in range(cfg.sampler.chains):
            jobs.append((cfg, beta, c, out / "checkpoints" / f"{label}-chain{c}.rclb", stop_after))
    outputs = _run_chains(jobs, workers)
    per = cfg.sampler.chains
    reports, tables = [], {}
    for i, (label, beta) in enumerate(grid):
        merged = merge_outputs(outputs[i * per : (i + 1) * per])
        geo = build_geometry(cfg, beta)
        prov = {"run": cfg.name, "label": label, "model": cfg.model} | geo.meta
        t = table_from_chain(merged, geo.measure, provenance=prov)
        t.write(out / "tables" / label)
        tables[label] = t
        obs = compute_observables(cfg, beta, t)
        obs["diagnostics"] = merged.diagnostics
        obs["scalars"] = {k: list(merged.scalar(k)) for k in sorted(merged.scalar_sums)}
        _write_json(out / "observables" / f"{label}.json", obs)
        for name in cfg.checks.names:
            r = lemma24_check(cfg, beta) if name == "lemma24" else table_check(cfg, name, beta, t)
            r = _annotate(r, label, beta, cfg)
            (out / "reports" / label).mkdir(parents=True, exist_ok=True)
            (out / "reports" / label / f"{name}.json").write_text(r.to_json())
            reports.append(r)
    (out / "summary.csv").write_text(summary_csv(reports))
    write_manifest(out, cfg)
    return RunResult(out, reports, tables)


# ---------------------------------------------------------------------------
# verification of an artifact directory


@dataclass
class VerifyResult:
    missing: list = field(default_factory=list)
    changed: list = field(default_factory=list)
    unlisted: list = field(default_factory=list)
    report_mismatch: list = field(default_factory=list)
    failed_checks: list = field(default_factory=list)

    @property
    def intact(self) -> bool:
        return not (self.missing or self.changed or self.unlisted or self.report_mismatch)

    def to_dict(self) -> dict:
        return {"missing": self.missing, "changed": self.changed, "unlisted": self.unlisted,
                "report_mismatch": self.report_mismatch, "failed_checks": self.failed_checks,
                "intact": self.intact}


def verify_artifacts(path) -> VerifyResult:
    """Recompute every manifest hash and re-derive table-only reports from the stored tables."""
    out = Path(path)
    mpath = out / MANIFEST
    if not mpath.is_file():
        raise RunError(f"{mpath} not found")
    man = json.loads(mpath.read_text())
    res = VerifyResult()
    listed = man.get("files", {})
    for rel, digest in sorted(listed.items()):
        p = out / rel
        if not p.is_file():
            res.missing.append(rel)
        elif sha256_file(p) != digest:
            res.changed.append(rel)
    for p in sorted(out.rglob("*")):
        rel = p.relative_to(out).as_posix()
        if p.is_file() and p.name != MANIFEST and rel not in listed and not rel.startswith("plots/"):
            res.unlisted.append(rel)
    from .config import parse_config

    cfg = parse_config(json.loads((out / "config.json").read_text()))
    if cfg.digest() != man.get("config_sha256"):
        res.changed.append("config.json (config hash)")
    for label, beta in cfg.beta_grid():
        stem = out / "tables" / label
        if not stem.with_suffix(".csv").is_file():
            continue
        t = TwoPointTable.read(stem)
        for name in cfg.checks.names:
            rp = out / "reports" / label / f"{name}.json"
            if not rp.is_file():
                continue
            stored = json.loads(rp.read_text())
            if stored.get("verdict") == FAIL:
                res.failed_checks.append(f"{label}/{name}")
            if name not in TABLE_CHECKS:
                continue
            again = _annotate(table_check(cfg, name, beta, t), label, beta, cfg).to_json()
            if again != rp.read_text():
                res.report_mismatch.append(f"{label}/{name}")
    return res
