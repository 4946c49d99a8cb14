"""Experiment configuration: schema, loading and validation.

Configs are TOML (or JSON with the same structure)::

    name = "smoke-edge"
    model = "ising"                # ising | phi4 | gs-block
    boundary = "graph"             # periodic | free | graph
    fixture = "edge"               # shipped fixture name or path (boundary = "graph")
    # d = 2; L = 16                # periodic: dimension and side
    # d = 2; radius = 8            # free: dimension and box radius
    beta = 0.3                     # or betas = [...]
    # beta_c = 0.4406868           # literature/exact input, never derived
    # sensitivity = true           # add beta_c +- 0.001 companion runs
    # output = "smoke"             # directory below the output root

    [sampler]
    algorithm = "cluster-flip"     # cluster-flip | single-site | phi4-site
    seed = 1234                    # required
    thermalization = 1000
    sweeps = 10000
    stride = 1
    chains = 1
    batches = 20
    segment = 64
    # g = 1.0; a = -1.0            # phi4 only

    [block]                        # gs-block only
    N = 3
    J = [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]]
    Q = [1, 1, 1]

    [observables]
    names = ["susceptibility", "bubble"]
    n = [1, 2]

    [checks]
    names = ["mms", "ir"]
    n = [4, 6, 8, 12]

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OBSERVABLES = ("two_point", "susceptibility", "bubble", "xi", "xi_p", "eta", "sharp_length")
CHECKS = ("theorem11", "theorem12", "mms", "ir", "simon", "bubble_divergence", "lemma24")
SENSITIVITY_SHIFT = 0.001


class ConfigError(ValueError):
    """Invalid config; ``problems`` lists (key path, message) pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SamplerBlock(_Strict):
    algorithm: Literal["cluster-flip", "single-site", "phi4-site"] = "cluster-flip"
    seed: int = Field(ge=0, lt=2**64)
    thermalization: int = Field(1000, ge=0)
    sweeps: int = Field(10000, gt=0)
    stride: int = Field(1, ge=1)
    chains: int = Field(1, ge=1)
    batches: int = Field(20, ge=2)
    segment: int = Field(64, ge=1)
    g: Optional[float] = None
    a: Optional[float] = None
    width: float = Field(1.0, gt=0)


class BlockSpec(_Strict):
    N: int = Field(ge=1)
    J: list[list[float]]
    Q: list[float]

    @model_validator(mode="after")
    def _shapes(self):
        if len(self.Q) != self.N or len(self.J) != self.N or any(len(r) != self.N for r in self.J):
            raise ValueError("J must be N x N and Q of length N")
        return self


class ObservableBlock(_Strict):
    names: list[str] = Field(default_factory=lambda: ["two_point"])
    n: list[int] = Field(default_factory=list)
    p: float = Field(2.0, gt=0)
    window: Optional[tuple[int, int]] = None
    k_max: int = Field(4, ge=1)

    @field_validator("names")
    @classmethod
    def _known(cls, v):
        bad = [x for x in v if x not in OBSERVABLES]
        if bad:
            raise ValueError(f"unknown observable(s) {bad}; expected {list(OBSERVABLES)}")
        return v


class CheckBlock(_Strict):
    names: list[str] = Field(default_factory=list)
    n: list[int] = Field(default_factory=list)
    c0: float = 0.0
    allow_wrap: bool = False
    window: Optional[int] = None
    lemma24_samples: int = Field(20000, gt=0)

    @field_validator("names")
    @classmethod
    def _known(cls, v):
        bad = [x for x in v if x not in CHECKS]
        if bad:
            raise ValueError(f"unknown check(s) {bad}; expected {list(CHECKS)}")
        return v


class ExperimentConfig(_Strict):
    name: str = Field(min_length=1)
    model: Literal["ising", "phi4", "gs-block"] = "ising"
    boundary: Literal["periodic", "free", "graph"]
    d: Optional[int] = Field(None, ge=2, le=5)
    L: Optional[int] = Field(None, ge=3)
    radius: Optional[int] = Field(None, ge=0)
    fixture: Optional[str] = None
    beta: Optional[float] = None
    betas: Optional[list[float]] = None
    beta_c: Optional[float] = None
    sensitivity: bool = False
    output: Optional[str] = None
    sampler: SamplerBlock
    block: Optional[BlockSpec] = None
    observables: ObservableBlock = Field(default_factory=ObservableBlock)
    checks: CheckBlock = Field(default_factory=CheckBlock)

    @model_validator(mode="after")
    def _consistent(self):
        if (self.beta is None) == (self.betas is None):
            raise ValueError("give exactly one of 'beta' and 'betas'")
        for b in self.beta_grid_raw:
            if not (math.isfinite(b) and b >= 0):
                raise ValueError("beta values must be finite and >= 0")
        if self.boundary == "periodic" and (self.d is None or self.L is None):
            raise ValueError("boundary 'periodic' needs 'd' and 'L'")
        if self.boundary == "free" and (self.d is None or self.radius is None):
            raise ValueError("boundary 'free' needs 'd' and 'radius'")
        if self.boundary == "graph" and self.fixture is None:
            raise ValueError("boundary 'graph' needs 'fixture'")
        if self.model == "phi4":
            s = self.sampler
            if s.algorithm != "phi4-site" or s.g is None or s.a is None:
                raise ValueError("model 'phi4' needs sampler.algorithm = 'phi4-site' with g and a")
        elif self.sampler.algorithm == "phi4-site":
            raise ValueError(f"model '{self.model}' cannot use the phi4-site algorithm")
        if self.model == "gs-block" and self.block is None and self.boundary != "graph":
            raise ValueError("model 'gs-block' needs a [block] table (or a block fixture)")
        return self

    @property
    def beta_grid_raw(self) -> list[float]:
        return [self.beta] if self.betas is None else list(self.betas)

    def beta_grid(self) -> list[tuple[str, float]]:
        """(label, beta) pairs, including beta_c +- 0.001 companions when requested."""
        out = [(f"beta{i}", float(b)) for i, b in enumerate(self.beta_grid_raw)]
        if self.sensitivity and self.beta_c is not None:
            if any(b == self.beta_c for _, b in out):
                out.append(("beta_c-", self.beta_c - SENSITIVITY_SHIFT))
                out.append(("beta_c+", self.beta_c + SENSITIVITY_SHIFT))
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _problems(err: ValidationError):
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        msg = e["msg"]
        if e["type"] == "extra_forbidden":
            msg = f"unknown key '{e['loc'][-1]}'"
        yield path, msg


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(list(_problems(err))) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError([(str(path), f"cannot read config: {exc.strerror}")]) from None
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            data = tomllib.loads(raw.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError([(str(path), f"parse error: {exc}")]) from None
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "config must be a table/object")])
    return parse_config(data)
