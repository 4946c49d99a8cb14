"""Line-oriented fixture files for small graphs and block models.

Grammar (one record per non-blank line, ``#`` starts a comment)::

    record   := token (WS token)*
    token    := key "=" value
    name     := identifier                       (required, unique)
    coords   := point (";" point)*               point := int ("," int)*
    vertices := int                              (required when coords is absent)
    edges    := pair (";" pair)*                 pair  := int "-" int  (0-based)
    couplings:= float (";" float)*               (one per edge; optional)
    beta     := float                            (uniform coupling; optional)
    plane    := axis "," sign "," level          (0-based axis, sign +1/-1)
    N        := int                              (block size; block records only)
    J        := row (";" row)*                   row := float ("," float)*  (N x N)
    Q        := float (";" float)*               (length N)

A record with ``N`` describes a block model whose base graph is given by
``coords``/``edges``; the flat graph is built by :mod:`rcising.gsblock` once a
beta is supplied.  Couplings may be left out and supplied at run time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .graph import SmallGraph
from .lattice import Hyperplane


class FixtureError(ValueError):
    pass


@dataclass
class Fixture:
    name: str
    num_vertices: int
    edges: np.ndarray
    coords: np.ndarray | None = None
    couplings: np.ndarray | None = None
    plane: Hyperplane | None = None
    block_size: int | None = None
    J: np.ndarray | None = None
    Q: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def is_block(self) -> bool:
        return self.block_size is not None

    def graph(self, beta: float | None = None) -> SmallGraph:
        """The plain graph with uniform ``beta`` (or the stored couplings)."""
        if beta is not None:
            c = np.full(len(self.edges), float(beta))
        elif self.couplings is not None:
            c = self.couplings
        else:
            raise FixtureError(f"fixture {self.name} has no couplings; pass beta")
        return SmallGraph(self.num_vertices, self.edges, c, coords=self.coords, name=self.name)


def _floats(s: str) -> list[float]:
    return [float(t) for t in s.split(";") if t]


def parse_line(line: str, lineno: int = 0) -> Fixture | None:
    body = line.split("#", 1)[0].strip()
    if not body:
        return None
    kv = {}
    for tok in body.split():
        if "=" not in tok:
            raise FixtureError(f"line {lineno}: token {tok!r} is not key=value")
        k, v = tok.split("=", 1)
        if k in kv:
            raise FixtureError(f"line {lineno}: duplicate key {k!r}")
        kv[k] = v
    known = {"name", "coords", "vertices", "edges", "couplings", "beta", "plane", "N", "J", "Q"}
    unknown = set(kv) - known
    if unknown:
        raise FixtureError(f"line {lineno}: unknown keys {sorted(unknown)}")
    if "name" not in kv:
        raise FixtureError(f"line {lineno}: missing name")
    try:
        coords = None
        if "coords" in kv:
            coords = np.array([[int(c) for c in p.split(",")] for p in kv["coords"].split(";")], dtype=np.int64)
            V = len(coords)
            if "vertices" in kv and int(kv["vertices"]) != V:
                raise FixtureError(f"line {lineno}: vertices disagrees with coords")
        elif "vertices" in kv:
            V = int(kv["vertices"])
        else:
            raise FixtureError(f"line {lineno}: need coords or vertices")
        edges = np.array(
            [[int(a) for a in p.split("-")] for p in kv.get("edges", "").split(";") if p], dtype=np.int64
        ).reshape(-1, 2)
        couplings = None
        if "couplings" in kv:
            couplings = np.array(_floats(kv["couplings"]))
            if len(couplings) != len(edges):
                raise FixtureError(f"line {lineno}: {len(couplings)} couplings for {len(edges)} edges")
        if "beta" in kv:
            if couplings is not None:
                raise FixtureError(f"line {lineno}: give couplings or beta, not both")
            couplings = np.full(len(edges), float(kv["beta"]))
        plane = None
        if "plane" in kv:
            a, s, lvl = (int(t) for t in kv["plane"].split(","))
            plane = Hyperplane(a, s, lvl)
        fx = Fixture(kv["name"], V, edges, coords, couplings, plane)
        if "N" in kv:
            N = int(kv["N"])
            J = np.array([[float(c) for c in row.split(",")] for row in kv.get("J", "").split(";") if row])
            Q = np.array(_floats(kv.get("Q", "")))
            if J.shape != (N, N) or Q.shape != (N,):
                raise FixtureError(f"line {lineno}: block shapes do not match N={N}")
            fx.block_size, fx.J, fx.Q = N, J, Q
        elif "J" in kv or "Q" in kv:
            raise FixtureError(f"line {lineno}: J/Q given without N")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FixtureError):
            raise
        raise FixtureError(f"line {lineno}: {exc}") from exc
    return fx


def parse(text: str) -> list[Fixture]:
    out = []
    names = set()
    for i, line in enumerate(text.splitlines(), 1):
        fx = parse_line(line, i)
        if fx is None:
            continue
        if fx.name in names:
            raise FixtureError(f"line {i}: duplicate fixture name {fx.name!r}")
        names.add(fx.name)
        out.append(fx)
    return out


def load(path) -> list[Fixture]:
    return parse(Path(path).read_text())


def format_fixture(fx: Fixture) -> str:
    toks = [f"name={fx.name}"]
    if fx.coords is not None:
        toks.append("coords=" + ";".join(",".join(str(int(c)) for c in p) for p in fx.coords))
    else:
        toks.append(f"vertices={fx.num_vertices}")
    toks.append("edges=" + ";".join(f"{u}-{v}" for u, v in fx.edges.tolist()))
    if fx.couplings is not None:
        toks.append("couplings=" + ";".join(repr(float(c)) for c in fx.couplings))
    if fx.plane is not None:
        toks.append(f"plane={fx.plane.axis},{fx.plane.sign},{fx.plane.level}")
    if fx.is_block:
        toks.append(f"N={fx.block_size}")
        toks.append("J=" + ";".join(",".join(repr(float(c)) for c in row) for row in fx.J))
        toks.append("Q=" + ";".join(repr(float(q)) for q in fx.Q))
    return " ".join(toks)


def shipped() -> list[Fixture]:
    """Fixtures bundled with the package."""
    text = resources.files("rcising").joinpath("data/fixtures.txt").read_text()
    return parse(text)


def shipped_by_name(name: str) -> Fixture:
    for fx in shipped():
        if fx.name == name:
            return fx
    known = ", ".join(f.name for f in shipped())
    raise FixtureError(f"no shipped fixture named {name!r} (known: {known})")


# ---------------------------------------------------------------------------
# constructors used to generate the shipped file


def grid_fixture(name: str, ranges, plane: Hyperplane | None, keep=None) -> Fixture:
    """Nearest-neighbour grid on the product of integer ranges, optionally edge-filtered."""
    axes = [np.arange(lo, hi + 1) for lo, hi in ranges]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(ranges))
    index = {tuple(p): i for i, p in enumerate(pts.tolist())}
    edges = []
    for i, p in enumerate(pts.tolist()):
        for k in range(len(ranges)):
            q = list(p)
            q[k] += 1
            j = index.get(tuple(q))
            if j is not None and (keep is None or keep(tuple(p), tuple(q))):
                edges.append((i, j))
    return Fixture(name, len(pts), np.array(edges, dtype=np.int64), pts.astype(np.int64), None, plane)


def standard_fixtures() -> list[Fixture]:
    """The fixture set written to ``data/fixtures.txt``."""
    plane1 = Hyperplane(0, 1, 1)
    out = [
        Fixture("edge", 2, np.array([[0, 1]]), np.array([[0, 0], [1, 0]])),
        Fixture("triangle", 3, np.array([[0, 1], [1, 2], [0, 2]])),
        Fixture("cycle4", 4, np.array([[0, 1], [1, 2], [2, 3], [0, 3]])),
        Fixture("k4", 4, np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])),
        grid_fixture("strip3x2", [(0, 2), (0, 1)], plane1),
        grid_fixture("square3", [(0, 2), (-1, 1)], plane1),
        grid_fixture("strip5x2", [(0, 4), (0, 1)], Hyperplane(0, 1, 2)),
        grid_fixture("strip5x2_n1", [(-1, 3), (0, 1)], plane1),
        grid_fixture("cube3_masked", [(0, 2), (0, 1), (0, 1)], plane1, keep=_cube_mask),
    ]
    line = grid_fixture("line3", [(0, 2)], plane1)
    for name, J, Q in [
        ("block_line3", [[0.0, 0.4], [0.4, 0.0]], [1.0, 0.6]),
        ("block_line3_mf", [[0.0, 0.3], [0.3, 0.0]], [0.8, 0.8]),
        ("block_line3_unit", [[0.0]], [1.0]),
    ]:
        fx = Fixture(name, line.num_vertices, line.edges, line.coords, None, plane1)
        fx.block_size, fx.J, fx.Q = len(Q), np.array(J), np.array(Q)
        out.append(fx)
    line5 = grid_fixture("line5", [(0, 4)], Hyperplane(0, 1, 2))
    fx = Fixture("block_line5", line5.num_vertices, line5.edges, line5.coords, None, line5.plane)
    fx.block_size, fx.J, fx.Q = 2, np.zeros((2, 2)), np.array([1.0, 0.6])
    out.append(fx)
    pair = grid_fixture("block_pair", [(0, 1)], None)
    pair.block_size, pair.J, pair.Q = 2, np.array([[0.0, 0.5], [0.5, 0.0]]), np.array([1.0, 0.5])
    out.append(pair)
    return out


def _cube_mask(p, q) -> bool:
    k = next(i for i in range(3) if p[i] != q[i])
    if k == 2:
        return p[1] == 0
    if k == 1:
        return not (p[2] == 1 and p[0] == 1)
    return True
