from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rcising.graph import SmallGraph

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

BETA_C_2D = 0.5 * math.log(1.0 + math.sqrt(2.0))
BETA_C_3D = 0.221654626


def random_connected_graph(rng: np.random.Generator, max_v: int = 10, max_e: int = 14,
                           beta_lo: float = 0.0) -> SmallGraph:
    """Random connected simple graph with couplings in (beta_lo, 1]."""
    while True:
        V = int(rng.integers(2, max_v + 1))
        pairs = [(i, j) for i in range(V) for j in range(i + 1, V)]
        lo, hi = V - 1, min(max_e, len(pairs))
        if lo > hi:
            continue
        E = int(rng.integers(lo, hi + 1))
        idx = rng.choice(len(pairs), E, replace=False)
        edges = np.array([pairs[i] for i in idx], dtype=np.int64)
        b = 1.0 - rng.uniform(0.0, 1.0 - beta_lo, E)  # in (beta_lo, 1]
        g = SmallGraph(V, edges, b)
        if g.is_connected():
            return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


# ---------------------------------------------------------------------------
# acceptance criteria report: one line per criterion in the terminal summary


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def criterion(request):
    """``with criterion(k, text) as note:`` records PASS/FAIL for criterion k; ``note(s)`` adds detail."""
    import contextlib

    store = request.config._acceptance

    @contextlib.contextmanager
    def ctx(k, text):
        details = []
        try:
            yield details.append
        except BaseException as exc:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            store[k] = f"FAIL  criterion {k:>2}: {text} | " + "; ".join(details + [msg[:200]])
            raise
        store[k] = f"PASS  criterion {k:>2}: {text} | " + "; ".join(details)

    return ctx


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_acceptance", {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(store):
        terminalreporter.write_line(store[k])
