import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_connected_graph
from rcising.currents import EVEN_POSITIVE, ODD, ZERO, Multigraph
from rcising.exact import (
    ALWAYS,
    BudgetError,
    ParitySum,
    SpinSumOracle,
    TraceEnsemble,
    UnrealizableSources,
    event_connected,
    event_edge_state,
    event_support_nonempty,
    parity_sum_Z,
    spin_sum_correlation,
    switching_sides,
    verify_lemma25,
    verify_reflected_switching,
    verify_switching,
)
from rcising.fixtures import shipped
from rcising.graph import SmallGraph
from rcising.lattice import Box


def cycle(n, beta):
    return SmallGraph(n, [(i, (i + 1) % n) for i in range(n)], beta)


@pytest.mark.parametrize("n,beta", [(3, 0.2), (5, 0.7), (8, 0.44)])
def test_cycle_closed_form(n, beta):
    # <s_0 s_k> on C_n = (t^k + t^(n-k)) / (1 + t^n), t = tanh beta
    t = math.tanh(beta)
    o = SpinSumOracle(cycle(n, beta))
    for k in range(1, n):
        assert o.two_point(0, k) == pytest.approx((t**k + t ** (n - k)) / (1 + t**n), rel=1e-13)


def test_tree_is_product_of_tanh():
    b = [0.3, 0.9, 0.05, 0.6]
    g = SmallGraph(5, [(0, 1), (1, 2), (1, 3), (3, 4)], b)
    t = np.tanh(b)
    assert spin_sum_correlation(g, [0, 4]) == pytest.approx(t[0] * t[2] * t[3], rel=1e-13)
    assert spin_sum_correlation(g, [2, 4]) == pytest.approx(t[1] * t[2] * t[3], rel=1e-13)
    assert spin_sum_correlation(g, [0, 2, 3, 4]) == pytest.approx(t[0] * t[1] * t[3], rel=1e-13)


def test_single_edge_partition_functions():
    g = SmallGraph(2, [(0, 1)], 0.7)
    assert parity_sum_Z(g).value == pytest.approx(math.cosh(0.7), rel=1e-14)
    assert parity_sum_Z(g, [0, 1]).value == pytest.approx(math.sinh(0.7), rel=1e-14)
    ens = TraceEnsemble(g, ())
    assert ens.probability(event_support_nonempty()) == pytest.approx((math.cosh(0.7) - 1) / math.cosh(0.7))


@given(st.integers(0, 2**32 - 1))
def test_parity_ratio_equals_spin_sum(seed):
    g = random_connected_graph(np.random.default_rng(seed), max_v=7, max_e=10)
    so, ps = SpinSumOracle(g), ParitySum(g)
    for u in range(g.num_vertices):
        for v in range(u + 1, g.num_vertices):
            a, b = so.two_point(u, v), ps.ratio([u, v])
            assert abs(a - b) <= 1e-12 * abs(a)


@given(st.integers(0, 2**32 - 1))
def test_trace_ensemble_partition_equals_parity_sum(seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, max_v=6, max_e=9)
    ps = ParitySum(g)
    V = g.num_vertices
    for A in [(), (0, V - 1)]:
        ens = TraceEnsemble(g, A)
        assert ens.Z == pytest.approx(ps.Z(A), rel=1e-12)
        # odd edges of every configuration have boundary exactly A
        for o, s in zip(ens.odd.tolist(), ens.support.tolist()):
            assert o & ~s == 0
        assert ens.probability(ALWAYS) == pytest.approx(1.0)


def test_edge_state_marginals_on_cycle():
    # sourceless cycle: all edges odd with prob t^n / (1 + t^n)
    beta, n = 0.4, 4
    g = cycle(n, beta)
    ens = TraceEnsemble(g, ())
    t = math.tanh(beta)
    allodd = event_edge_state(0, ODD)
    for e in range(1, n):
        allodd = allodd & event_edge_state(e, ODD)
    assert ens.probability(allodd) == pytest.approx(t**n / (1 + t**n), rel=1e-12)
    p = [ens.probability(event_edge_state(0, s)) for s in (ZERO, EVEN_POSITIVE, ODD)]
    assert sum(p) == pytest.approx(1.0)


def test_unrealizable_and_budget():
    g = SmallGraph(4, [(0, 1), (2, 3)], 0.5)
    with pytest.raises(UnrealizableSources):
        TraceEnsemble(g, (0, 2))
    assert ParitySum(g).Z([0, 2]) == 0.0
    with pytest.raises(ValueError):
        TraceEnsemble(g, (0,))
    big = Box(2, 2)
    with pytest.raises(BudgetError):
        TraceEnsemble(SmallGraph.from_lattice(big, 0.3), ())
    with pytest.raises(BudgetError):
        SpinSumOracle(SmallGraph.from_lattice(Box(2, 3), 0.3))


def test_fixed_point_weights_resolve_tiny_correlations():
    # a long path at small beta: the correlation is far below float64 resolution of Z
    n = 12
    beta = 0.01
    g = SmallGraph(n, [(i, i + 1) for i in range(n - 1)], beta)
    o = SpinSumOracle(g)
    assert o.exact
    assert o.two_point(0, n - 1) == pytest.approx(math.tanh(beta) ** (n - 1), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_switching_holds_for_arbitrary_functions(seed):
    rng = np.random.default_rng(seed)
    V = int(rng.integers(2, 6))
    pairs = [(i, j) for i in range(V) for j in range(i + 1, V)]
    E = int(rng.integers(1, len(pairs) + 1))
    edges = np.array([pairs[i] for i in rng.choice(len(pairs), E, replace=False)])
    mult = rng.integers(0, 3, E)
    while mult.sum() > 10 or mult.sum() == 0:
        mult = rng.integers(0, 3, E)
    M = Multigraph(mult, edges, V)
    K = M.select(int(rng.integers(0, 1 << M.total)))
    table = rng.integers(-5, 6, 1 << M.total)
    f = lambda m: int(table[m])  # noqa: E731
    for A in [(), tuple(sorted(rng.choice(V, 2, replace=False).tolist()))]:
        lhs, rhs = switching_sides(M, A, K, f)
        assert isinstance(lhs, Fraction) and lhs == rhs
        assert verify_switching(M, A, K, f)


def test_switching_rejects_non_submultigraph():
    edges = np.array([[0, 1]])
    with pytest.raises(ValueError):
        switching_sides(Multigraph([1], edges, 2), (), Multigraph([2], edges, 2), lambda m: 1)


@pytest.mark.parametrize("fx", [f for f in shipped() if f.plane is not None and not f.is_block],
                         ids=lambda f: f.name)
def test_reflected_switching_on_fixtures(fx):
    for beta in (0.1, 0.5):
        g = fx.graph(beta)
        left = np.flatnonzero(g.vertex_sides(fx.plane) < 0)
        for x in left[:3]:
            r = verify_reflected_switching(g, fx.plane, None, [], int(x))
            assert r.ok, (fx.name, beta, x, r)


def test_origin_inequality_on_fixture():
    fx = next(f for f in shipped() if f.name == "square3")
    for beta in (0.05, 0.4, 0.8):
        L = verify_lemma25(fx.graph(beta), fx.plane)
        assert L.ok and L.lhs <= L.rhs


def test_connection_event_matches_brute_force():
    g = cycle(5, 0.3)
    ens = TraceEnsemble(g, ())
    ev = event_connected(g, [0], [2])
    brute = 0.0
    for t in ens.configs():
        # 0 <-> 2 on a 5-cycle through the short arc (edges 0,1) or the long arc (2,3,4)
        s = t.support
        brute_hit = (s[0] and s[1]) or (s[2] and s[3] and s[4])
        brute += brute_hit
    assert ens.evaluate(ev).sum() == brute
