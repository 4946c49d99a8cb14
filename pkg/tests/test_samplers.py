import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcising.currents import EVEN_POSITIVE, ODD, ZERO, FoldPlan
from rcising.exact import SpinSumOracle, TraceEnsemble, event_connected, event_edge_state
from rcising.graph import SmallGraph
from rcising.lattice import Box, GeometryError, Torus, hyperplanes
from rcising.samplers import (
    Interrupted,
    SamplerConfig,
    SamplerError,
    estimate_S_n_probability,
    merge_outputs,
    run_ising_chain,
    run_phi4_chain,
    sample_current_trace,
)
from rcising.samplers import checkpoint as ckpt

Z = 5.0  # tolerance in standard errors for Monte Carlo vs exact comparisons


def cfg(alg="cluster-flip", beta=0.3, **kw):
    base = dict(seed=42, thermalization=200, sweeps=4000, batches=20, segment=256)
    base.update(kw)
    return SamplerConfig(alg, beta, **base)


def edge_graph(beta=0.3):
    # SmallGraph couplings are absolute; the config beta does not rescale them
    return SmallGraph(2, [(0, 1)], beta, coords=[[0], [1]])


# ---------------------------------------------------------------------------
# config validation and streams


@pytest.mark.parametrize("kw", [
    dict(algorithm="heatbath"), dict(beta=-0.1), dict(beta=float("nan")), dict(sweeps=0),
    dict(stride=0), dict(batches=1), dict(sweeps=10, batches=20), dict(thermalization=-1),
    dict(algorithm="phi4-site", g=0.0, a=0.0), dict(algorithm="phi4-site", g=1.0, a=None),
])
def test_bad_configs(kw):
    args = dict(algorithm="cluster-flip", beta=0.2, seed=1)
    args.update(kw)
    with pytest.raises(SamplerError):
        SamplerConfig(**args)


def test_seed_is_required():
    with pytest.raises(SamplerError):
        run_ising_chain(SamplerConfig("cluster-flip", 0.2, seed=None, sweeps=100), edge_graph())


def test_wrong_algorithm_for_runner():
    with pytest.raises(SamplerError):
        run_phi4_chain(cfg(), edge_graph())
    with pytest.raises(SamplerError):
        run_ising_chain(cfg("phi4-site", g=1.0, a=0.0), edge_graph())


# ---------------------------------------------------------------------------
# Ising chains against exact spin sums


def test_wolff_single_edge_matches_tanh():
    out = run_ising_chain(cfg(beta=0.3, sweeps=20000), edge_graph(0.3))
    v, e = out.correlation([1])
    assert abs(v - math.tanh(0.3)) < Z * e


@pytest.mark.parametrize("alg", ["cluster-flip", "single-site"])
def test_small_torus_matches_spin_sums(alg):
    T = Torus(2, 4)
    beta = 0.35
    out = run_ising_chain(cfg(alg, beta, sweeps=20000), T)
    o = SpinSumOracle(SmallGraph.from_lattice(T, beta))
    for x in ([1, 0], [2, 0], [1, 1], [2, 2]):
        v, e = out.correlation(x)
        exact = o.two_point(T.find_vertex([0, 0]), T.find_vertex(x))
        assert abs(v - exact) < Z * e + 1e-3, (alg, x, v, exact, e)


def test_free_box_matches_spin_sums():
    B = Box(2, 1)
    beta = 0.5
    out = run_ising_chain(cfg(beta=beta, sweeps=20000), B)
    o = SpinSumOracle(SmallGraph.from_lattice(B, beta))
    for x in ([1, 0], [1, 1], [-1, 1]):
        v, e = out.correlation(x)
        assert abs(v - o.two_point(B.find_vertex([0, 0]), B.find_vertex(x))) < Z * e + 1e-3


def test_block_chain_measures_block_field():
    from rcising.gsblock import block_two_point, build_gs_model

    base = SmallGraph(3, [(0, 1), (1, 2)], 1.0, coords=[[0], [1], [2]])
    m = build_gs_model(base, 2, [[0, 0.4], [0.4, 0]], [1.0, 0.5], 0.4)
    out = run_ising_chain(cfg(beta=0.4, sweeps=20000), m.flat, block=(base, m.Q))
    for y in (1, 2):
        v, e = out.correlation([y])
        assert abs(v - block_two_point(m, 0, y)) < Z * e + 1e-3
    with pytest.raises(SamplerError):
        run_ising_chain(cfg(), m.flat, block=(base, [1.0, 1.0, 1.0]))


# ---------------------------------------------------------------------------
# determinism and checkpoints


def test_same_seed_same_output():
    a = run_ising_chain(cfg(sweeps=500), Torus(2, 6))
    b = run_ising_chain(cfg(sweeps=500), Torus(2, 6))
    np.testing.assert_array_equal(a.batch_sums, b.batch_sums)
    c = run_ising_chain(cfg(sweeps=500, seed=43), Torus(2, 6))
    assert not np.array_equal(a.batch_sums, c.batch_sums)


@pytest.mark.parametrize("alg", ["cluster-flip", "single-site", "phi4-site"])
def test_resume_is_bit_identical(tmp_path, alg):
    kw = dict(sweeps=600, segment=50, thermalization=100)
    if alg == "phi4-site":
        kw.update(g=0.5, a=-0.5)
    c = cfg(alg, 0.3, **kw)
    run = run_phi4_chain if alg == "phi4-site" else run_ising_chain
    ref = run(c, Torus(2, 6))
    path = tmp_path / "chain.rclb"
    with pytest.raises(Interrupted):
        run(c, Torus(2, 6), checkpoint=path, stop_after=3)
    with pytest.raises(Interrupted):
        run(c, Torus(2, 6), checkpoint=path, stop_after=5)
    out = run(c, Torus(2, 6), checkpoint=path)
    np.testing.assert_array_equal(ref.batch_sums, out.batch_sums)
    for k in ref.scalar_sums:
        np.testing.assert_array_equal(ref.scalar_sums[k], out.scalar_sums[k])
    assert ref.diagnostics == out.diagnostics


def test_checkpoint_rejects_other_config(tmp_path):
    path = tmp_path / "c.rclb"
    with pytest.raises(Interrupted):
        run_ising_chain(cfg(sweeps=600, segment=50), Torus(2, 6), checkpoint=path, stop_after=1)
    with pytest.raises(ckpt.CheckpointError):
        run_ising_chain(cfg(sweeps=600, segment=50, seed=7), Torus(2, 6), checkpoint=path)
    with pytest.raises(ckpt.CheckpointError):
        run_ising_chain(cfg(sweeps=600, segment=50), Torus(2, 8), checkpoint=path)


def _state():
    rng = np.random.default_rng(0)
    return ckpt.ChainState(
        bytes(range(32)), 3, 150, 1.25, 7, np.arange(4, dtype=np.uint64),
        rng.integers(-1, 2, 36).astype(np.int8), rng.random((4, 36)), np.arange(4, dtype=np.int64),
        {"m": rng.random(4), "energy": rng.random(4)},
    )


def test_checkpoint_encode_roundtrip():
    cs = _state()
    back = ckpt.decode(ckpt.encode(cs))
    assert (back.segment, back.measured, back.width, back.clusters_per_sweep) == (3, 150, 1.25, 7)
    np.testing.assert_array_equal(back.state, cs.state)
    np.testing.assert_array_equal(back.sums, cs.sums)
    assert set(back.scalars) == set(cs.scalars)


@given(st.integers(0, 10_000), st.integers(1, 255))
@settings(max_examples=30)
def test_checkpoint_detects_corruption(pos, flip):
    blob = bytearray(ckpt.encode(_state()))
    pos %= len(blob)
    blob[pos] ^= flip
    with pytest.raises(ckpt.CheckpointError):
        ckpt.decode(bytes(blob))


def test_checkpoint_truncation():
    blob = ckpt.encode(_state())
    for n in (0, 10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(ckpt.CheckpointError):
            ckpt.decode(blob[:n])


def test_merge_orders_by_chain_id():
    T = Torus(2, 4)
    outs = [run_ising_chain(cfg(sweeps=200, chain_id=i), T) for i in (2, 0, 1)]
    a = merge_outputs(outs)
    b = merge_outputs(sorted(outs, key=lambda o: o.config.chain_id))
    np.testing.assert_array_equal(a.batch_sums, b.batch_sums)
    assert a.batch_sums.shape[0] == 60
    with pytest.raises(SamplerError):
        merge_outputs([outs[0], run_ising_chain(cfg(sweeps=200), Torus(2, 6))])


# ---------------------------------------------------------------------------
# phi^4 chains against quadrature


def _site_moments(g, a):
    x = np.linspace(-6, 6, 24001)
    w = np.exp(-g * x**4 - a * x**2)
    return np.trapezoid(x**2 * w, x) / np.trapezoid(w, x), np.trapezoid(x**4 * w, x) / np.trapezoid(w, x)


@pytest.mark.parametrize("g,a", [(1.0, 0.0), (0.5, -1.0), (2.0, 1.0)])
def test_phi4_zero_beta_matches_quadrature(g, a):
    out = run_phi4_chain(cfg("phi4-site", 0.0, g=g, a=a, sweeps=4000), Torus(2, 6))
    m2, m4 = _site_moments(g, a)
    v, e = out.scalar("phi2")
    assert abs(v - m2) < Z * e
    v, e = out.scalar("phi4")
    assert abs(v - m4) < Z * e
    # odd moments vanish by symmetry
    for name in ("phi1", "phi3"):
        v, e = out.scalar(name)
        assert abs(v) < Z * e
    assert 0.2 < out.diagnostics["acceptance"] < 0.8


def test_phi4_edge_matches_two_dimensional_quadrature():
    beta, g, a = 0.4, 0.7, -0.6
    x = np.linspace(-4, 4, 801)
    rho = np.exp(-g * x**4 - a * x**2)
    W = np.outer(rho, rho) * np.exp(beta * np.outer(x, x))
    exact = (np.outer(x, x) * W).sum() / W.sum()
    out = run_phi4_chain(cfg("phi4-site", beta, g=g, a=a, sweeps=40000), edge_graph(beta))
    v, e = out.correlation([1])
    assert abs(v - exact) < Z * e


def test_phi4_double_well_edge_matches_quadrature():
    beta, g, a = 0.3, 1.5, -2.0
    x = np.linspace(-4, 4, 801)
    rho = np.exp(-g * x**4 - a * x**2)
    W = np.outer(rho, rho) * np.exp(beta * np.outer(x, x))
    exact = (np.outer(x, x) * W).sum() / W.sum()
    out = run_phi4_chain(cfg("phi4-site", beta, g=g, a=a, sweeps=60000), edge_graph(beta))
    v, e = out.correlation([1])
    assert abs(v - exact) < Z * e


# ---------------------------------------------------------------------------
# current traces


def test_even_subgraph_uniform_at_zero_coupling_limit():
    # tiny beta: traces are dominated by ODD edges from the even subgraph; on the 4-cycle the
    # sourceless odd set is either empty or the whole cycle with weights 1 : tanh(b)^4 after
    # conditioning.  Compare the sampled state frequencies with enumeration via chi-square.
    from scipy.stats import chisquare

    beta = 0.8
    g = SmallGraph(4, [(0, 1), (1, 2), (2, 3), (0, 3)], beta)
    ens = TraceEnsemble(g, ())
    s = sample_current_trace(cfg("current-trace", beta, sweeps=20000, thermalization=50), g)
    keys = {}
    for o, sup in zip(*s.masks()):
        keys[(int(o), int(sup))] = keys.get((int(o), int(sup)), 0) + 1
    exact = {}
    for o, sup, w in zip(ens.odd.tolist(), ens.support.tolist(), ens.weight.tolist()):
        exact[(o, sup)] = w / ens.Z
    assert set(keys) <= set(exact)
    cats = sorted(exact)
    obs = np.array([keys.get(k, 0) for k in cats], dtype=float)
    exp = np.array([exact[k] for k in cats]) * obs.sum()
    # consecutive traces are correlated, so use a generous p-value
    assert chisquare(obs, exp).pvalue > 1e-4


@pytest.mark.parametrize("sources", [(), (0, 3)])
def test_trace_sampler_edge_states_match_enumeration(sources):
    beta = 0.45
    g = SmallGraph.from_lattice(Box(2, 1), beta)
    ens = TraceEnsemble(g, sources)
    s = sample_current_trace(cfg("current-trace", beta, sweeps=20000, thermalization=100), g, sources)
    assert len(s) > 0
    for e in range(0, g.num_edges, 3):
        for st_ in (ZERO, EVEN_POSITIVE, ODD):
            ev = event_edge_state(e, st_)
            v, err = s.event_frequency(ev)
            assert abs(v - ens.probability(ev)) < Z * err + 2e-3
    ev = event_connected(g, [0], [g.num_vertices - 1])
    v, err = s.event_frequency(ev)
    assert abs(v - ens.probability(ev)) < Z * err + 2e-3


def test_S_n_estimate_matches_enumeration():
    beta = 0.4
    box = Box(2, 1)
    g = SmallGraph.from_lattice(box, beta)
    ens = TraceEnsemble(g, ())
    origin = box.find_vertex([0, 0])
    reach = [event_connected(g, [origin], np.flatnonzero(FoldPlan(g, h).on_plane), FoldPlan(g, h))
             for h in hyperplanes(2, 1)]
    none = ~reach[0]
    for ev in reach[1:]:
        none = none & ~ev
    est = estimate_S_n_probability(cfg("current-trace", beta, sweeps=20000, thermalization=100), box, 1,
                                   enforce_radius=False)
    assert abs(est.probability - ens.probability(none)) < Z * est.stderr + 2e-3
    assert abs(est.single_direction - ens.probability(~reach[0])) < Z * est.single_stderr + 2e-3
    with pytest.raises(GeometryError):
        estimate_S_n_probability(cfg("current-trace", beta, sweeps=100), box, 1)
