import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcising.observables import RangeError, radial_table, synthetic_table, transfer_matrix_torus_table
from rcising.samplers import SnEstimate
from rcising.verify import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    bounded_away_verdict,
    check_bubble_divergence,
    check_ir_bound,
    check_lemma24,
    check_mms,
    check_simon_bound,
    check_theorem11,
    check_theorem12,
    lower_bound_verdict,
    reflection_lhs,
    simon_lieb_envelope,
    summary_csv,
    theorem12_ratio,
)


def sup(p):
    return np.abs(p).max(axis=1)


def euclid(p):
    return np.sqrt((p.astype(float) ** 2).sum(axis=1))


def critical_like(d, n, shift=1.0):
    return synthetic_table(d, n, lambda p: (euclid(p) + shift) ** -(d - 2.0), canonical=False)


def _naive_reflection(f, beta, n, d):
    """beta sum_{x,y in Lambda_n, x~y} (f(x) - f(Rx)) f(Ry - y), written with plain loops."""
    import itertools

    box = list(itertools.product(range(-n, n + 1), repeat=d))
    inside = set(box)
    total = 0.0
    for x in box:
        rx = (2 * n - x[0],) + x[1:]
        for k in range(d):
            for s in (-1, 1):
                y = list(x)
                y[k] += s
                y = tuple(y)
                if y not in inside:
                    continue
                ry_minus_y = (2 * n - 2 * y[0],) + (0,) * (d - 1)
                total += (f(x) - f(rx)) * f(ry_minus_y)
    return beta * total


@pytest.mark.parametrize("d,n", [(2, 1), (2, 3), (3, 2)])
def test_reflection_lhs_matches_loops(d, n):
    fn = lambda q: math.exp(-0.2 * sum(abs(c) for c in q)) / (1 + max(abs(c) for c in q))  # noqa: E731
    t = synthetic_table(d, 4 * n, lambda p: np.array([fn(tuple(r)) for r in p.tolist()]), canonical=False)
    assert reflection_lhs(t, 0.3, n) == pytest.approx(_naive_reflection(fn, 0.3, n, d), rel=1e-12)


@given(st.floats(0.1, 10.0))
def test_reflection_lhs_is_quadratic_in_scale(c):
    t = critical_like(3, 8)
    assert reflection_lhs(t.scaled(c), 0.2, 2) == pytest.approx(c * c * reflection_lhs(t, 0.2, 2), rel=1e-10)


def test_theorem12_ratio_matches_definition():
    d, n, beta = 3, 2, 0.2
    t = critical_like(d, 4 * n)
    chi = float(t.values(np.array([[a, b, c] for a in range(-8, 9) for b in range(-8, 9)
                                   for c in range(-8, 9)])).sum())
    tail = sum((k + 2) * t.value([k, 0, 0]) for k in range(4 * n + 1))
    expect = t.value([n, 0, 0]) * beta * (chi + n ** (d - 2) * tail)
    assert theorem12_ratio(t, beta, n) == pytest.approx(expect, rel=1e-12)


def test_lower_bound_and_trend_rules():
    assert lower_bound_verdict(1.0, 0.1, 0.0) == PASS
    assert lower_bound_verdict(-1.0, 0.1, 0.0) == FAIL
    assert lower_bound_verdict(0.1, 0.1, 0.0) == INCONCLUSIVE
    assert lower_bound_verdict(0.0, 0.0, 0.0, exact=True) == PASS
    ns = [2, 4, 8, 16]
    assert bounded_away_verdict(ns, [1, 1, 1, 1], [0.01] * 4)[0] == PASS
    assert bounded_away_verdict(ns, [1, 0.5, 0.25, 0.125], [0.001] * 4)[0] == FAIL
    v, info = bounded_away_verdict(ns[:3], [1, 1, 1], [0.01] * 3)
    assert v == INCONCLUSIVE and info["slope"] is None


def test_theorem11_on_decaying_and_flat_tables():
    # off-critical exponential decay: the double sum dies off with n
    ns = [2, 4, 6, 8]
    expo = synthetic_table(2, 32, lambda p: np.exp(-sup(p) / 1.0))
    r = check_theorem11(expo, 0.3, ns)
    assert r.verdict == FAIL and r.metadata["slope"] < -0.1
    assert len(r.curve) == 4
    with pytest.raises(RangeError):
        check_theorem11(expo, 0.3, 9)
    r1 = check_theorem11(critical_like(3, 8), 0.2, 2)
    assert r1.verdict == PASS and r1.lhs > 0


def test_theorem11_wrap_on_torus():
    t = transfer_matrix_torus_table(8, 0.3)
    with pytest.raises(RangeError):
        check_theorem11(t, 0.3, 1)
    r = check_theorem11(t, 0.3, 1, allow_wrap=True)
    assert r.metadata["wrapped"]


def test_theorem12_report():
    r = check_theorem12(critical_like(3, 16), 0.2, [1, 2, 3, 4])
    assert r.check_id == "theorem12" and len(r.curve) == 4


def test_mms_passes_exact_and_catches_violation():
    assert check_mms(transfer_matrix_torus_table(6, 0.4)).verdict == PASS
    bad = synthetic_table(2, 4, lambda p: np.where(sup(p) == 2, 2.0, 1.0 / (1 + sup(p))))
    r = check_mms(bad)
    assert r.verdict == FAIL and r.metadata["violations_3sigma"] > 0


def test_ir_and_simon():
    good = critical_like(3, 12)
    assert check_ir_bound(good).verdict == PASS
    growing = synthetic_table(3, 12, lambda p: 1.0 + sup(p).astype(float), canonical=False)
    assert check_ir_bound(growing).verdict == FAIL
    assert check_simon_bound(good).verdict == PASS
    zero_far = synthetic_table(3, 6, lambda p: np.where(sup(p) > 4, 0.0, 1.0))
    assert check_simon_bound(zero_far).verdict == FAIL


def test_bubble_divergence_rule():
    # d = 3 with t ~ r^-1: B_n grows linearly, dyadic increments double
    r3 = radial_table(3, 64, lambda r: 1.0 / (1.0 + r))
    rep = check_bubble_divergence(r3, [4, 8, 16, 32, 64])
    assert rep.verdict == PASS and rep.metadata["increment_ratio_geomean"] > 1.5
    # d = 5 with t ~ r^-3: summable, increments shrink
    r5 = radial_table(5, 64, lambda r: 1.0 / (1.0 + r) ** 3)
    rep = check_bubble_divergence(r5, [4, 8, 16, 32, 64])
    assert rep.verdict == FAIL and rep.metadata["plateau"]


def test_simon_lieb_envelope():
    beta = 0.1
    t_s = synthetic_table(2, 0, lambda p: np.ones(len(p)))
    env = simon_lieb_envelope(beta, 0, t_s, 1.0)
    assert env.phi == pytest.approx(4 * beta)
    decay = synthetic_table(2, 12, lambda p: 0.4 ** np.maximum(sup(p) // 2 - 1, 0))
    assert env.check(decay).verdict == PASS
    flat = synthetic_table(2, 12, lambda p: np.ones(len(p)))
    assert env.check(flat).verdict == FAIL
    with pytest.raises(ValueError):
        simon_lieb_envelope(0.2, 0, t_s, 1.0)


def _sn(n, p, q, s=0.01):
    return SnEstimate(n, p, s, q, s, 1000, {"d": 2})


def test_lemma24_rules():
    good = [_sn(n, 0.3, 0.85) for n in (1, 2, 3, 4)]
    assert check_lemma24(good).verdict == PASS
    decaying = [_sn(n, 0.3 / n, 0.9) for n in (1, 2, 3, 4)]
    assert check_lemma24(decaying).verdict == FAIL
    # union bound: P[0 notin S_n] <= 2d P[0 notin S_n(+e_1)]
    broken = [_sn(n, 0.1, 0.99, 1e-4) for n in (1, 2, 3, 4)]
    assert check_lemma24(broken).verdict == FAIL
    assert check_lemma24(good, exact={1: 0.5}).verdict == FAIL


def test_report_serialisation():
    r = check_mms(transfer_matrix_torus_table(4, 0.2))
    back = json.loads(r.to_json())
    assert back["check_id"] == "mms" and back["verdict"] == PASS and back["schema"] == 1
    assert summary_csv([r]).splitlines()[0] == "check_id,beta,n,lhs,rhs,sigma,verdict"
