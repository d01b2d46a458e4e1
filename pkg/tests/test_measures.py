"""Consistent-measure polytope, dual prices, and measure transport.

The binomial-with-short-put market is solved by hand throughout: with
q(u,0) = a, q(d,0) = 2a, q(u,1) = b, q(d,1) = 2b (martingale rows per
time-0 atom), mass gives 3a + 3b = 1, the shorted put row reads
2b * 1/2 >= gamma, so at gamma = 1/4 the uniform slack solves
max min(a, b, b - 1/4) = 1/24 at a = 1/24, b = 7/24.
"""
from __future__ import annotations

import pytest

from amhedge.enlarged import enlarge, extend_claim
from amhedge.errors import PropertyViolation, SnaFailure
from amhedge.market import load_model
from amhedge.measures import (
    build_polytope,
    dual_subhedge,
    dual_superhedge,
    e2_chain,
    ftap_certificate,
    lift_measure_uniform_clock,
    push_stopping_measure,
    restricted_stopping_times,
    snell_value,
    strict_value_bracket,
)
from amhedge.rationals import ONE, Q, ZERO
from amhedge.strategies import StoppingTime

from conftest import binomial_dict


def _path(enl, base_index, clocks):
    return enl.path_index(base_index, clocks)


def test_polytope_rows(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    pt = build_polytope(enl)
    assert len(pt.q_var) == 4
    # two root atoms, one stock dim: two martingale rows
    assert len(pt.mart_rows) == 2
    assert len(pt.h_rows) == 1 and not pt.f_rows and not pt.g_rows
    assert pt.pos_rows == []
    pt2 = build_polytope(enl, include_positivity=True)
    assert len(pt2.pos_rows) == 4


def test_check_validates_and_rejects(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    pt = build_polytope(enl)
    u0, d0 = _path(enl, 0, (0,)), _path(enl, 1, (0,))
    u1, d1 = _path(enl, 0, (1,)), _path(enl, 1, (1,))
    good = {u0: Q(1, 24), d0: Q(2, 24), u1: Q(7, 24), d1: Q(14, 24)}
    ok, ledger = pt.check(good)
    assert ok and all(e["ok"] for e in ledger)
    ok, _ = pt.check(good, min_slack=Q(1, 24))
    assert ok
    ok, _ = pt.check(good, min_slack=Q(1, 23))
    assert not ok
    bad = dict(good)
    bad[u0] += Q(1, 100)    # breaks mass and the martingale row
    ok, ledger = pt.check(bad)
    assert not ok and any(not e["ok"] for e in ledger)


def test_ftap_certificate_slack(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    holds, cert = ftap_certificate(enl)
    assert holds and cert.slack == Q(1, 24)
    ok, _ = build_polytope(enl).check(cert.measure, min_slack=cert.slack)
    assert ok
    doc = cert.to_json(enl)
    assert doc["slack"] == "1/24" and doc["paths"]


def test_ftap_fails_on_rich_quote():
    model = load_model(binomial_dict(americans_short=[
        {"values": {"r": "0", "u": "0", "d": "1/2"}, "price": "1/2"},
    ]))
    holds, cert = ftap_certificate(enlarge(model, 1))
    # best uniform slack: all mass on the late put exercise misses by 1/6
    assert not holds and cert.slack == Q(-1, 6)


def test_ftap_overpriced_european_slack():
    # pinned u-mass is 1/3 but the European cap demands <= 1/4: the
    # relaxed system still solves, missing the cap by exactly 1/12
    model = load_model(binomial_dict(europeans=[
        {"payoff": {"u": "1", "d": "0"}, "price": "1/4"},
    ]))
    holds, cert = ftap_certificate(enlarge(model, 0))
    assert not holds and cert.slack == Q(-1, 12)
    assert cert.measure == {0: Q(1, 3), 1: Q(2, 3)}


def test_ftap_infeasible_polytope():
    # a strictly rising stock admits no nonnegative martingale mass at all
    data = binomial_dict()
    data["stock"]["values"]["d"] = ["3/2"]
    holds, cert = ftap_certificate(enlarge(load_model(data), 0))
    assert not holds and cert.slack is None and cert.measure is None
    assert cert.ledger


def test_dual_prices(binomial_short_put):
    enl_sub = enlarge(binomial_short_put, 1)
    enl_sup = enlarge(binomial_short_put, 2)
    dsub = dual_subhedge(enl_sub)
    dsup = dual_superhedge(enl_sup)
    assert dsub.value == Q(1, 3)
    assert dsup.value == Q(1, 3)
    assert sum(dsub.measure.values(), ZERO) == ONE
    doc = dsub.to_json(enl_sub)
    assert doc["value"] == "1/3"


def test_dual_matches_primal_on_unique_measure(two_period):
    enl = enlarge(two_period, 0)
    assert dual_subhedge(enl).value == Q(1, 3)
    assert dual_superhedge(enlarge(two_period, 1)).value == Q(1, 3)


def test_dual_raises_on_empty_polytope():
    model = load_model(binomial_dict(europeans=[
        {"payoff": {"u": "1", "d": "0"}, "price": "1/4"},
    ]))
    with pytest.raises(SnaFailure):
        dual_superhedge(enlarge(model, 1))


def test_snell_value_oracle(two_period):
    enl = enlarge(two_period, 0)
    claim_at = extend_claim(enl, "sub")
    # unique law: path masses 1/9, 2/9, 2/9, 4/9
    measure = {0: Q(1, 9), 1: Q(2, 9), 2: Q(2, 9), 3: Q(4, 9)}
    assert snell_value(enl, claim_at, measure) == Q(1, 3)
    # under a d-heavy measure the claim is worthless beyond u's intrinsic
    skew = {2: Q(1, 2), 3: Q(1, 2)}
    assert snell_value(enl, claim_at, skew) == ZERO
    # mass on the uu path: stopping at uu collects 3
    assert snell_value(enl, claim_at, {0: ONE}) == Q(3)


def test_lift_spreads_the_new_clock(binomial_short_put):
    enl1 = enlarge(binomial_short_put, 1)
    enl2 = enlarge(binomial_short_put, 2)
    _, cert = ftap_certificate(enl1)
    lifted = lift_measure_uniform_clock(enl1, enl2, cert.measure)
    assert sum(lifted.values(), ZERO) == ONE
    for p, q in cert.measure.items():
        ep = enl1.epaths[p]
        for t in (0, 1):
            tgt = enl2.path_index(ep.base_index, ep.clocks + (t,))
            assert lifted[tgt] == q / 2


def test_lift_requires_adjacent_spaces(binomial_short_put, binomial):
    enl1 = enlarge(binomial_short_put, 1)
    with pytest.raises(ValueError):
        lift_measure_uniform_clock(enl1, enl1, {})
    with pytest.raises(ValueError):
        lift_measure_uniform_clock(enl1, enlarge(binomial, 1), {})


def test_push_concentrates_on_the_stop(binomial_short_put):
    enl1 = enlarge(binomial_short_put, 1)
    enl2 = enlarge(binomial_short_put, 2)
    _, cert = ftap_certificate(enl1)
    # stop at time 1 on every atom: collects the u-mass, 1/3
    stops = frozenset(
        v for v, node in enumerate(enl1.enodes) if node.time == 1
    )
    push = push_stopping_measure(enl1, enl2, cert.measure, StoppingTime(stops))
    assert push.value == Q(1, 3)
    assert sum(push.pushed.values(), ZERO) == ONE
    assert ZERO < push.lam <= Q(1, 2)
    # stopping immediately collects the zero root claim
    roots = frozenset(v for v, node in enumerate(enl1.enodes) if node.time == 0)
    assert push_stopping_measure(enl1, enl2, cert.measure,
                                 StoppingTime(roots)).value == ZERO


def test_e2_chain_collapses_when_attainable(binomial_short_put):
    chain = e2_chain(enlarge(binomial_short_put, 1), enlarge(binomial_short_put, 2))
    assert (chain.lower, chain.middle, chain.upper) == (Q(1, 3), Q(1, 3), Q(1, 3))
    assert not chain.strict_upper
    assert chain.num_taus >= 1


def test_strict_value_bracket_converges(binomial_short_put):
    enl2 = enlarge(binomial_short_put, 2)
    enl1 = enlarge(binomial_short_put, 1)
    _, cert = ftap_certificate(enl1)
    pt = build_polytope(enl2)
    lifted = lift_measure_uniform_clock(enl1, enl2, cert.measure, polytope=pt)
    target = extend_claim(enl2, "super")
    vmax, _, _ = pt.solve_extremum(target, "max")
    vs = pt.expectation(lifted, target)
    bracket = strict_value_bracket(pt, target, lifted, halvings=6)
    assert len(bracket) == 6
    for lam, val in bracket:
        assert val == (ONE - lam) * vmax + lam * vs
    # geometric approach to the closed maximum
    assert vmax - bracket[-1][1] == bracket[-1][0] * (vmax - vs)


def test_restricted_stopping_times(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    all_taus = restricted_stopping_times(enl, range(enl.num_paths))
    assert len(all_taus) == 4
    # restricting to the clock-0 paths leaves a single root atom
    sub = restricted_stopping_times(enl, [_path(enl, 0, (0,)), _path(enl, 1, (0,))])
    assert len(sub) == 2


def test_polytope_paths_restriction(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    keep = [_path(enl, 0, (0,)), _path(enl, 1, (0,))]
    pt = build_polytope(enl, paths=keep)
    assert sorted(pt.q_var) == sorted(keep)
    # a measure charging an excluded path must be flagged
    ok, ledger = pt.check({_path(enl, 0, (1,)): ONE})
    assert not ok
