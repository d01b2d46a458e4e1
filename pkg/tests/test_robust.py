"""Quasi-sure engine under kernel families of one-step laws.

Hand oracles on the binomial/trinomial markets: the interior kernel
(1/2, 1/2) over stock moves {+1, -1/2} dominates the unique martingale
law (1/3, 2/3) with uniform factor min(2/3 / (1/2), ...) = 2/3; the
claim paying 1 on the up state prices to 1/3 under that law.
"""
from __future__ import annotations

import pytest

from amhedge.enlarged import enlarge, extend_claim
from amhedge.errors import SnaFailure
from amhedge.hedging import subhedge, superhedge
from amhedge.market import load_model
from amhedge.rationals import ONE, Q, ZERO
from amhedge.robust import (
    build_robust,
    dp_operator,
    dp_superhedge,
    enlarge_robust,
    ftap_transfer,
    robust_ftap,
    robust_na,
    robust_subhedge,
    robust_superhedge_full,
    robust_superhedge_options,
    robust_superhedge_stock,
    verify_minimax,
)

from conftest import binomial_dict


def _binomial(kern):
    return load_model(binomial_dict(kernels=kern))


def _binomial_put(kern, gamma="1/4"):
    return load_model(binomial_dict(
        americans_short=[{"values": {"r": "0", "u": "0", "d": "1/2"}, "price": gamma}],
        kernels=kern,
    ))


def _trinomial(kern):
    return load_model({
        "horizon": 1,
        "nodes": [
            {"id": "r", "time": 0},
            {"id": "a", "time": 1, "parent": "r"},
            {"id": "b", "time": 1, "parent": "r"},
            {"id": "c", "time": 1, "parent": "r"},
        ],
        "stock": {"dim": 1, "values": {"r": ["1"], "a": ["2"], "b": ["1"], "c": ["1/2"]}},
        "claim": {"values": {"r": "0", "a": "1", "b": "0", "c": "0"}},
        "weights": {"a": "1/3", "b": "1/3", "c": "1/3"},
        "kernels": kern,
    })


INTERIOR = {"r": [["1/2", "1/2"]]}
SURE_UP = {"r": [["1", "0"]]}


def test_na_interior_singleton():
    renl = enlarge_robust(build_robust(_binomial(INTERIOR)), 0)
    rep = robust_na(renl)
    assert rep.holds and rep.gain == ZERO
    assert len(rep.certificates) == 1
    cert = rep.certificates[0]
    # martingale law (1/3, 2/3) dominates (1/2, 1/2) with factor 2/3
    assert cert.slack == Q(2, 3)
    assert cert.measure == {0: Q(1, 3), 1: Q(2, 3)}


def test_na_fails_on_sure_up():
    renl = enlarge_robust(build_robust(_binomial(SURE_UP)), 0)
    rep = robust_na(renl)
    assert not rep.holds and rep.gain > ZERO
    # holding one share wins 1 on the only supported path
    assert rep.witness and list(rep.witness.values()) == [ONE]
    assert rep.certificates[0].slack is None


def test_stock_superhedge():
    renl = enlarge_robust(build_robust(_binomial(INTERIOR)), 0)
    rep = robust_superhedge_stock(renl, {0: ONE, 1: ZERO})
    assert rep.value == Q(1, 3)
    assert rep.dual_value == Q(1, 3)
    assert not rep.na_failed
    # constants price to themselves
    assert robust_superhedge_stock(renl, {0: Q(5, 7), 1: Q(5, 7)}).value == Q(5, 7)


def test_stock_superhedge_flags_arbitrage():
    renl = enlarge_robust(build_robust(_binomial(SURE_UP)), 0)
    rep = robust_superhedge_stock(renl, {0: ONE})
    assert rep.na_failed and rep.value is None


def _put_super_target(kern):
    rm = build_robust(_binomial_put(kern))
    renl = enlarge_robust(rm, 2)
    target = extend_claim(renl.enl, "super")
    zeta = {p: target[p] for p in range(renl.enl.num_paths)}
    return rm, renl, zeta


def test_dp_matches_stock_superhedge():
    _, renl, zeta = _put_super_target(INTERIOR)
    dp = dp_superhedge(renl, zeta)
    assert dp.value == Q(1, 3)
    assert robust_superhedge_stock(renl, zeta).value == dp.value
    # one LP per supported root atom
    roots = {renl.enl.epaths[p].node_seq[0] for p in renl.supported_paths}
    assert dp.lp_count == len(roots)


def test_dp_raises_on_local_arbitrage():
    _, renl, zeta = _put_super_target(SURE_UP)
    with pytest.raises(SnaFailure):
        dp_superhedge(renl, zeta)


def test_dp_operator_pins_martingale():
    renl = enlarge_robust(build_robust(_binomial(INTERIOR)), 0)
    enl = renl.enl
    chi = {enl.epaths[p].node_seq[1]: enl.stock_at(p, 1)[0] for p in range(enl.num_paths)}
    stage = dp_operator(renl, chi, 0)
    assert list(stage.values.values()) == [ONE]


TWO_VERTEX = {"r": [["1/3", "1/3", "1/3"], ["1/2", "0", "1/2"]]}


def test_two_vertex_support_and_prices():
    rm = build_robust(_trinomial(TWO_VERTEX))
    assert rm.supported_base_paths == [0, 1, 2]
    renl = enlarge_robust(rm, 0)
    zeta = {0: ONE, 1: ZERO, 2: ZERO}
    assert robust_superhedge_stock(renl, zeta).value == Q(1, 3)
    assert dp_superhedge(renl, zeta).value == Q(1, 3)
    na = robust_na(renl)
    assert na.holds and len(na.certificates) == 2


def test_options_tighten_the_stock_price():
    rm = build_robust(_trinomial(TWO_VERTEX))
    renl = enlarge_robust(rm, 0)
    zeta = {0: ONE, 1: ZERO, 2: ZERO}
    assert robust_superhedge_options(renl, zeta, [], []).value == Q(1, 3)
    rep = robust_superhedge_options(renl, zeta, [{0: ONE, 1: ZERO, 2: ZERO}], [Q(1, 6)])
    assert rep.value < Q(1, 3)
    assert rep.value == rep.dual_value
    assert rep.positions[0] > ZERO


def test_options_overpriced_book_fails():
    rm = build_robust(_trinomial(TWO_VERTEX))
    renl = enlarge_robust(rm, 0)
    zeta = {0: ONE, 1: ZERO, 2: ZERO}
    # payoff >= 1 everywhere sold at 1/2: every measure prices it above
    with pytest.raises(SnaFailure):
        robust_superhedge_options(renl, zeta, [{0: ONE, 1: ONE, 2: ONE}], [Q(1, 2)])


def test_singleton_family_reproduces_classical():
    rm = build_robust(_binomial_put(INTERIOR))
    sub = robust_subhedge(enlarge_robust(rm, 1))
    sup = robust_superhedge_full(enlarge_robust(rm, 2))
    assert sub.price == subhedge(enlarge(rm.model, 1)).price
    assert sup.price == superhedge(enlarge(rm.model, 2)).price
    assert sub.gap == ZERO and sup.gap == ZERO


def test_robust_ftap_holds_with_submarkets():
    rm = build_robust(_binomial_put(INTERIOR))
    rep = robust_ftap(enlarge_robust(rm, 1), submarkets=True)
    assert rep.holds and rep.epsilon > ZERO
    assert rep.submarket_slacks is not None and len(rep.submarket_slacks) == 1


def test_robust_ftap_fails_on_sure_up():
    rep = robust_ftap(enlarge_robust(build_robust(_binomial(SURE_UP)), 0))
    assert not rep.holds and rep.epsilon is None


def test_robust_ftap_no_options_equals_domination_slack():
    renl = enlarge_robust(build_robust(_binomial(INTERIOR)), 0)
    na = robust_na(renl)
    rep = robust_ftap(renl)
    assert rep.epsilon == na.certificates[0].slack == Q(2, 3)


def test_ftap_transfer():
    rm = build_robust(_binomial_put(INTERIOR))
    low, high = ftap_transfer(rm)
    assert low.holds and high.holds


def _minimax_setup():
    rm = build_robust(_binomial_put(INTERIOR))
    renl = enlarge_robust(rm, 1)
    enl = renl.enl
    putv = {"r": ZERO, "u": ZERO, "d": Q(1, 2)}
    stream = {v: putv[enl.enode(v).base] for v in renl.supported_enodes()}
    return renl, enl, stream


def test_minimax_singleton():
    renl, _, stream = _minimax_setup()
    rep = verify_minimax(renl, [stream])
    # best stop is time 1: collects 1/2 on the down move, probability 1/2
    assert rep.value == Q(1, 4)
    assert rep.num_taus == 4


def test_minimax_two_vertices():
    renl, enl, stream = _minimax_setup()
    v1 = renl.vertex_measure((0,))
    v2 = {
        p: (Q(3, 4) if enl.epaths[p].base_index == 0 else Q(1, 4))
        * enl.clock_dist[enl.epaths[p].clocks]
        for p in range(enl.num_paths)
    }
    rep = verify_minimax(renl, [stream], [v1, v2])
    # the up-tilted vertex leaves only 1/4 mass on the down move
    assert rep.value == Q(1, 8)
    # a constant second stream shifts the value by that constant
    const = {v: Q(2, 7) for v in renl.supported_enodes()}
    rep2 = verify_minimax(renl, [stream, const], [v1, v2])
    assert rep2.value == rep.value + Q(2, 7)
