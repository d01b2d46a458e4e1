"""Model factories and the seeded verification sweep."""
from __future__ import annotations

import random

import pytest

from amhedge.campaign import (
    BOUNDARY_OFFSET,
    binomial_call,
    binomial_call_short_put,
    boundary_model,
    check_depth_zero,
    inject_arbitrage,
    node_interior,
    random_kernel_model,
    random_sna_model,
    random_stock,
    random_tree,
    run_campaign,
    strict_chain_market,
    trinomial_two_kernels,
)
from amhedge.enlarged import enlarge
from amhedge.hedging import check_sna
from amhedge.market import emit_model, load_model
from amhedge.measures import e2_chain, ftap_certificate
from amhedge.rationals import ONE, Q, ZERO
from amhedge.robust import enlarge_robust, robust_ftap


def test_fixture_markets_round_trip():
    for factory in (binomial_call, binomial_call_short_put,
                    strict_chain_market, trinomial_two_kernels):
        model = factory()
        again = load_model(emit_model(model))
        assert emit_model(again) == emit_model(model)


def test_short_put_slack_matches_hand_value():
    model = binomial_call_short_put()
    enl = enlarge(model, model.N)
    holds, cert = ftap_certificate(enl)
    assert holds and cert.slack == Q(1, 24)


def test_strict_chain_market_has_a_gap():
    model = strict_chain_market()
    chain = e2_chain(enlarge(model, model.N), enlarge(model, model.N + 1))
    assert chain.lower == Q(3, 4)
    assert chain.middle == Q(758717, 799680)
    assert chain.upper == Q(5879, 5880)
    assert chain.lower <= chain.middle < chain.upper
    assert chain.strict_upper


@pytest.mark.parametrize("seed", range(6))
def test_random_tree_shape(seed):
    rng = random.Random(seed)
    horizon = rng.choice([1, 2, 3])
    tree = random_tree(rng, horizon, max_branch=3)
    assert tree.horizon == horizon
    assert len(tree.children[tree.root]) >= 2
    for node in tree.nodes.values():
        if node.parent is not None:
            assert node.time == tree.nodes[node.parent].time + 1
        if node.time < horizon:
            assert tree.children[node.id]


@pytest.mark.parametrize("seed", range(6))
def test_random_stock_straddles_parent(seed):
    rng = random.Random(seed)
    tree = random_tree(rng, 2, max_branch=3)
    stock = random_stock(rng, tree, dim=2)
    for nid, kids in tree.children.items():
        if len(kids) < 2:
            continue
        base = stock.values[nid][0]
        moves = [stock.values[k][0] for k in kids]
        assert max(moves) > base > min(moves)
    for vals in stock.values.values():
        assert vals[0] > ZERO
        assert vals[1] == Q(2) + vals[0] / 2


def test_node_interior_is_martingale_and_positive():
    rng = random.Random(11)
    gm = random_sna_model(rng)
    laws = node_interior(gm.model)
    assert laws is not None
    tree = gm.model.tree
    for nid, law in laws.items():
        kids = tree.children[nid]
        assert set(law) == set(kids)
        assert sum(law.values()) == ONE
        assert all(q > ZERO for q in law.values())
        parent = gm.model.stock.values[nid]
        for d in range(gm.model.stock.dim):
            mean = sum(law[k] * gm.model.stock.values[k][d] for k in kids)
            assert mean == parent[d]


@pytest.mark.parametrize("seed", range(5))
def test_random_sna_model_holds(seed):
    gm = random_sna_model(random.Random(seed), seed=seed)
    sna = check_sna(enlarge(gm.model, gm.model.N))
    assert sna.holds and sna.epsilon > ZERO


@pytest.mark.parametrize("seed", range(5))
def test_inject_arbitrage_breaks_sna(seed):
    rng = random.Random(100 + seed)
    gm = random_sna_model(rng, require_option=True)
    broken, kind = inject_arbitrage(rng, gm)
    assert kind in {"european", "long", "short"}
    sna = check_sna(enlarge(broken, broken.N))
    assert not sna.holds


def test_boundary_model_pins_the_slack():
    rng = random.Random(21)
    gm = random_sna_model(rng, require_option=True)
    pinned, _ = boundary_model(random.Random(22), gm, ZERO)
    sna = check_sna(enlarge(pinned, pinned.N))
    assert not sna.holds and sna.epsilon == ZERO
    nudged, _ = boundary_model(random.Random(22), gm, BOUNDARY_OFFSET)
    sna2 = check_sna(enlarge(nudged, nudged.N))
    assert sna2.holds and ZERO < sna2.epsilon <= BOUNDARY_OFFSET


@pytest.mark.parametrize("seed", range(3))
def test_random_kernel_model_is_consistent(seed):
    rm, gm = random_kernel_model(random.Random(seed), seed=seed)
    rep = robust_ftap(enlarge_robust(rm, rm.model.N))
    assert rep.holds and rep.epsilon > ZERO


def test_depth_zero_market():
    assert check_depth_zero() == {"value": "7/4"}


def test_run_campaign_is_deterministic():
    first = run_campaign(5, models=3)
    second = run_campaign(5, models=3)
    assert first == second
    assert first["ok"] is True
    assert first["seed"] == 5
    assert first["counts"]["duality"] == 3
    assert first["strict_chain_gaps"] >= 1
    assert first["depth_zero"] == {"value": "7/4"}
    assert set(first["sections"]) == set(first["counts"])
