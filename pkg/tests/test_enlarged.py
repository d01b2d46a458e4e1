"""Enlarged space: forest shape, clock weights, and claim extension."""
from __future__ import annotations

import pytest

from amhedge.enlarged import enlarge, extend_claim
from amhedge.errors import ModelFormatError
from amhedge.rationals import ONE, Q, ZERO


def test_zero_clocks_is_base_tree(binomial):
    enl = enlarge(binomial, 0)
    assert enl.num_paths == 2
    assert len(enl.enodes) == 3
    assert [n.label for n in enl.enodes[:1]] == ["r"]
    assert enl.epaths[0].clocks == ()
    assert enl.weight(0) == Q(1, 2)


def test_one_clock_shape(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    # 2 base paths x 2 clock values
    assert enl.num_paths == 4
    # r splits by whether the clock has run: r|0 and r|*
    labels = {n.label for n in enl.enodes}
    assert labels == {"r|0", "r|*", "u|0", "u|1", "d|0", "d|1"}
    # the forest has one root per time-0 information atom
    assert len(enl.roots) == 2
    for r in enl.roots:
        assert enl.enode(r).time == 0
        assert len(enl.children[r]) == 2


def test_n_must_match_model(binomial_short_put):
    with pytest.raises(ModelFormatError):
        enlarge(binomial_short_put, 0)
    with pytest.raises(ModelFormatError):
        enlarge(binomial_short_put, 3)


def test_uniform_clock_weights(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    assert enl.clock_dist == {(0,): Q(1, 2), (1,): Q(1, 2)}
    assert sum(enl.weight(p) for p in range(enl.num_paths)) == ONE
    assert enl.weight(0) == Q(1, 4)


def test_skewed_clock_weights(binomial_short_put):
    enl = enlarge(binomial_short_put, 1, clock_weights="skewed")
    # proportional to 2^t over t in {0, 1}
    assert enl.clock_dist == {(0,): Q(1, 3), (1,): Q(2, 3)}


def test_explicit_clock_weights(binomial_short_put):
    enl = enlarge(binomial_short_put, 1, clock_weights={(0,): "1/4", (1,): "3/4"})
    assert enl.clock_dist[(1,)] == Q(3, 4)
    for bad in (
        {(0,): "1"},                      # misses (1,)
        {(0,): "0", (1,): "1"},           # not full support
        {(0,): "1/2", (1,): "1/4"},       # does not sum to 1
    ):
        with pytest.raises(ModelFormatError):
            enlarge(binomial_short_put, 1, clock_weights=bad)


def test_status_reveals_clock_at_its_time(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    for p in range(enl.num_paths):
        ep = enl.epaths[p]
        for t, v in enumerate(ep.node_seq):
            node = enl.enode(v)
            want = tuple(tk if tk <= t else None for tk in ep.clocks)
            assert node.status == want
            assert node.time == t


def test_short_value_reads_exercise_clock(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    put = {"r": ZERO, "u": ZERO, "d": Q(1, 2)}
    for p in range(enl.num_paths):
        ep = enl.epaths[p]
        base = binomial_short_put.tree.paths[ep.base_index]
        assert enl.short_value(0, p) == put[base[ep.clocks[0]]]


def test_extend_claim_sub_is_node_indexed(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    claim_at = extend_claim(enl, "sub")
    for v, node in enumerate(enl.enodes):
        assert claim_at[v] == binomial_short_put.claim.scalar(node.base)


def test_extend_claim_super_reads_last_clock(binomial_short_put):
    enl = enlarge(binomial_short_put, 2)
    target = extend_claim(enl, "super")
    for p in range(enl.num_paths):
        ep = enl.epaths[p]
        base = binomial_short_put.tree.paths[ep.base_index]
        assert target[p] == binomial_short_put.claim.scalar(base[ep.clocks[-1]])


def test_extend_claim_super_needs_extra_clock(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    with pytest.raises(ValueError):
        extend_claim(enl, "super")


def test_stock_step(two_period):
    enl = enlarge(two_period, 0)
    # path 0 = r -> u -> uu: increments +1 then +2
    assert enl.stock_step(0, 0) == (ONE,)
    assert enl.stock_step(0, 1) == (Q(2),)


def test_path_count_scales_with_clocks(two_period):
    # (T + 1)^n clock tuples per base path
    assert enlarge(two_period, 0).num_paths == 4
    assert enlarge(two_period, 1).num_paths == 12


def test_path_index_lookup(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    for p in range(enl.num_paths):
        ep = enl.epaths[p]
        assert enl.path_index(ep.base_index, ep.clocks) == p


def test_labels(binomial_short_put):
    enl = enlarge(binomial_short_put, 1)
    ep = enl.epaths[0]
    assert ep.label == f"p{ep.base_index}@" + ",".join(map(str, ep.clocks))
