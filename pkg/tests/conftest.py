"""Shared hand-built market models.

Every fixture here is small enough that its prices, slacks and
certificates can be derived by hand; tests freeze those derivations as
exact rationals.
"""
from __future__ import annotations

import pytest

from amhedge.market import MarketModel, load_model


def binomial_dict(**extra) -> dict:
    """Stock 1 -> {2, 1/2} with a call-like claim paying 1 on the up move."""
    data = {
        "horizon": 1,
        "nodes": [
            {"id": "r", "time": 0},
            {"id": "u", "time": 1, "parent": "r"},
            {"id": "d", "time": 1, "parent": "r"},
        ],
        "stock": {"dim": 1, "values": {"r": ["1"], "u": ["2"], "d": ["1/2"]}},
        "claim": {"values": {"r": "0", "u": "1", "d": "0"}},
        "weights": {"u": "1/2", "d": "1/2"},
    }
    data.update(extra)
    return data


@pytest.fixture
def binomial() -> MarketModel:
    # unique one-step martingale law: q(u) = 1/3, q(d) = 2/3
    return load_model(binomial_dict())


@pytest.fixture
def binomial_short_put() -> MarketModel:
    # shorted American put paying 1/2 at d, quoted at 1/4
    return load_model(binomial_dict(americans_short=[
        {"values": {"r": "0", "u": "0", "d": "1/2"}, "price": "1/4"},
    ]))


@pytest.fixture
def trinomial() -> MarketModel:
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
    })


@pytest.fixture
def two_period() -> MarketModel:
    """Recombining two-period binomial; unique law q(up) = 1/3 per step."""
    return load_model({
        "horizon": 2,
        "nodes": [
            {"id": "r", "time": 0},
            {"id": "u", "time": 1, "parent": "r"},
            {"id": "d", "time": 1, "parent": "r"},
            {"id": "uu", "time": 2, "parent": "u"},
            {"id": "ud", "time": 2, "parent": "u"},
            {"id": "du", "time": 2, "parent": "d"},
            {"id": "dd", "time": 2, "parent": "d"},
        ],
        "stock": {"dim": 1, "values": {
            "r": ["1"], "u": ["2"], "d": ["1/2"],
            "uu": ["4"], "ud": ["1"], "du": ["1"], "dd": ["1/4"],
        }},
        "claim": {"values": {
            "r": "0", "u": "1", "d": "0",
            "uu": "3", "ud": "0", "du": "0", "dd": "0",
        }},
        "weights": {"uu": "1/4", "ud": "1/4", "du": "1/4", "dd": "1/4"},
    })
