"""Shared helpers for the test suite."""

from __future__ import annotations

from fractions import Fraction

import pytest

from arcticauction.core import MarketInstance, compute_stats


def make_instance(budgets, utilities) -> MarketInstance:
    """Shorthand: budgets {buyer: value}, utilities {(buyer, good): value}."""
    buyers = tuple(budgets)
    goods_seen = []
    for _, g in utilities:
        if g not in goods_seen:
            goods_seen.append(g)
    return MarketInstance(
        buyers=buyers,
        goods=tuple(goods_seen),
        budgets={b: Fraction(v) for b, v in budgets.items()},
        utilities={k: Fraction(v) for k, v in utilities.items()},
    )


def lean_sigma(inst: MarketInstance) -> Fraction:
    """A perturbation magnitude well inside the invariant bound but with a
    small denominator, keeping the halving solver's phase count down."""
    stats = compute_stats(inst)
    return Fraction(1, 4 * stats.n * stats.m) / stats.u_max


@pytest.fixture
def one_buyer_one_good():
    return make_instance({"b1": 1}, {("b1", "g1"): 2})
