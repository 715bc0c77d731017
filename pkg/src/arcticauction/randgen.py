"""Random integer market instances for benchmarks and cross-validation."""

from __future__ import annotations

import random
from fractions import Fraction

from arcticauction.core import MarketInstance


def random_instance(
    n: int,
    rng: random.Random,
    max_value: int = 10,
    max_edges: int | None = None,
) -> MarketInstance:
    """Random instance with ``n`` nodes, budgets and utilities in [1, max_value].

    Buyers and goods split the nodes roughly in half; every buyer values at
    least one good and every good is valued, with extra edges added up to
    roughly two per node (or ``max_edges``).
    """
    if n < 2:
        raise ValueError("need at least one buyer and one good")
    n_buyers = max(1, n // 2)
    n_goods = n - n_buyers
    buyers = tuple(f"b{i + 1}" for i in range(n_buyers))
    goods = tuple(f"g{j + 1}" for j in range(n_goods))
    budgets = {b: Fraction(rng.randint(1, max_value)) for b in buyers}

    edges: set[tuple[str, str]] = set()
    for b in buyers:
        edges.add((b, rng.choice(goods)))
    for g in goods:
        if not any(e[1] == g for e in edges):
            edges.add((rng.choice(buyers), g))
    target = min(
        2 * n if max_edges is None else max_edges, n_buyers * n_goods
    )
    all_pairs = [(b, g) for b in buyers for g in goods]
    rng.shuffle(all_pairs)
    for pair in all_pairs:
        if len(edges) >= target:
            break
        edges.add(pair)

    utilities = {e: Fraction(rng.randint(1, max_value)) for e in sorted(edges)}
    return MarketInstance(
        buyers=buyers, goods=goods, budgets=budgets, utilities=utilities
    )
