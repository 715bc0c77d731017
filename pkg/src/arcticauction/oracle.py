"""Independent verification: certification, brute force, genericity checks.

Nothing here shares code paths with the scaling solvers beyond the basic
tree solve, so a certified answer really is checked against the market
definition rather than against the algorithm that produced it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from arcticauction.basic import SupportError, basic_solution
from arcticauction.core import MarketInstance, compute_stats
from arcticauction.errors import GenericityError
from arcticauction.graph import (
    Edge,
    MarketState,
    bang_per_buck,
    buyer_node,
    equality_graph,
    good_node,
)

BRUTE_FORCE_MAX_EDGES = 12
BRUTE_FORCE_MAX_NODES = 8


@dataclass
class Condition:
    """One checked equilibrium condition with its violations."""

    name: str
    ok: bool
    violations: list[str] = field(default_factory=list)


@dataclass
class Certificate:
    """Outcome of checking every equilibrium condition exactly."""

    conditions: list[Condition]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.conditions)

    def failed(self) -> list[str]:
        return [c.name for c in self.conditions if not c.ok]


@dataclass
class Equilibrium:
    """Certified output: prices, spending, refunds, derived quantities."""

    prices: dict[str, Fraction]
    spending: dict[Edge, Fraction]
    refunds: dict[str, Fraction]
    quantities: dict[Edge, Fraction]
    certificate: Certificate

    @classmethod
    def from_state(
        cls, inst: MarketInstance, state: MarketState, certificate: Certificate
    ) -> "Equilibrium":
        quantities = {
            e: v / state.prices[e[1]] for e, v in state.spending.items() if v != 0
        }
        refunds = {b: state.refunds.get(b, Fraction(0)) for b in inst.buyers}
        return cls(
            prices=dict(state.prices),
            spending={e: v for e, v in state.spending.items() if v != 0},
            refunds=refunds,
            quantities=quantities,
            certificate=certificate,
        )


def check_equilibrium(
    inst: MarketInstance,
    prices: dict[str, Fraction],
    spending: dict[Edge, Fraction],
    refunds: dict[str, Fraction],
    budgets: dict[str, Fraction] | None = None,
) -> Certificate:
    """Check the equilibrium conditions exactly; failures become entries.

    ``budgets`` overrides the instance budgets when certifying against a
    compressed instance (budgets reduced by committed refunds).  Besides
    the definitional conditions (budgets exhausted, goods cleared, spending
    on best bang-per-buck edges, refund complementarity) this also checks
    buyer optimality -- no spending below bang-per-buck one -- which rules
    out spurious fixed points the four literal conditions admit.
    """
    eff = dict(inst.budgets) if budgets is None else budgets
    for g in inst.goods:
        if prices.get(g, Fraction(0)) <= 0:
            raise ValueError(f"non-positive price for good {g}")

    conditions: list[Condition] = []

    refund_ok = Condition("refunds_nonnegative", True)
    cash_ok = Condition("budgets_exhausted", True)
    for b in inst.buyers:
        r = refunds.get(b, Fraction(0))
        if r < 0:
            refund_ok.ok = False
            refund_ok.violations.append(f"buyer {b}: refund {r}")
        spent = sum((v for (i, _), v in spending.items() if i == b), Fraction(0))
        cash = eff[b] - r - spent
        if cash != 0:
            cash_ok.ok = False
            cash_ok.violations.append(f"buyer {b}: leftover cash {cash}")
    conditions.append(refund_ok)
    conditions.append(cash_ok)

    clearing = Condition("market_clearing", True)
    for g in inst.goods:
        backorder = (
            sum((v for (_, j), v in spending.items() if j == g), Fraction(0))
            - prices[g]
        )
        if backorder != 0:
            clearing.ok = False
            clearing.violations.append(f"good {g}: backorder {backorder}")
    conditions.append(clearing)

    eq_edges = equality_graph(inst, prices)
    support = Condition("spending_on_equality_edges", True)
    optimality = Condition("buyer_optimality", True)
    alphas = {b: bang_per_buck(inst, prices, b) for b in inst.buyers}
    for edge, value in spending.items():
        if value < 0:
            support.ok = False
            support.violations.append(f"edge {edge}: negative spending {value}")
        if value > 0 and edge not in eq_edges:
            support.ok = False
            support.violations.append(f"edge {edge}: spending off equality graph")
        if value > 0 and alphas[edge[0]] < 1:
            optimality.ok = False
            optimality.violations.append(
                f"edge {edge}: spending at bang-per-buck below one"
            )
    conditions.append(support)

    complementarity = Condition("refund_complementarity", True)
    for b in inst.buyers:
        r = refunds.get(b, Fraction(0))
        if r > 0 and alphas[b] > 1:
            complementarity.ok = False
            complementarity.violations.append(
                f"buyer {b}: refund {r} with bang-per-buck {alphas[b]} > 1"
            )
    conditions.append(complementarity)
    conditions.append(optimality)

    return Certificate(conditions=conditions)


def certify_state(inst: MarketInstance, state: MarketState) -> Certificate:
    return check_equilibrium(inst, state.prices, state.spending, state.refunds)


def _cycle_free_subsets(inst: MarketInstance, edges: list[Edge]) -> "itertools.chain":
    """All cycle-free edge subsets, by size then lexicographic order."""

    def is_forest(subset: tuple[Edge, ...]) -> bool:
        parent: dict[object, object] = {}

        def find(x: object) -> object:
            while parent.get(x, x) is not x:
                parent[x] = parent.get(parent[x], parent[x])
                x = parent[x]
            return x

        for b, g in subset:
            rb, rg = find(buyer_node(b)), find(good_node(g))
            if rb == rg:
                return False
            parent[rb] = rg
        return True

    return itertools.chain.from_iterable(
        (s for s in itertools.combinations(edges, size) if is_forest(s))
        for size in range(len(edges) + 1)
    )


def brute_force_equilibrium(inst: MarketInstance) -> Equilibrium:
    """Find the equilibrium by trying every cycle-free support.

    Guarded to small instances (the candidate count is exponential in the
    edge count).  On a generic instance exactly one support passes; zero or
    several passing supports mean the instance is degenerate and a fresh
    perturbation is needed.
    """
    stats = compute_stats(inst)
    if stats.m > BRUTE_FORCE_MAX_EDGES or stats.n > BRUTE_FORCE_MAX_NODES:
        raise ValueError(
            f"instance too large for enumeration: n={stats.n}, m={stats.m}"
        )
    edges = inst.edges()
    passing: list[tuple[set[Edge], MarketState, Certificate]] = []
    for subset in _cycle_free_subsets(inst, edges):
        try:
            state = basic_solution(inst, set(subset))
        except (SupportError, GenericityError):
            continue
        cert = certify_state(inst, state)
        if cert.ok:
            passing.append((set(subset), state, cert))
    if len(passing) != 1:
        raise GenericityError(
            f"{len(passing)} supports pass the equilibrium check;"
            " expected exactly one on a generic instance"
        )
    _, state, cert = passing[0]
    return Equilibrium.from_state(inst, state, cert)


@dataclass
class GenericityReport:
    """Result of checking the two generic-position properties at a price vector."""

    is_forest: bool
    offending_cycle: list[Edge] | None
    critical_buyers_per_component: dict[str, int]

    @property
    def ok(self) -> bool:
        return self.is_forest and all(
            c <= 1 for c in self.critical_buyers_per_component.values()
        )


def check_genericity(
    inst: MarketInstance, prices: dict[str, Fraction]
) -> GenericityReport:
    """Verify the equality graph is a forest with at most one critical buyer
    per connected component."""
    eq_edges = sorted(
        equality_graph(inst, prices),
        key=lambda e: (inst.buyer_pos[e[0]], inst.good_pos[e[1]]),
    )
    parent: dict[object, object] = {}

    def find(x: object) -> object:
        root = x
        while parent.get(root, root) is not root:
            root = parent[root]
        while parent.get(x, x) is not x:
            parent[x], x = root, parent[x]
        return root

    adjacency: dict[object, list[tuple[object, Edge]]] = {}
    is_forest = True
    offending: list[Edge] | None = None
    for b, g in eq_edges:
        nb, ng = buyer_node(b), good_node(g)
        rb, rg = find(nb), find(ng)
        if rb == rg and is_forest:
            is_forest = False
            offending = _recover_cycle(adjacency, nb, ng, (b, g))
        else:
            parent[rb] = rg
        adjacency.setdefault(nb, []).append((ng, (b, g)))
        adjacency.setdefault(ng, []).append((nb, (b, g)))

    critical: dict[str, int] = {}
    for b in inst.buyers:
        if bang_per_buck(inst, prices, b) == 1:
            root = find(buyer_node(b))
            key = f"{root[0]}:{root[1]}"
            critical[key] = critical.get(key, 0) + 1
    return GenericityReport(
        is_forest=is_forest,
        offending_cycle=offending,
        critical_buyers_per_component=critical,
    )


def _recover_cycle(
    adjacency: dict[object, list[tuple[object, Edge]]],
    start: object,
    goal: object,
    closing: Edge,
) -> list[Edge]:
    """Path start..goal in the already-inserted edges, plus the closing edge."""
    from collections import deque

    queue = deque([start])
    via: dict[object, tuple[object, Edge]] = {}
    seen = {start}
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nxt, edge in adjacency.get(node, []):
            if nxt not in seen:
                seen.add(nxt)
                via[nxt] = (node, edge)
                queue.append(nxt)
    cycle = [closing]
    node = goal
    while node != start:
        node, edge = via[node]
        cycle.append(edge)
    return cycle
