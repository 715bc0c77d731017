"""The halving-scale solver.

The algorithm maintains a state (prices, spending, refunds) that is
feasible at granularity ``delta``: spending sits on best bang-per-buck
edges in multiples of ``delta``, and every raised good is oversubscribed by
at most ``delta``.  An inner loop pushes each buyer's uncommitted cash
below ``delta`` -- by refunding buyers whose bang-per-buck is at most one
and by price-raise-then-augment steps for the rest -- and then ``delta``
halves, with a small repair keeping feasibility.  Once ``delta`` is below
the denominator floor of the instance, the support of the equilibrium is
exactly the set of edges spending more than ``4 * n * delta``, and the
equilibrium is recovered from it by a tree solve.

Each inner iteration lowers the integer potential (the sum of
``floor(cash / delta)``) by exactly one, which bounds every phase by ``n``
iterations; both facts are asserted at run time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from arcticauction.basic import basic_solution, recover_support
from arcticauction.core import InstanceStats, MarketInstance, ceil_log2, compute_stats
from arcticauction.errors import GenericityError, SolverError
from arcticauction.graph import (
    Edge,
    MarketState,
    Node,
    ResidualNetwork,
    abundant_edges,
    active_set,
    bang_per_buck,
    buyer_node,
    good_node,
    state_alphas,
    state_equality_graph,
)
from arcticauction.oracle import Equilibrium, certify_state, check_genericity
from arcticauction.trace import PhaseTrace, TraceRow


@dataclass
class ScalingState:
    """Mutable solver state: the market triple plus the scaling context.

    ``initial_prices`` are frozen at initialization; the backorder bounds
    only apply to goods whose price has been raised above them.
    ``exempt_edges`` and ``allowed_deficit`` are only populated by the
    strongly polynomial solver after a compressed restart: exempt edges
    carry values that are not multiples of ``delta`` (and need residual
    capacity ``delta`` to serve as backward arcs), and flagged goods may
    temporarily hold a small negative backorder until one augmentation
    repairs them.
    """

    market: MarketState
    delta: Fraction
    initial_prices: dict[str, Fraction]
    exempt_edges: set[Edge] = field(default_factory=set)
    allowed_deficit: dict[str, Fraction] = field(default_factory=dict)


@dataclass(frozen=True)
class StopEvent:
    """Earliest event halting a price raise, at exact multiplier ``q``."""

    kind: str  # new_equality_edge | good_backorder_zero | buyer_critical
    subject: object
    multiplier: Fraction


def initialize(inst: MarketInstance) -> ScalingState:
    """Coarsest-scale start: zero spending, zero refunds, low prices.

    The initial scale is the largest budget.  Initial prices must sit below
    the equilibrium prices (they only ever rise): a buyer who ends up with
    bang-per-buck above one spends her whole budget, which supports every
    good she values at ``u * budget / (n * total-utility)``, while a buyer
    who ends up at bang-per-buck at most one supports it at the utility
    itself.  The smaller of the two is a valid floor either way, so each
    good starts at the largest such floor over the buyers valuing it.  The
    utility floor is halved so no buyer starts at bang-per-buck exactly
    one, which would send her straight into refunds and leave the good
    unsold forever.
    """
    stats = compute_stats(inst)
    prices: dict[str, Fraction] = {}
    row_total = {
        b: sum((inst.utilities[(b, g)] for g in inst.goods_of(b)), Fraction(0))
        for b in inst.buyers
    }
    for g in inst.goods:
        best = max(
            min(
                inst.utilities[(b, g)] * inst.budgets[b] / (stats.n * row_total[b]),
                inst.utilities[(b, g)] / 2,
            )
            for b in inst.buyers_of(g)
        )
        prices[g] = best
    market = MarketState(prices=prices, spending={}, refunds={})
    return ScalingState(market=market, delta=stats.e_max, initial_prices=dict(prices))


def network(inst: MarketInstance, ss: ScalingState) -> ResidualNetwork:
    """Residual network; exempt edges need capacity ``delta`` to reverse."""
    backward = {
        e
        for e, v in ss.market.spending.items()
        if v > 0 and (e not in ss.exempt_edges or v >= ss.delta)
    }
    return ResidualNetwork(
        inst=inst,
        forward_arcs=state_equality_graph(inst, ss.market),
        backward_arcs=backward,
    )


def is_delta_feasible(inst: MarketInstance, ss: ScalingState) -> tuple[bool, list[str]]:
    """Check all feasibility conditions exactly; collect violations."""
    violations: list[str] = []
    market = ss.market
    for b in inst.buyers:
        if market.refunds.get(b, Fraction(0)) < 0:
            violations.append(f"negative refund at buyer {b}")
        if market.effective_cash(inst, b) < 0:
            violations.append(f"negative effective cash at buyer {b}")
    for g in inst.goods:
        price = market.prices[g]
        if price < 0:
            violations.append(f"negative price at good {g}")
        if price > ss.initial_prices[g]:
            backorder = market.backorder(g)
            floor = -ss.allowed_deficit.get(g, Fraction(0))
            if backorder < floor:
                violations.append(f"backorder {backorder} below bound at good {g}")
            if backorder > ss.delta:
                violations.append(f"backorder {backorder} above delta at good {g}")
    eq_edges = state_equality_graph(inst, market)
    delta = ss.delta
    for edge, value in market.spending.items():
        if value < 0:
            violations.append(f"negative spending on {edge}")
        if value > 0:
            if edge not in eq_edges:
                violations.append(f"spending off equality graph on {edge}")
            if edge not in ss.exempt_edges and (
                value.numerator * delta.denominator
            ) % (value.denominator * delta.numerator) != 0:
                violations.append(f"spending on {edge} not a multiple of delta")
    return (not violations, violations)


def is_delta_optimal(inst: MarketInstance, ss: ScalingState) -> bool:
    """All effective cash strictly below the scale."""
    return all(
        ss.market.effective_cash(inst, b) < ss.delta for b in inst.buyers
    )


def potential(inst: MarketInstance, ss: ScalingState) -> int:
    """Sum over buyers of ``floor(cash / delta)``; drops by one per step."""
    total = 0
    for b in inst.buyers:
        cash = ss.market.effective_cash(inst, b)
        total += cash // ss.delta
    return int(total)


def update_price_star(
    inst: MarketInstance, ss: ScalingState, root: str
) -> StopEvent:
    """Scale active-good prices by the smallest multiplier firing an event.

    Candidate events, each an exact root of a linear equation in the
    multiplier ``q``: a new equality edge from an active buyer to an
    inactive good, an active good's backorder reaching zero, or an active
    buyer's bang-per-buck reaching one.  Ties break by that event order,
    then by canonical subject.  Prices are updated in place.
    """
    market = ss.market
    net = network(inst, ss)
    active = active_set(net, [buyer_node(root)])
    active_buyers = sorted(
        (name for kind, name in active if kind == "B"),
        key=lambda b: inst.buyer_pos[b],
    )
    active_goods = sorted(
        (name for kind, name in active if kind == "G"),
        key=lambda g: inst.good_pos[g],
    )
    active_good_set = set(active_goods)
    all_alphas = state_alphas(inst, market)
    alphas = {b: all_alphas[b] for b in active_buyers}

    candidates: list[tuple[Fraction, int, tuple, str, object]] = []
    for b in active_buyers:
        alpha = alphas[b]
        for g in inst.goods_of(b):
            if g in active_good_set:
                continue
            q = alpha * market.prices[g] / inst.utilities[(b, g)]
            candidates.append(
                (
                    q,
                    0,
                    (inst.buyer_pos[b], inst.good_pos[g]),
                    "new_equality_edge",
                    (b, g),
                )
            )
    for g in active_goods:
        inflow = market.inflow(g)
        q = inflow / market.prices[g]
        candidates.append((q, 1, (inst.good_pos[g],), "good_backorder_zero", g))
    for b in active_buyers:
        if alphas[b] > 1:
            candidates.append((alphas[b], 2, (inst.buyer_pos[b],), "buyer_critical", b))
    if not candidates:
        raise SolverError("price raise has no stopping event")
    q, _, _, kind, subject = min(candidates)
    if q < 1:
        raise SolverError(f"stopping event at multiplier {q} < 1")
    market.scale_prices(active_goods, q)
    return StopEvent(kind=kind, subject=subject, multiplier=q)


def _augment(ss: ScalingState, path: list[Node], delta: Fraction) -> None:
    """Shift ``delta`` along a residual path (forward +, backward -)."""
    for a, b in zip(path, path[1:]):
        if a[0] == "B" and b[0] == "G":
            ss.market.add_spending((a[1], b[1]), delta)
        elif a[0] == "G" and b[0] == "B":
            ss.market.add_spending((b[1], a[1]), -delta)
        else:
            raise SolverError("augmenting path does not alternate sides")


def price_and_augment(inst: MarketInstance, ss: ScalingState) -> tuple[str, str]:
    """One price-raise-and-augment round; returns (step kind, subject).

    The root is the canonically smallest buyer with cash at least ``delta``
    and bang-per-buck above one.  Prices on the root's active set rise
    until some active buyer becomes critical or some active good stops
    being oversubscribed; one unit of ``delta`` then flows from the root to
    that terminal (a critical buyer books it as a refund).
    """
    market = ss.market
    alphas = state_alphas(inst, market)
    roots = [
        b
        for b in inst.buyers
        if market.effective_cash(inst, b) >= ss.delta and alphas[b] > 1
    ]
    if not roots:
        raise SolverError("no eligible root buyer for price-and-augment")
    root = roots[0]

    while True:
        net = network(inst, ss)
        active = active_set(net, [buyer_node(root)])
        alphas = state_alphas(inst, market)
        critical = sorted(
            (name for kind, name in active if kind == "B" and alphas[name] == 1),
            key=lambda b: inst.buyer_pos[b],
        )
        exhausted = sorted(
            (
                name
                for kind, name in active
                if kind == "G" and market.backorder(name) <= 0
            ),
            key=lambda g: inst.good_pos[g],
        )
        if critical or exhausted:
            break
        update_price_star(inst, ss, root)

    if critical:
        terminal = critical[0]
        path = net.path_to([buyer_node(root)], buyer_node(terminal))
        _augment(ss, path, ss.delta)
        market.add_refund(terminal, ss.delta)
        return "augment_buyer", terminal
    terminal = exhausted[0]
    path = net.path_to([buyer_node(root)], good_node(terminal))
    _augment(ss, path, ss.delta)
    return "augment_good", terminal


def refund_step(inst: MarketInstance, ss: ScalingState, buyer: str) -> None:
    """Book one ``delta`` of a weakly-uninterested buyer's cash as refund."""
    alpha = state_alphas(inst, ss.market)[buyer]
    cash = ss.market.effective_cash(inst, buyer)
    if alpha > 1 or cash < ss.delta:
        raise SolverError(
            f"refund step preconditions violated at {buyer}:"
            f" bang-per-buck {alpha}, cash {cash}"
        )
    ss.market.add_refund(buyer, ss.delta)


def inner_step(inst: MarketInstance, ss: ScalingState) -> tuple[str, str]:
    """One inner-loop iteration: refund step if possible, else augment."""
    alphas = state_alphas(inst, ss.market)
    refundable = [
        b
        for b in inst.buyers
        if ss.market.effective_cash(inst, b) >= ss.delta and alphas[b] <= 1
    ]
    if refundable:
        refund_step(inst, ss, refundable[0])
        return "refund", refundable[0]
    return price_and_augment(inst, ss)


def halve_and_repair(inst: MarketInstance, ss: ScalingState) -> None:
    """Halve the scale; bleed backorders above the new scale back down.

    For each good oversubscribed beyond the halved scale, the canonically
    smallest buyer with enough spending on it gives half the old scale
    back.  The repaired state is feasible at the new scale.
    """
    if not is_delta_optimal(inst, ss):
        raise SolverError("halving requires an optimal state")
    half = ss.delta / 2
    for g in inst.goods:
        if ss.market.backorder(g) > half:
            donors = [
                b
                for b in inst.buyers
                if ss.market.spending.get((b, g), Fraction(0)) >= half
            ]
            if not donors:
                raise SolverError(f"oversubscribed good {g} has no donor")
            ss.market.add_spending((donors[0], g), -half)
    ss.delta = half


def run_inner_loop(
    inst: MarketInstance,
    ss: ScalingState,
    stats: InstanceStats,
    trace: PhaseTrace,
    phase: int,
    check_iteration_bound: bool = True,
) -> None:
    """Drive the state to optimality, asserting the potential discipline."""
    iterations = 0
    while not is_delta_optimal(inst, ss):
        phi_before = potential(inst, ss)
        kind, subject = inner_step(inst, ss)
        phi_after = potential(inst, ss)
        if phi_after != phi_before - 1:
            raise SolverError(
                f"potential moved {phi_before} -> {phi_after} in one step"
            )
        ok, violations = is_delta_feasible(inst, ss)
        if not ok:
            raise SolverError(f"infeasible after {kind} at {subject}: {violations}")
        trace.add_row(
            TraceRow(
                phase=phase,
                delta=ss.delta,
                kind=kind,
                subject=str(subject),
                phi_before=phi_before,
                phi_after=phi_after,
            )
        )
        iterations += 1
        if check_iteration_bound and iterations > stats.n:
            raise SolverError("phase exceeded its iteration bound")


def check_phase_invariants(
    stats: InstanceStats,
    prev_start: dict[Edge, Fraction],
    end: dict[Edge, Fraction],
    prev_abundant: set[Edge],
    next_abundant: set[Edge],
    delta: Fraction,
) -> None:
    """Per-phase drift bound and abundance persistence."""
    drift_bound = stats.n * delta
    for edge in set(prev_start) | set(end):
        change = abs(end.get(edge, Fraction(0)) - prev_start.get(edge, Fraction(0)))
        if change > drift_bound:
            raise SolverError(f"edge {edge} drifted {change} > {drift_bound}")
    missing = prev_abundant - next_abundant
    if missing:
        raise SolverError(f"abundant edges lost: {sorted(missing)}")


def run_weak(inst: MarketInstance) -> tuple[Equilibrium, PhaseTrace]:
    """Run the halving-scale algorithm to a certified equilibrium.

    Raises :class:`GenericityError` when the instance shows a degeneracy
    mid-run (the driver retries with a new perturbation seed) and
    :class:`SolverError` on any internal invariant violation.
    """
    stats = compute_stats(inst)
    ss = initialize(inst)
    trace = PhaseTrace(algorithm="weak")
    stop_below = Fraction(1, 8 * stats.n) / stats.d_bound
    max_phases = ceil_log2(stats.e_max * 8 * stats.n * stats.d_bound) + 1

    phase = 0
    entry = "init"
    while True:
        report = check_genericity(inst, ss.market.prices)
        if not report.ok:
            raise GenericityError(f"degenerate prices at phase {phase}")
        phi = potential(inst, ss)
        if phi > stats.n:
            raise SolverError(f"phase {phase} starts with potential {phi} > n")
        current_abundant = abundant_edges(ss.market, stats.n, ss.delta)
        if phase > 0:
            prev = trace.phases[-1]
            check_phase_invariants(
                stats,
                prev.spending_start,
                prev.spending_end or {},
                prev.abundant_start,
                current_abundant,
                prev.delta,
            )
        trace.abundant_discovered |= current_abundant
        trace.begin_phase(
            phase,
            ss.delta,
            entry,
            phi,
            ss.market.spending,
            current_abundant,
            prices=ss.market.prices,
            refunds=ss.market.refunds,
        )
        run_inner_loop(inst, ss, stats, trace, phase)
        trace.end_phase(ss.market.spending)

        if ss.delta < stop_below:
            support = recover_support(ss.market, stats.n, ss.delta)
            final = basic_solution(inst, support)
            certificate = certify_state(inst, final)
            if not certificate.ok:
                raise SolverError(
                    "recovered support fails certification: "
                    + ", ".join(certificate.failed())
                )
            return Equilibrium.from_state(inst, final, certificate), trace

        halve_and_repair(inst, ss)
        phase += 1
        entry = "halve"
        if phase > max_phases:
            raise SolverError("phase budget exceeded")
