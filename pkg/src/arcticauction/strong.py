"""The committed-refund solver with restart jumps.

The halving solver needs a number of phases that grows with the bit size
of the data.  This solver gets by with a data-independent number of phases
by committing refunds early -- once a buyer's bang-per-buck hits one, part
of her remaining cash is irrevocably booked as refund and removed from her
effective budget -- and by a restart subroutine that, whenever the current
scale stops forcing progress, either promises a new abundant edge within a
logarithmic number of phases (lowering only a threshold) or jumps straight
to a much smaller scale with a rebuilt allocation supported on the
abundant forest.

Progress is measured in abundant edges (they persist once discovered, and
the equilibrium support has fewer than ``n`` of them) and in buyers
permanently reaching bang-per-buck one.  Termination is detected by
recomputing the basic solution of the abundant support each round and
checking it against the compressed instance's equilibrium conditions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from arcticauction.basic import SupportError, basic_solution, solve_tree_flow
from arcticauction.core import InstanceStats, MarketInstance, compute_stats
from arcticauction.errors import GenericityError, SolverError
from arcticauction.graph import (
    Component,
    Edge,
    MarketState,
    Node,
    ResidualNetwork,
    abundant_edges,
    active_set,
    bang_per_buck,
    buyer_node,
    components_of_abundant_graph,
    equality_graph,
    good_node,
    state_alphas,
)
from arcticauction.oracle import (
    Certificate,
    Equilibrium,
    check_equilibrium,
    check_genericity,
)
from arcticauction.trace import PhaseTrace, RestartRecord, TraceRow
from arcticauction.weak import (
    ScalingState,
    halve_and_repair,
    initialize,
    is_delta_feasible,
    network,
    potential,
    run_inner_loop,
)

logger = logging.getLogger(__name__)


def surplus(inst: MarketInstance, state: MarketState, component: Component) -> Fraction:
    """Effective budgets of the component's buyers minus its good prices."""
    return component.surplus(inst, state)


def component_key(component: Component) -> str:
    """Stable label for trace output."""
    node = component.nodes()[0]
    return f"{node[0]}:{node[1]}"


def fertile_components(
    inst: MarketInstance,
    ss: ScalingState,
    components: list[Component],
) -> list[tuple[Component, str]]:
    """Components guaranteed to force progress at the current scale.

    A singleton buyer qualifies while her bang-per-buck exceeds one and she
    still holds more than ``delta / (3 n^2)`` of cash; any component
    qualifies once its surplus is at most ``-delta / (3 n^2)``.
    """
    n = len(inst.buyers) + len(inst.goods)
    margin = ss.delta / (3 * n * n)
    alphas = state_alphas(inst, ss.market)
    out: list[tuple[Component, str]] = []
    for comp in components:
        if comp.is_singleton() and comp.buyers:
            b = comp.buyers[0]
            if alphas[b] > 1 and ss.market.effective_cash(inst, b) > margin:
                out.append((comp, "singleton_cash"))
                continue
        if surplus(inst, ss.market, comp) <= -margin:
            out.append((comp, "negative_surplus"))
    return out


def commit_refund(
    inst: MarketInstance, state: MarketState, buyer: str, amount: Fraction
) -> None:
    """Irrevocably book part of a critical buyer's cash as refund.

    Only legal at bang-per-buck exactly one; prices, spending, and hence
    the equality graph and abundant set are untouched.
    """
    if bang_per_buck(inst, state.prices, buyer) != 1:
        raise SolverError(f"commit at {buyer} without bang-per-buck one")
    cash = state.effective_cash(inst, buyer)
    if amount < 0 or amount > cash:
        raise SolverError(f"commit of {amount} exceeds cash {cash} at {buyer}")
    state.add_refund(buyer, amount)


@dataclass
class SpecialPriceResult:
    prices: dict[str, Fraction]
    refunds: dict[str, Fraction]
    iterations: int


def special_price(
    inst: MarketInstance,
    ss: ScalingState,
    components: list[Component],
    root_component: Component,
    target: Fraction,
) -> SpecialPriceResult:
    """Raise prices on the root component's active set until its surplus
    falls to ``target`` or some component nears the barrier.

    Spending stays frozen; only a private copy of prices and refunds moves.
    Four events can end an iteration: a new equality edge from an active
    buyer to an inactive good (the active set then grows), the root surplus
    reaching the target, some component's surplus reaching the barrier
    ``-root surplus / (2 n^2)``, or an active buyer with positive cash
    turning critical, in which case as much of her cash is committed as the
    target and barrier allow.  Runs for at most ``n + |B|`` iterations.
    """
    stats = compute_stats(inst)
    n = stats.n
    market = ss.market
    if not root_component.buyers or not root_component.goods:
        # singleton root: surplus is constant (<= 0 for a lone good), so
        # the loop below would never run; return the state unchanged
        if surplus(inst, market, root_component) > target:
            raise SolverError("cannot raise prices on a goodless component")
    prices = dict(market.prices)
    refunds = dict(market.refunds)
    abundant = abundant_edges(market, n, ss.delta)
    barrier_scale = Fraction(2 * n * n)

    spent = {b: market.spent_by(b) for b in inst.buyers}

    def eff_budget(b: str) -> Fraction:
        return inst.budgets[b] - refunds.get(b, Fraction(0))

    def cash(b: str) -> Fraction:
        return eff_budget(b) - spent[b]

    def comp_surplus(comp: Component) -> Fraction:
        total = sum((eff_budget(b) for b in comp.buyers), Fraction(0))
        return total - sum((prices[g] for g in comp.goods), Fraction(0))

    max_iterations = n + len(inst.buyers)
    iterations = 0
    prev_eq: set[Edge] | None = None
    prev_active_buyers: set[str] = set()
    prev_active_goods: set[str] = set()
    while True:
        root_surplus = comp_surplus(root_component)
        if root_surplus <= target:
            break
        barrier = -root_surplus / barrier_scale
        if any(comp_surplus(j) <= barrier for j in components):
            break
        if iterations >= max_iterations:
            raise SolverError("price raising exceeded its iteration bound")
        iterations += 1

        eq = equality_graph(inst, prices)
        if prev_eq is not None:
            for edge in eq - prev_eq:
                if edge[0] not in prev_active_buyers and edge[1] in prev_active_goods:
                    logger.warning(
                        "anomalous equality edge from inactive buyer %s to"
                        " active good %s",
                        edge[0],
                        edge[1],
                    )
        net = ResidualNetwork(inst=inst, forward_arcs=eq, backward_arcs=abundant)
        active = active_set(net, root_component.nodes())
        active_buyer_set = {name for kind, name in active if kind == "B"}
        active_good_set = {name for kind, name in active if kind == "G"}
        for comp in components:
            for side, active_side in (
                (set(comp.goods), active_good_set),
                (set(comp.buyers), active_buyer_set),
            ):
                touched = side & active_side
                if touched and touched != side:
                    raise SolverError("component partially active")
        prev_eq = eq
        prev_active_buyers = active_buyer_set
        prev_active_goods = active_good_set

        alphas = {
            b: bang_per_buck(inst, prices, b) for b in sorted(active_buyer_set)
        }
        root_goods_price = sum(
            (prices[g] for g in root_component.goods), Fraction(0)
        )
        root_budget = sum(
            (eff_budget(b) for b in root_component.buyers), Fraction(0)
        )

        candidates: list[tuple[Fraction, int, tuple, str, object]] = []
        # (1) new equality edge: active buyer toward an inactive good
        for b in sorted(active_buyer_set, key=lambda x: inst.buyer_pos[x]):
            for g in inst.goods_of(b):
                if g in active_good_set:
                    continue
                q = alphas[b] * prices[g] / inst.utilities[(b, g)]
                if q >= 1:
                    candidates.append(
                        (q, 1, (inst.buyer_pos[b], inst.good_pos[g]), "edge", (b, g))
                    )
        # (2) root surplus reaches the target
        q2 = (root_budget - target) / root_goods_price
        candidates.append((q2, 2, (), "target", None))
        # (3) some component reaches the barrier
        for comp in components:
            comp_budget = sum((eff_budget(b) for b in comp.buyers), Fraction(0))
            comp_price = sum((prices[g] for g in comp.goods), Fraction(0))
            goods_active = bool(comp.goods) and comp.goods[0] in active_good_set
            if goods_active or not comp.goods:
                num = comp_budget + root_budget / barrier_scale
                den = comp_price + root_goods_price / barrier_scale
                q = num / den
            else:
                s_j = comp_budget - comp_price
                q = (root_budget + barrier_scale * s_j) / root_goods_price
            if q >= 1:
                candidates.append((q, 3, (component_key(comp),), "barrier", comp))
        # (4) an active buyer with positive cash turns critical
        for b in sorted(active_buyer_set, key=lambda x: inst.buyer_pos[x]):
            if alphas[b] >= 1 and cash(b) > 0:
                candidates.append(
                    (alphas[b], 4, (inst.buyer_pos[b],), "critical", b)
                )

        q, _, _, kind, subject = min(
            candidates, key=lambda c: (c[0], c[1], c[2])
        )
        if q < 1:
            raise SolverError(f"price-raise event at multiplier {q} < 1")
        for g in active_good_set:
            prices[g] *= q

        if kind == "critical":
            b = subject
            root_surplus = comp_surplus(root_component)
            if b in root_component.buyers:
                slack = root_surplus - target
            else:
                container = next(c for c in components if b in c.buyers)
                slack = comp_surplus(container) + root_surplus / barrier_scale
            amount = min(cash(b), slack)
            if amount < 0:
                raise SolverError(f"negative commit amount {amount}")
            if bang_per_buck(inst, prices, b) != 1:
                raise SolverError("critical event fired off bang-per-buck one")
            refunds[b] = refunds.get(b, Fraction(0)) + amount

    return SpecialPriceResult(prices=prices, refunds=refunds, iterations=iterations)


@dataclass
class AuxNetwork:
    """Weighted digraph whose best path products match price ratios.

    Forward arcs carry the utility, backward arcs (only on abundant edges)
    its reciprocal; at any feasible state no directed cycle multiplies to
    more than one, so best path products are well defined.
    """

    inst: MarketInstance
    arcs: list[tuple[Node, Node, Fraction]]

    @classmethod
    def build(cls, inst: MarketInstance, abundant: set[Edge]) -> "AuxNetwork":
        arcs: list[tuple[Node, Node, Fraction]] = []
        for (b, g), u in sorted(
            inst.utilities.items(),
            key=lambda kv: (inst.buyer_pos[kv[0][0]], inst.good_pos[kv[0][1]]),
        ):
            arcs.append((buyer_node(b), good_node(g), u))
        for b, g in sorted(
            abundant, key=lambda e: (inst.buyer_pos[e[0]], inst.good_pos[e[1]])
        ):
            arcs.append((good_node(g), buyer_node(b), 1 / inst.utilities[(b, g)]))
        return cls(inst=inst, arcs=arcs)

    def node_count(self) -> int:
        return len(self.inst.buyers) + len(self.inst.goods)


def max_multiplier(aux: AuxNetwork, source: Node, sink: Node) -> Fraction | None:
    """Maximum product of arc weights over directed paths source -> sink.

    Computed by rounds of multiplicative relaxation; a round beyond the
    longest simple path still improving something certifies a cycle with
    product above one, which a sound state never contains.  Returns None
    when the sink is unreachable; the empty path gives one for the source
    itself.
    """
    n = aux.node_count()
    best: dict[Node, Fraction] = {source: Fraction(1)}
    for _ in range(n - 1):
        changed = False
        for tail, head, weight in aux.arcs:
            if tail in best:
                value = best[tail] * weight
                if value > best.get(head, Fraction(-1)):
                    best[head] = value
                    changed = True
        if not changed:
            break
    else:
        for tail, head, weight in aux.arcs:
            if tail in best and best[tail] * weight > best.get(head, Fraction(-1)):
                raise GenericityError("cycle with weight product above one")
    return best.get(sink)


def assert_cycle_bound(aux: AuxNetwork) -> None:
    """Verify no directed cycle has weight product above one."""
    best: dict[Node, Fraction] = {}
    for tail, head, _ in aux.arcs:
        best.setdefault(tail, Fraction(1))
        best.setdefault(head, Fraction(1))
    n = max(aux.node_count(), 1)
    for round_index in range(n):
        changed = False
        for tail, head, weight in aux.arcs:
            value = best[tail] * weight
            if value > best[head]:
                best[head] = value
                changed = True
        if not changed:
            return
    if changed:
        raise GenericityError("cycle with weight product above one")


def get_parameter(
    inst: MarketInstance,
    ss: ScalingState,
    components: list[Component],
) -> tuple[Fraction, dict[str, Fraction]]:
    """Next scale: the largest component surplus reachable by price raising.

    Singleton buyers contribute their cash while still interested (bang-
    per-buck above one) and zero afterwards; every other component runs the
    price raiser at target zero and contributes the surplus it stops at.
    """
    per_component: dict[str, Fraction] = {}
    alphas = state_alphas(inst, ss.market)
    for comp in components:
        if comp.is_singleton() and comp.buyers:
            b = comp.buyers[0]
            if alphas[b] > 1:
                per_component[component_key(comp)] = ss.market.effective_cash(inst, b)
            else:
                per_component[component_key(comp)] = Fraction(0)
        else:
            result = special_price(inst, ss, components, comp, Fraction(0))
            state = MarketState(
                prices=result.prices, spending=ss.market.spending, refunds=result.refunds
            )
            per_component[component_key(comp)] = surplus(inst, state, comp)
    return max(per_component.values()), per_component


def get_prices(
    inst: MarketInstance,
    ss: ScalingState,
    components: list[Component],
    new_delta: Fraction,
    trace: PhaseTrace | None = None,
) -> tuple[dict[str, Fraction], dict[str, Fraction], dict[str, Fraction]]:
    """Coordinatewise maxima of the per-component price-raising runs.

    Components already at surplus ``new_delta`` or below (and singletons)
    stay at the baseline.  Returns the merged prices and refunds plus each
    run's own root surplus for invariant checking.
    """
    runs: list[tuple[dict[str, Fraction], dict[str, Fraction]]] = []
    run_surplus: dict[str, Fraction] = {}
    for comp in components:
        if comp.is_singleton() or surplus(inst, ss.market, comp) <= new_delta:
            run_prices, run_refunds = dict(ss.market.prices), dict(ss.market.refunds)
        else:
            result = special_price(inst, ss, components, comp, new_delta)
            run_prices, run_refunds = result.prices, result.refunds
            if trace is not None:
                trace.special_price_iterations.append(result.iterations)
        runs.append((run_prices, run_refunds))
        state = MarketState(
            prices=run_prices, spending=ss.market.spending, refunds=run_refunds
        )
        run_surplus[component_key(comp)] = surplus(inst, state, comp)
    merged_prices = {g: max(p[g] for p, _ in runs) for g in inst.goods}
    merged_refunds = {
        b: max(r.get(b, Fraction(0)) for _, r in runs) for b in inst.buyers
    }
    return merged_prices, merged_refunds, run_surplus


def get_allocations(
    inst: MarketInstance,
    new_prices: dict[str, Fraction],
    new_refunds: dict[str, Fraction],
    components: list[Component],
    abundant: set[Edge],
) -> dict[Edge, Fraction]:
    """Rebuild spending as the unique tree flow on the abundant forest.

    Within each non-singleton component the buyer root keeps the positive
    part of the component surplus as cash and the good root absorbs the
    negative part as backorder; everyone else is exactly balanced.  A
    negative tree flow means the restart invariants failed upstream.
    """
    spending: dict[Edge, Fraction] = {}
    temp = MarketState(prices=new_prices, spending={}, refunds=new_refunds)
    for comp in components:
        if comp.is_singleton():
            continue
        tau = surplus(inst, temp, comp)
        edges = sorted(
            (e for e in abundant if e[0] in comp.buyers and e[1] in comp.goods),
            key=lambda e: (inst.buyer_pos[e[0]], inst.good_pos[e[1]]),
        )
        supply: dict[str, Fraction] = {}
        for b in comp.buyers:
            supply[b] = temp.effective_budget(inst, b)
            if buyer_node(b) == comp.buyer_root:
                supply[b] -= max(Fraction(0), tau)
        demand: dict[str, Fraction] = {}
        for g in comp.goods:
            demand[g] = new_prices[g]
            if good_node(g) == comp.good_root:
                demand[g] += min(Fraction(0), tau)
        flows, leftover = solve_tree_flow(edges, supply, demand, comp.good_root)
        if leftover != 0:
            raise SolverError(f"unbalanced tree flow: leftover {leftover}")
        for edge, value in flows.items():
            if value < 0:
                raise SolverError(f"negative tree flow on {edge}")
            if value != 0:
                spending[edge] = value
    return spending


@dataclass
class RestartOutcome:
    branch: str  # delayed | compressed
    delta: Fraction
    threshold: Fraction
    state: MarketState | None
    new_scale: Fraction
    per_component: dict[str, Fraction]
    run_surplus: dict[str, Fraction]


def make_fertile(
    inst: MarketInstance,
    ss: ScalingState,
    components: list[Component],
    trace: PhaseTrace | None = None,
) -> RestartOutcome:
    """Restart subroutine for an optimal, non-fertile state.

    If the next scale is still large relative to the current one, keep the
    state and just lower the threshold (a new abundant edge is then due
    within a logarithmic number of phases).  Otherwise jump to the small
    scale with rebuilt prices, refunds, and a tree-flow allocation.
    """
    n = len(inst.buyers) + len(inst.goods)
    delta = ss.delta
    new_scale, per_component = get_parameter(inst, ss, components)
    # A zero scale can happen while the support is still unresolved: critical
    # buyers' commitments can absorb every component surplus entirely.  A
    # jump to scale zero is meaningless, so keep halving under a lowered
    # threshold instead; the termination test ends the run once the abundant
    # support pins the equilibrium.
    if new_scale > delta / (n * n) or new_scale <= 0:
        return RestartOutcome(
            branch="delayed",
            delta=delta,
            threshold=delta / Fraction(n) ** 5,
            state=None,
            new_scale=new_scale,
            per_component=per_component,
            run_surplus={},
        )
    new_prices, new_refunds, run_surplus = get_prices(
        inst, ss, components, new_scale, trace
    )
    abundant = abundant_edges(ss.market, n, delta)
    spending = get_allocations(inst, new_prices, new_refunds, components, abundant)
    state = MarketState(prices=new_prices, spending=spending, refunds=new_refunds)
    return RestartOutcome(
        branch="compressed",
        delta=new_scale,
        threshold=new_scale / Fraction(n) ** 5,
        state=state,
        new_scale=new_scale,
        per_component=per_component,
        run_surplus=run_surplus,
    )


def _assert_restart_invariants(
    inst: MarketInstance,
    ss: ScalingState,
    components: list[Component],
    outcome: RestartOutcome,
    old_abundant: set[Edge],
) -> None:
    """Promised restart guarantees, checked after every compressed restart.

    The surplus floor ``-delta' / n^2`` holds for every component with a
    buyer; a singleton good's surplus is just the negative of its price,
    which no price-raising run can lift, so those are exempt (their
    backorder is likewise carried as an explicit allowance until repaired).
    """
    n = len(inst.buyers) + len(inst.goods)
    state = outcome.state
    assert state is not None
    floor = -outcome.delta / (n * n)
    for comp in components:
        if not comp.buyers:
            continue
        value = surplus(inst, state, comp)
        if value < floor:
            raise SolverError(
                f"restart surplus {value} below {floor} at {component_key(comp)}"
            )
    for comp in components:
        if comp.is_singleton():
            continue
        expected = min(surplus(inst, ss.market, comp), outcome.delta)
        got = outcome.run_surplus[component_key(comp)]
        if got != expected:
            raise SolverError(
                f"run surplus {got} != min(old surplus, new scale) {expected}"
                f" at {component_key(comp)}"
            )
    threshold = 3 * n * outcome.delta
    for edge in old_abundant:
        if state.spending.get(edge, Fraction(0)) <= threshold:
            raise SolverError(f"old abundant edge {edge} not kept above {threshold}")


def _repair_deficits(
    inst: MarketInstance,
    ss: ScalingState,
    stats: InstanceStats,
    trace: PhaseTrace,
    phase: int,
) -> None:
    """One augmentation per negative-backorder good after a restart.

    Routed from the canonically smallest buyer holding at least ``delta``
    of cash that can reach the good, preferring buyers inside the good's
    component.  Goods no buyer can reach yet stay flagged and are repaired
    by the ordinary steps once the graph connects to them.
    """
    from arcticauction.weak import _augment

    market = ss.market
    components = components_of_abundant_graph(inst, market, stats.n, ss.delta)
    comp_of_good = {g: comp for comp in components for g in comp.goods}
    deficits = [g for g in inst.goods if market.backorder(g) < 0]
    for g in deficits:
        net = network(inst, ss)
        reachable: list[tuple[int, int, str]] = []
        for b in inst.buyers:
            if market.effective_cash(inst, b) < ss.delta:
                continue
            seen = active_set(net, [buyer_node(b)])
            if good_node(g) in seen:
                same = 0 if b in comp_of_good[g].buyers else 1
                reachable.append((same, inst.buyer_pos[b], b))
        if not reachable:
            continue
        _, _, root = min(reachable)
        phi_before = potential(inst, ss)
        path = net.path_to([buyer_node(root)], good_node(g))
        _augment(ss, path, ss.delta)
        phi_after = potential(inst, ss)
        if phi_after != phi_before - 1:
            raise SolverError("repair augmentation broke the potential discipline")
        ss.allowed_deficit.pop(g, None)
        trace.add_row(
            TraceRow(
                phase=phase,
                delta=ss.delta,
                kind="restart_repair",
                subject=g,
                phi_before=phi_before,
                phi_after=phi_after,
            )
        )


def _termination_candidate(
    inst: MarketInstance, ss: ScalingState, stats: InstanceStats
) -> tuple[MarketState, Certificate] | None:
    """Basic solution of the abundant support, if it certifies as an
    equilibrium of the compressed instance."""
    support = abundant_edges(ss.market, stats.n, ss.delta)
    effective = {
        b: ss.market.effective_budget(inst, b) for b in inst.buyers
    }
    try:
        candidate = basic_solution(inst, support, effective)
    except SupportError:
        return None
    certificate = check_equilibrium(
        inst,
        candidate.prices,
        candidate.spending,
        candidate.refunds,
        budgets=effective,
    )
    if not certificate.ok:
        return None
    return candidate, certificate


def _note_abundant(trace: PhaseTrace, phase: int, edges: set[Edge]) -> None:
    """Record newly discovered abundant edges as progress events."""
    for edge in sorted(edges - trace.abundant_discovered):
        trace.progress_events.append((phase, "abundant_edge", str(edge)))
    trace.abundant_discovered |= edges


def phase_budget(n: int) -> int:
    """Watchdog: generous multiple of the proven phase bound."""
    return math.ceil(20 * n * (5 * math.log2(max(n, 2)) + 10))


def run_strong(inst: MarketInstance) -> tuple[Equilibrium, PhaseTrace]:
    """Run the committed-refund algorithm to a certified equilibrium.

    The returned refunds combine the committed refunds accumulated along
    the way with the refunds of the final basic solution; the result is
    certified against the original instance before returning.
    """
    stats = compute_stats(inst)
    n = stats.n
    ss = initialize(inst)
    threshold = ss.delta
    trace = PhaseTrace(algorithm="strong")
    budget = phase_budget(n)
    singleton_crossed: set[str] = set()

    phase = 0
    entry = "init"
    while phase <= budget:
        report = check_genericity(inst, ss.market.prices)
        if not report.ok:
            raise GenericityError(f"degenerate prices at phase {phase}")
        phi = potential(inst, ss)
        if entry in ("init", "halve") and phi > n:
            raise SolverError(f"phase {phase} starts with potential {phi} > n")
        current_abundant = abundant_edges(ss.market, n, ss.delta)
        if phase > 0:
            prev = trace.phases[-1]
            missing = prev.abundant_start - current_abundant
            if missing:
                raise SolverError(f"abundant edges lost: {sorted(missing)}")
        _note_abundant(trace, phase, current_abundant)
        mark = trace.begin_phase(
            phase,
            ss.delta,
            entry,
            phi,
            ss.market.spending,
            current_abundant,
            prices=ss.market.prices,
            refunds=ss.market.refunds,
        )
        run_inner_loop(
            inst, ss, stats, trace, phase, check_iteration_bound=entry != "restart"
        )
        trace.end_phase(ss.market.spending)
        if entry != "restart":
            drift_bound = n * ss.delta
            end_spending = ss.market.spending
            for edge in set(mark.spending_start) | set(end_spending):
                change = abs(
                    end_spending.get(edge, Fraction(0))
                    - mark.spending_start.get(edge, Fraction(0))
                )
                if change > drift_bound:
                    raise SolverError(f"edge {edge} drifted {change} > {drift_bound}")

        _note_abundant(trace, phase, abundant_edges(ss.market, n, ss.delta))
        components = components_of_abundant_graph(inst, ss.market, n, ss.delta)
        alphas = state_alphas(inst, ss.market)
        for comp in components:
            if comp.is_singleton() and comp.buyers:
                b = comp.buyers[0]
                if b not in singleton_crossed and alphas[b] <= 1:
                    singleton_crossed.add(b)
                    trace.progress_events.append((phase, "buyer_uninterested", b))

        finished = _termination_candidate(inst, ss, stats)
        if finished is not None:
            candidate, _ = finished
            total_refunds = {
                b: candidate.refunds.get(b, Fraction(0))
                + ss.market.refunds.get(b, Fraction(0))
                for b in inst.buyers
            }
            final = MarketState(
                prices=candidate.prices,
                spending=candidate.spending,
                refunds=total_refunds,
            )
            certificate = check_equilibrium(
                inst, final.prices, final.spending, final.refunds
            )
            if not certificate.ok:
                raise SolverError(
                    "final state fails certification: "
                    + ", ".join(certificate.failed())
                )
            return Equilibrium.from_state(inst, final, certificate), trace

        fertile = fertile_components(inst, ss, components)
        if not fertile and ss.delta <= threshold:
            outcome = make_fertile(inst, ss, components, trace)
            if outcome.branch == "delayed":
                threshold = outcome.threshold
                trace.restarts.append(
                    RestartRecord(
                        phase=phase,
                        branch="delayed",
                        delta_before=ss.delta,
                        delta_after=ss.delta,
                        threshold=threshold,
                        surpluses=outcome.per_component,
                    )
                )
                entry = "delayed"
            else:
                old_abundant = abundant_edges(ss.market, n, ss.delta)
                old_delta = ss.delta
                _assert_restart_invariants(inst, ss, components, outcome, old_abundant)
                assert outcome.state is not None
                ss.market = outcome.state
                ss.delta = outcome.delta
                threshold = outcome.threshold
                ss.exempt_edges = set(outcome.state.spending)
                ss.allowed_deficit = {}
                for g in inst.goods:
                    backorder = outcome.state.backorder(g)
                    if backorder < 0:
                        ss.allowed_deficit[g] = -backorder
                trace.restarts.append(
                    RestartRecord(
                        phase=phase,
                        branch="compressed",
                        delta_before=old_delta,
                        delta_after=ss.delta,
                        threshold=threshold,
                        surpluses=outcome.run_surplus,
                    )
                )
                _repair_deficits(inst, ss, stats, trace, phase)
                ok, violations = is_delta_feasible(inst, ss)
                if not ok:
                    raise SolverError(f"restarted state infeasible: {violations}")
                entry = "restart"
        else:
            halve_and_repair(inst, ss)
            entry = "halve"
        phase += 1

    raise SolverError(
        f"phase budget {budget} exceeded; an analysis assumption is violated"
    )
