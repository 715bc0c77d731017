"""Bang-per-buck, equality graph, residual networks, and reachability.

Nodes of the bipartite market graph are tagged tuples ``("B", buyer_id)``
and ``("G", good_id)`` so buyer and good ids may collide without ambiguity.
Every function here is a pure function of immutable snapshots, and every
traversal runs in canonical (document) order, which makes the solvers
deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from arcticauction.core import MarketInstance

Node = tuple[str, str]
Edge = tuple[str, str]  # (buyer_id, good_id)


def buyer_node(buyer: str) -> Node:
    return ("B", buyer)


def good_node(good: str) -> Node:
    return ("G", good)


def node_key(inst: MarketInstance, node: Node) -> tuple[int, int]:
    """Canonical sort key: buyers first, then goods, each in document order."""
    kind, name = node
    if kind == "B":
        return (0, inst.buyer_pos[name])
    return (1, inst.good_pos[name])


def edge_key(inst: MarketInstance, edge: Edge) -> tuple[int, int]:
    return (inst.buyer_pos[edge[0]], inst.good_pos[edge[1]])


@dataclass
class MarketState:
    """Evolving solver state: prices, sparse spending, refunds.

    ``spending`` stores only nonzero entries.  Per-buyer and per-good sums
    are maintained incrementally, and prices carry a version counter so the
    equality graph and bang-per-buck values can be cached between price
    changes; mutate prices only through :meth:`scale_prices`.
    """

    prices: dict[str, Fraction]
    spending: dict[Edge, Fraction]
    refunds: dict[str, Fraction]
    price_version: int = field(default=0, repr=False)
    _spent: dict[str, Fraction] = field(default_factory=dict, repr=False)
    _inflow: dict[str, Fraction] = field(default_factory=dict, repr=False)
    _eq_cache: tuple[int, set[Edge]] | None = field(default=None, repr=False)
    _alpha_cache: tuple[int, dict[str, Fraction]] | None = field(
        default=None, repr=False
    )

    def __post_init__(self) -> None:
        self._spent = {}
        self._inflow = {}
        for (b, g), v in self.spending.items():
            self._spent[b] = self._spent.get(b, Fraction(0)) + v
            self._inflow[g] = self._inflow.get(g, Fraction(0)) + v

    def copy(self) -> "MarketState":
        return MarketState(
            prices=dict(self.prices),
            spending=dict(self.spending),
            refunds=dict(self.refunds),
        )

    def spent_by(self, buyer: str) -> Fraction:
        return self._spent.get(buyer, Fraction(0))

    def inflow(self, good: str) -> Fraction:
        return self._inflow.get(good, Fraction(0))

    def effective_budget(self, inst: MarketInstance, buyer: str) -> Fraction:
        return inst.budgets[buyer] - self.refunds.get(buyer, Fraction(0))

    def effective_cash(self, inst: MarketInstance, buyer: str) -> Fraction:
        return self.effective_budget(inst, buyer) - self.spent_by(buyer)

    def backorder(self, good: str) -> Fraction:
        return self.inflow(good) - self.prices[good]

    def add_spending(self, edge: Edge, delta: Fraction) -> None:
        new = self.spending.get(edge, Fraction(0)) + delta
        if new < 0:
            raise ValueError(f"negative spending on {edge}")
        if new == 0:
            self.spending.pop(edge, None)
        else:
            self.spending[edge] = new
        b, g = edge
        self._spent[b] = self._spent.get(b, Fraction(0)) + delta
        self._inflow[g] = self._inflow.get(g, Fraction(0)) + delta

    def add_refund(self, buyer: str, delta: Fraction) -> None:
        self.refunds[buyer] = self.refunds.get(buyer, Fraction(0)) + delta

    def scale_prices(self, goods: list[str] | set[str], factor: Fraction) -> None:
        for g in goods:
            self.prices[g] *= factor
        self.price_version += 1


def bang_per_buck(inst: MarketInstance, prices: dict[str, Fraction], buyer: str) -> Fraction:
    """Best utility-per-dollar of ``buyer`` at the given prices."""
    best: Fraction | None = None
    for g in inst.goods_of(buyer):
        ratio = inst.utilities[(buyer, g)] / prices[g]
        if best is None or ratio > best:
            best = ratio
    if best is None:
        raise ValueError(f"buyer {buyer} values no good")
    return best


def equality_graph(inst: MarketInstance, prices: dict[str, Fraction]) -> set[Edge]:
    """Pairs achieving the buyer's best bang-per-buck, compared exactly."""
    edges: set[Edge] = set()
    for b in inst.buyers:
        best: Fraction | None = None
        row: list[tuple[str, Fraction]] = []
        for g in inst.goods_of(b):
            ratio = inst.utilities[(b, g)] / prices[g]
            row.append((g, ratio))
            if best is None or ratio > best:
                best = ratio
        for g, ratio in row:
            if ratio == best:
                edges.add((b, g))
    return edges


def state_equality_graph(inst: MarketInstance, state: MarketState) -> set[Edge]:
    """Equality graph of the state's prices, cached until prices change."""
    if state._eq_cache is not None and state._eq_cache[0] == state.price_version:
        return state._eq_cache[1]
    edges = equality_graph(inst, state.prices)
    state._eq_cache = (state.price_version, edges)
    return edges


def state_alphas(inst: MarketInstance, state: MarketState) -> dict[str, Fraction]:
    """Every buyer's best bang-per-buck, cached until prices change."""
    if state._alpha_cache is not None and state._alpha_cache[0] == state.price_version:
        return state._alpha_cache[1]
    alphas = {b: bang_per_buck(inst, state.prices, b) for b in inst.buyers}
    state._alpha_cache = (state.price_version, alphas)
    return alphas


@dataclass
class ResidualNetwork:
    """Directed graph used for augmentation and reachability.

    Forward arcs run buyer -> good along equality edges; backward arcs run
    good -> buyer along edges that can give back spending (positive in the
    weak variant, abundant in the scale-restricted variant).
    """

    inst: MarketInstance
    forward_arcs: set[Edge]
    backward_arcs: set[Edge]
    _adjacency: dict[Node, list[Node]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        adj: dict[Node, list[Node]] = {}
        for b, g in self.forward_arcs:
            adj.setdefault(buyer_node(b), []).append(good_node(g))
        for b, g in self.backward_arcs:
            adj.setdefault(good_node(g), []).append(buyer_node(b))
        for node in adj:
            adj[node].sort(key=lambda v: node_key(self.inst, v))
        self._adjacency = adj

    def neighbors(self, node: Node) -> list[Node]:
        return self._adjacency.get(node, [])

    def bfs(self, roots: list[Node]) -> tuple[set[Node], dict[Node, Node]]:
        """Breadth-first search from ``roots`` in canonical node order.

        Returns the reachable set and the predecessor map of the BFS tree
        (roots have no predecessor), which downstream code uses to extract
        deterministic shortest augmenting paths.
        """
        seen: set[Node] = set(roots)
        parent: dict[Node, Node] = {}
        queue = deque(sorted(roots, key=lambda v: node_key(self.inst, v)))
        while queue:
            node = queue.popleft()
            for nxt in self.neighbors(node):
                if nxt not in seen:
                    seen.add(nxt)
                    parent[nxt] = node
                    queue.append(nxt)
        return seen, parent

    def path_to(self, roots: list[Node], target: Node) -> list[Node]:
        """BFS-tree path from the root set to ``target`` (inclusive)."""
        seen, parent = self.bfs(roots)
        if target not in seen:
            raise ValueError(f"{target} unreachable from roots")
        path = [target]
        while path[-1] in parent:
            path.append(parent[path[-1]])
        path.reverse()
        return path


def residual_network(inst: MarketInstance, state: MarketState) -> ResidualNetwork:
    """Forward arcs on equality edges, backward arcs on positive spending."""
    return ResidualNetwork(
        inst=inst,
        forward_arcs=equality_graph(inst, state.prices),
        backward_arcs={e for e, v in state.spending.items() if v > 0},
    )


def abundant_edges(state: MarketState, n: int, delta: Fraction) -> set[Edge]:
    """Edges carrying at least ``3 * n * delta`` of spending (inclusive)."""
    threshold = 3 * n * delta
    return {e for e, v in state.spending.items() if v >= threshold}


def delta_residual_network(
    inst: MarketInstance, state: MarketState, n: int, delta: Fraction
) -> ResidualNetwork:
    """Forward arcs on equality edges, backward arcs on abundant edges only."""
    return ResidualNetwork(
        inst=inst,
        forward_arcs=equality_graph(inst, state.prices),
        backward_arcs=abundant_edges(state, n, delta),
    )


def active_set(network: ResidualNetwork, roots: list[Node]) -> set[Node]:
    """All nodes reachable from any root by directed arcs (roots included)."""
    seen, _ = network.bfs(roots)
    return seen


@dataclass
class Component:
    """A connected component of the abundant graph.

    Roots are canonical: ``root_good`` is the smallest good (None for a
    pure-buyer component), ``buyer_root`` the smallest buyer and
    ``good_root`` the smallest good, each falling back to the lone node of
    the other side when one side is empty.
    """

    buyers: tuple[str, ...]
    goods: tuple[str, ...]
    root_good: str | None
    buyer_root: Node
    good_root: Node

    def is_singleton(self) -> bool:
        return len(self.buyers) + len(self.goods) == 1

    def nodes(self) -> list[Node]:
        return [buyer_node(b) for b in self.buyers] + [good_node(g) for g in self.goods]

    def surplus(self, inst: MarketInstance, state: MarketState) -> Fraction:
        """Effective budgets of the component's buyers minus its good prices."""
        total = Fraction(0)
        for b in self.buyers:
            total += state.effective_budget(inst, b)
        for g in self.goods:
            total -= state.prices[g]
        return total


def components_of_abundant_graph(
    inst: MarketInstance, state: MarketState, n: int, delta: Fraction
) -> list[Component]:
    """Connected components of the undirected graph on abundant edges.

    Singletons (isolated buyers and goods) are included.  Components are
    returned sorted by their canonically smallest node.
    """
    edges = abundant_edges(state, n, delta)
    return components_of_edges(inst, edges)


def components_of_edges(inst: MarketInstance, edges: set[Edge]) -> list[Component]:
    """Connected components of ``B + G`` under an undirected edge set."""
    adj: dict[Node, list[Node]] = {}
    for b, g in edges:
        adj.setdefault(buyer_node(b), []).append(good_node(g))
        adj.setdefault(good_node(g), []).append(buyer_node(b))
    all_nodes = [buyer_node(b) for b in inst.buyers] + [good_node(g) for g in inst.goods]
    seen: set[Node] = set()
    components: list[Component] = []
    for start in all_nodes:
        if start in seen:
            continue
        stack = [start]
        seen.add(start)
        members: list[Node] = []
        while stack:
            node = stack.pop()
            members.append(node)
            for nxt in adj.get(node, []):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        buyers = sorted(
            (name for kind, name in members if kind == "B"),
            key=lambda b: inst.buyer_pos[b],
        )
        goods = sorted(
            (name for kind, name in members if kind == "G"),
            key=lambda g: inst.good_pos[g],
        )
        root_good = goods[0] if goods else None
        buyer_root = buyer_node(buyers[0]) if buyers else good_node(goods[0])
        good_root = good_node(goods[0]) if goods else buyer_node(buyers[0])
        components.append(
            Component(
                buyers=tuple(buyers),
                goods=tuple(goods),
                root_good=root_good,
                buyer_root=buyer_root,
                good_root=good_root,
            )
        )
    components.sort(key=lambda c: node_key(inst, c.nodes()[0]))
    return components
