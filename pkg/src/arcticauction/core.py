"""Market instances, exact rational parsing, derived constants, perturbation.

Every numeric quantity in the package is a :class:`fractions.Fraction`:
arbitrary precision, always normalized, exact comparisons.  There is no
floating-point fallback anywhere.

A market instance consists of buyers with positive budgets, goods with unit
supply, and a sparse positive utility matrix.  The document order of buyers
and goods is the canonical tie-break order used by every "choose smallest"
rule in the solvers, so instances preserve it.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction


class InstanceError(ValueError):
    """Raised when an instance document is malformed or inconsistent."""


_RATIONAL_RE = re.compile(r"^(-?\d+)(?:/(\d+))?$")


def ceil_log2(value: Fraction) -> int:
    """Smallest integer k with 2**k >= value, computed exactly.

    Works for arbitrarily large rationals (float conversion would overflow
    for the denominator bounds of big instances).
    """
    if value <= 0:
        raise ValueError("ceil_log2 needs a positive value")
    k = value.numerator.bit_length() - value.denominator.bit_length() - 1
    while Fraction(2) ** k < value:
        k += 1
    return k


def parse_rational(value: object) -> Fraction:
    """Parse an exact rational from an int or a ``"p"`` / ``"p/q"`` string.

    Floats are rejected: accepting them would silently launder binary
    rounding error into the exact-arithmetic pipeline.
    """
    if isinstance(value, bool):
        raise InstanceError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        match = _RATIONAL_RE.match(value.strip())
        if match is None:
            raise InstanceError(f"not a rational: {value!r}")
        num = int(match.group(1))
        den = int(match.group(2)) if match.group(2) else 1
        if den == 0:
            raise InstanceError(f"zero denominator: {value!r}")
        return Fraction(num, den)
    raise InstanceError(f"not a rational: {value!r}")


def format_rational(value: Fraction) -> str:
    """Serialize exactly: decimal string for integers, ``p/q`` otherwise."""
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


@dataclass
class MarketInstance:
    """Immutable problem statement: buyers, goods, budgets, sparse utilities.

    ``buyers`` and ``goods`` keep document order; ``utilities`` holds only
    strictly positive entries (absence means zero utility).
    """

    buyers: tuple[str, ...]
    goods: tuple[str, ...]
    budgets: dict[str, Fraction]
    utilities: dict[tuple[str, str], Fraction]
    buyer_pos: dict[str, int] = field(init=False, repr=False)
    good_pos: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.buyer_pos = {b: k for k, b in enumerate(self.buyers)}
        self.good_pos = {g: k for k, g in enumerate(self.goods)}
        self._validate()

    def _validate(self) -> None:
        if len(self.buyer_pos) != len(self.buyers):
            raise InstanceError("duplicate buyer id")
        if len(self.good_pos) != len(self.goods):
            raise InstanceError("duplicate good id")
        if not self.buyers or not self.goods:
            raise InstanceError("instance needs at least one buyer and one good")
        for b in self.buyers:
            if b not in self.budgets or self.budgets[b] <= 0:
                raise InstanceError(f"non-positive budget for buyer {b}")
        for (b, g), u in self.utilities.items():
            if b not in self.buyer_pos:
                raise InstanceError(f"utility for unknown buyer {b}")
            if g not in self.good_pos:
                raise InstanceError(f"utility for unknown good {g}")
            if u <= 0:
                raise InstanceError(f"non-positive utility for ({b}, {g})")
        valued_buyers = {b for b, _ in self.utilities}
        valued_goods = {g for _, g in self.utilities}
        for b in self.buyers:
            if b not in valued_buyers:
                raise InstanceError(f"isolated buyer {b}")
        for g in self.goods:
            if g not in valued_goods:
                raise InstanceError(f"isolated good {g}")

    def goods_of(self, buyer: str) -> list[str]:
        """Goods this buyer values, in document order."""
        return [g for g in self.goods if (buyer, g) in self.utilities]

    def buyers_of(self, good: str) -> list[str]:
        """Buyers valuing this good, in document order."""
        return [b for b in self.buyers if (b, good) in self.utilities]

    def edges(self) -> list[tuple[str, str]]:
        """Positive-utility pairs in canonical (buyer, good) document order."""
        return sorted(
            self.utilities, key=lambda e: (self.buyer_pos[e[0]], self.good_pos[e[1]])
        )


@dataclass(frozen=True)
class InstanceStats:
    """Derived constants of an instance.

    ``n`` counts buyers plus goods, ``m`` the positive-utility pairs.
    ``d_bound`` bounds the denominator of any coordinate of the equilibrium,
    so every positive equilibrium coordinate exceeds ``1 / d_bound``; the
    halving solver stops once its scale is safely below that floor.
    """

    n: int
    m: int
    u_max: Fraction
    e_max: Fraction
    d_bound: Fraction


def compute_stats(inst: MarketInstance) -> InstanceStats:
    """Compute ``n``, ``m``, the extreme data values, and the denominator bound.

    For integral utilities the bound is ``n * u_max**n``.  Rational
    utilities are first cleared to integers by the lcm ``L`` of their
    denominators (the perturbation produces such utilities), which scales
    the bound to ``n * (u_max * L)**n``; with ``L = 1`` this reduces to the
    integral formula.
    """
    n = len(inst.buyers) + len(inst.goods)
    m = len(inst.utilities)
    u_max = max(inst.utilities.values())
    e_max = max(inst.budgets.values())
    lcm_den = 1
    for u in inst.utilities.values():
        lcm_den = math.lcm(lcm_den, u.denominator)
    for e in inst.budgets.values():
        lcm_den = math.lcm(lcm_den, e.denominator)
    d_bound = Fraction(n) * (u_max * lcm_den) ** n
    return InstanceStats(n=n, m=m, u_max=u_max, e_max=e_max, d_bound=d_bound)


@dataclass(frozen=True)
class PerturbationConfig:
    """How utilities are nudged off degenerate ties.

    ``magnitude`` (sigma) must stay below ``1 / (2 * n * m * u_max)`` so the
    perturbed utilities remain within a factor two of the originals; zero
    disables the perturbation.  Draws are deterministic in ``seed``.
    ``max_retries`` bounds how many fresh seeds the driver tries when a
    genericity violation is detected at run time.
    """

    magnitude: Fraction
    seed: int
    max_retries: int = 8

    def validate_for(self, inst: MarketInstance) -> None:
        if self.magnitude < 0:
            raise InstanceError("perturbation magnitude must be >= 0")
        if self.magnitude == 0:
            return
        stats = compute_stats(inst)
        bound = Fraction(1, 2 * stats.n * stats.m) / stats.u_max
        if self.magnitude >= bound:
            raise InstanceError(
                f"perturbation magnitude {self.magnitude} too large;"
                f" must be below {bound}"
            )


def default_magnitude(inst: MarketInstance, divisor: int = 10**6) -> Fraction:
    """Default sigma: the invariant bound ``1/(2*n*m*u_max)`` scaled down."""
    stats = compute_stats(inst)
    return Fraction(1, 2 * stats.n * stats.m * divisor) / stats.u_max


# Resolution of the random offsets drawn for the perturbation.  Must exceed
# the number of utility entries (distinct draws); kept small because the
# offsets' denominators feed the d_bound of the perturbed instance and thus
# the number of halving phases the weak solver runs.
EPSILON_RESOLUTION = 1 << 13


def perturb(inst: MarketInstance, cfg: PerturbationConfig) -> MarketInstance:
    """Replace each utility by ``u * (1 + sigma * eps)`` with distinct eps.

    The offsets ``eps`` are distinct rationals in (0, 1) drawn
    deterministically from ``cfg.seed``, so the same seed always yields the
    same perturbed instance.  Sparsity is preserved exactly and each
    perturbed utility lies strictly between ``u`` and ``u * (1 + sigma)``.
    """
    cfg.validate_for(inst)
    if cfg.magnitude == 0:
        return inst
    edges = inst.edges()
    rng = random.Random(cfg.seed)
    numerators = rng.sample(range(1, EPSILON_RESOLUTION), len(edges))
    utilities = dict(inst.utilities)
    for edge, a in zip(edges, numerators):
        eps = Fraction(a, EPSILON_RESOLUTION)
        utilities[edge] = inst.utilities[edge] * (1 + cfg.magnitude * eps)
    return MarketInstance(
        buyers=inst.buyers,
        goods=inst.goods,
        budgets=dict(inst.budgets),
        utilities=utilities,
    )


def instance_from_document(doc: object) -> MarketInstance:
    """Build a validated instance from a parsed document structure."""
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be an object")
    try:
        buyer_rows = doc["buyers"]
        good_rows = doc["goods"]
        utility_rows = doc["utilities"]
    except KeyError as exc:
        raise InstanceError(f"missing field {exc.args[0]!r}") from None
    buyers: list[str] = []
    budgets: dict[str, Fraction] = {}
    for row in buyer_rows:
        if not isinstance(row, dict) or "id" not in row or "budget" not in row:
            raise InstanceError(f"malformed buyer row: {row!r}")
        bid = str(row["id"])
        if bid in budgets:
            raise InstanceError(f"duplicate buyer id {bid}")
        buyers.append(bid)
        budgets[bid] = parse_rational(row["budget"])
    goods: list[str] = []
    for gid in good_rows:
        goods.append(str(gid))
    utilities: dict[tuple[str, str], Fraction] = {}
    for row in utility_rows:
        if not isinstance(row, (list, tuple)) or len(row) != 3:
            raise InstanceError(f"malformed utility row: {row!r}")
        key = (str(row[0]), str(row[1]))
        if key in utilities:
            raise InstanceError(f"duplicate utility entry for {key}")
        utilities[key] = parse_rational(row[2])
    return MarketInstance(
        buyers=tuple(buyers), goods=tuple(goods), budgets=budgets, utilities=utilities
    )


def load_instance(path: str) -> MarketInstance:
    """Load and validate an instance document from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise InstanceError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InstanceError(f"cannot parse {path}: {exc}") from exc
    return instance_from_document(doc)
