"""Instance loading, derived constants, and the perturbation layer."""

from fractions import Fraction

import pytest

from arcticauction.core import (
    EPSILON_RESOLUTION,
    InstanceError,
    MarketInstance,
    PerturbationConfig,
    ceil_log2,
    compute_stats,
    format_rational,
    instance_from_document,
    parse_rational,
    perturb,
)

from conftest import make_instance


class TestParseRational:
    def test_integer(self):
        assert parse_rational(3) == Fraction(3)

    def test_fraction_string(self):
        assert parse_rational("3/2") == Fraction(3, 2)

    def test_negative(self):
        assert parse_rational("-5") == Fraction(-5)

    @pytest.mark.parametrize("bad", [1.5, "1.5", "a/b", "1/0", None, True])
    def test_rejects(self, bad):
        with pytest.raises(InstanceError):
            parse_rational(bad)

    def test_roundtrip(self):
        for v in [Fraction(3), Fraction(-7, 2), Fraction(0)]:
            assert parse_rational(format_rational(v)) == v


class TestLoadInstance:
    def test_direct_construction(self):
        doc = {
            "buyers": [{"id": "b1", "budget": "1"}],
            "goods": ["g1"],
            "utilities": [["b1", "g1", "2"]],
        }
        inst = instance_from_document(doc)
        stats = compute_stats(inst)
        assert stats.n == 2
        assert stats.m == 1

    def test_isolated_buyer_rejected(self):
        doc = {
            "buyers": [{"id": "b1", "budget": 1}, {"id": "b2", "budget": 1}],
            "goods": ["g1"],
            "utilities": [["b2", "g1", 1]],
        }
        with pytest.raises(InstanceError, match="isolated buyer b1"):
            instance_from_document(doc)

    def test_fractional_budget_exact(self):
        doc = {
            "buyers": [{"id": "b1", "budget": "3/2"}],
            "goods": ["g1"],
            "utilities": [["b1", "g1", 2]],
        }
        inst = instance_from_document(doc)
        assert inst.budgets["b1"] == Fraction(3, 2)

    def test_duplicate_utility_rejected(self):
        doc = {
            "buyers": [{"id": "b1", "budget": 1}],
            "goods": ["g1"],
            "utilities": [["b1", "g1", 1], ["b1", "g1", 2]],
        }
        with pytest.raises(InstanceError, match="duplicate utility"):
            instance_from_document(doc)

    def test_duplicate_buyer_rejected(self):
        doc = {
            "buyers": [{"id": "b1", "budget": 1}, {"id": "b1", "budget": 2}],
            "goods": ["g1"],
            "utilities": [["b1", "g1", 1]],
        }
        with pytest.raises(InstanceError, match="duplicate buyer"):
            instance_from_document(doc)

    def test_isolated_good_rejected(self):
        doc = {
            "buyers": [{"id": "b1", "budget": 1}],
            "goods": ["g1", "g2"],
            "utilities": [["b1", "g1", 1]],
        }
        with pytest.raises(InstanceError, match="isolated good g2"):
            instance_from_document(doc)

    def test_missing_file(self, tmp_path):
        from arcticauction.core import load_instance

        with pytest.raises(InstanceError):
            load_instance(str(tmp_path / "nope.json"))


class TestComputeStats:
    def test_d_bound_n2(self):
        inst = make_instance({"b1": 1}, {("b1", "g1"): 2})
        stats = compute_stats(inst)
        assert stats.d_bound == 2 * 2**2 == 8

    def test_d_bound_n3(self):
        inst = make_instance({"b1": 1}, {("b1", "g1"): 2, ("b1", "g2"): 1})
        stats = compute_stats(inst)
        assert stats.n == 3
        assert stats.d_bound == 3 * 2**3 == 24

    def test_counts(self):
        inst = make_instance({"b1": 1}, {("b1", "g1"): 1, ("b1", "g2"): 1})
        stats = compute_stats(inst)
        assert stats.n == 3
        assert stats.m == 2

    def test_rational_utilities_clear_denominators(self):
        # with fractional utilities the bound uses the lcm-cleared values
        inst = make_instance({"b1": 1}, {("b1", "g1"): Fraction(3, 2)})
        stats = compute_stats(inst)
        assert stats.d_bound == 2 * Fraction(3, 2) ** 2 * 2**2  # n*(u*L)^n


class TestPerturb:
    def test_zero_magnitude_is_identity(self):
        inst = make_instance({"b1": 1}, {("b1", "g1"): 2})
        cfg = PerturbationConfig(magnitude=Fraction(0), seed=1)
        assert perturb(inst, cfg).utilities == inst.utilities

    def test_same_seed_same_instance(self):
        inst = make_instance({"b1": 4}, {("b1", "g1"): 2, ("b1", "g2"): 6})
        cfg = PerturbationConfig(magnitude=Fraction(1, 1000), seed=99)
        assert perturb(inst, cfg).utilities == perturb(inst, cfg).utilities

    def test_equal_utilities_become_distinct(self):
        # the drawn offsets are distinct rationals, so ties always break
        inst = make_instance({"b1": 1}, {("b1", "g1"): 1, ("b1", "g2"): 1})
        cfg = PerturbationConfig(magnitude=Fraction(1, 1000), seed=0)
        out = perturb(inst, cfg)
        assert out.utilities[("b1", "g1")] != out.utilities[("b1", "g2")]

    def test_sparsity_and_factor_bounds(self):
        inst = make_instance(
            {"b1": 4, "b2": 2},
            {("b1", "g1"): 2, ("b1", "g2"): 6, ("b2", "g2"): 1},
        )
        sigma = Fraction(1, 10**6)
        out = perturb(inst, PerturbationConfig(magnitude=sigma, seed=5))
        assert set(out.utilities) == set(inst.utilities)
        for edge, original in inst.utilities.items():
            assert original < out.utilities[edge] < original * (1 + sigma)

    def test_magnitude_bound_enforced(self):
        inst = make_instance({"b1": 1}, {("b1", "g1"): 2})
        cfg = PerturbationConfig(magnitude=Fraction(1, 2), seed=0)
        with pytest.raises(InstanceError, match="too large"):
            perturb(inst, cfg)

    def test_offsets_have_bounded_denominator(self):
        inst = make_instance({"b1": 1}, {("b1", "g1"): 2})
        cfg = PerturbationConfig(magnitude=Fraction(1, 100), seed=3)
        out = perturb(inst, cfg)
        assert out.utilities[("b1", "g1")].denominator <= 100 * EPSILON_RESOLUTION


class TestCeilLog2:
    @pytest.mark.parametrize(
        "value,expected",
        [
            (Fraction(1), 0),
            (Fraction(2), 1),
            (Fraction(3), 2),
            (Fraction(1, 2), -1),
            (Fraction(1, 3), -1),
            (Fraction(5, 8), -0),
        ],
    )
    def test_small_values(self, value, expected):
        assert ceil_log2(value) == expected

    def test_huge_value(self):
        v = Fraction(10) ** 500
        k = ceil_log2(v)
        assert Fraction(2) ** k >= v > Fraction(2) ** (k - 1)


def test_document_order_is_canonical():
    inst = MarketInstance(
        buyers=("z", "a"),
        goods=("g2", "g1"),
        budgets={"z": Fraction(1), "a": Fraction(1)},
        utilities={("z", "g2"): Fraction(1), ("a", "g1"): Fraction(1)},
    )
    assert inst.buyer_pos == {"z": 0, "a": 1}
    assert inst.good_pos == {"g2": 0, "g1": 1}


def test_duplicate_good_rejected():
    doc = {
        "buyers": [{"id": "b1", "budget": 1}],
        "goods": ["g1", "g1"],
        "utilities": [["b1", "g1", 1]],
    }
    with pytest.raises(InstanceError, match="duplicate good"):
        instance_from_document(doc)
