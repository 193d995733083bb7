import math

import numpy as np
import pytest

from contracts import Deductible, Full, Zero
from distortions import IDENTITY, GiniDeviation, Linear, MeanMedianDeviation, PremiumPrinciple, Sum
from errors import DomainError
from riskmetrics import (
    QuadratureConfig,
    gini_cross_check,
    integrate_pieces,
    mean_absolute_deviation,
    mean_median_cross_check,
    premium,
    premium_breakdown,
    premium_discrete,
    rho,
    rho_discrete,
)


@pytest.fixture
def gini_premium():
    """theta = 0.1 with the Gini deviation as k."""
    return PremiumPrinciple(theta=0.1, k=Sum((GiniDeviation(),), (1.0,)))


class TestRho:
    def test_gini_of_exponential(self, exp1):
        assert rho(GiniDeviation(), exp1) == pytest.approx(0.5, abs=1e-8)

    def test_mean_median_of_exponential(self, exp1):
        assert rho(MeanMedianDeviation(), exp1) == pytest.approx(math.log(2), abs=1e-8)

    def test_identity_is_the_mean(self, zie_power):
        assert rho(IDENTITY, zie_power) == pytest.approx(zie_power.mean, abs=1e-8)

    def test_discrete_gini(self):
        """Half the mean absolute gap of two i.i.d. copies of {0, 2}."""
        assert rho_discrete(GiniDeviation(), [0.0, 2.0], [0.5, 0.5]) == pytest.approx(0.5)

    def test_discrete_signed(self):
        """Negative outcomes are allowed."""
        assert rho_discrete(IDENTITY, [-1.0, 1.0], [0.5, 0.5]) == pytest.approx(0.0)
        assert rho_discrete(IDENTITY, [-3.0], [1.0]) == pytest.approx(-3.0)

    def test_discrete_translation(self):
        values, probs = [0.0, 1.0, 4.0], [0.2, 0.5, 0.3]
        shifted = rho_discrete(GiniDeviation(), np.add(values, 2.5), probs)
        assert shifted == pytest.approx(rho_discrete(GiniDeviation(), values, probs))


class TestPremium:
    def test_full_contract(self, exp1, gini_premium):
        assert premium(gini_premium, Full(), exp1) == pytest.approx(1.6, abs=1e-8)

    def test_zero_contract(self, exp1, gini_premium):
        assert premium(gini_premium, Zero(), exp1) == 0.0

    def test_deductible(self, exp1, fair_premium):
        assert premium(fair_premium, Deductible(1.0), exp1) == pytest.approx(math.exp(-1), abs=1e-8)

    def test_breakdown(self, exp1, gini_premium):
        parts = premium_breakdown(gini_premium, Full(), exp1)
        assert parts.loading_part == pytest.approx(1.1, abs=1e-8)
        assert parts.deviation_part == pytest.approx(0.5, abs=1e-8)
        assert parts.premium == pytest.approx(1.6, abs=1e-8)

    def test_discrete_premium(self, loaded_premium):
        assert premium_discrete(loaded_premium, [0.0, 1.0], [0.5, 0.5]) == pytest.approx(0.55)

    def test_homogeneity(self, gini_premium):
        base = premium_discrete(gini_premium, [0.0, 1.0], [0.5, 0.5])
        assert premium_discrete(gini_premium, [0.0, 3.0], [0.5, 0.5]) == pytest.approx(3 * base)


class TestQuadrature:
    def test_integrate_pieces(self):
        assert integrate_pieces(lambda t: t, 0.0, 1.0, points=(0.5,)) == pytest.approx(0.5)

    def test_empty_interval(self):
        assert integrate_pieces(lambda t: 1.0, 1.0, 1.0) == 0.0

    def test_config_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            QuadratureConfig(abs_tol=0.0)


class TestCrossChecks:
    def test_gini_monte_carlo(self, exp1):
        check = gini_cross_check(exp1, 20000, seed=42)
        assert check.rho_value == pytest.approx(0.5, abs=1e-8)
        assert abs(check.z_score) < 5

    def test_gini_needs_two_samples(self, exp1):
        with pytest.raises(DomainError):
            gini_cross_check(exp1, 1)

    def test_mean_median_minimum(self, exp1):
        check = mean_median_cross_check(exp1)
        assert check.check_value == pytest.approx(math.log(2), abs=1e-6)
        assert check.argmin == pytest.approx(math.log(2), abs=1e-3)

    def test_mean_absolute_deviation_below_support(self, exp1):
        assert mean_absolute_deviation(exp1, -1.0) == pytest.approx(2.0)

    def test_cross_check_dict_drops_empty_fields(self, exp1):
        out = mean_median_cross_check(exp1).to_dict()
        assert "z_score" not in out
        assert "argmin" in out


class TestLinearSeller:
    def test_linear_seller_premium(self, zie_power):
        pp = PremiumPrinciple.from_seller(Linear(1.2))
        assert premium(pp, Full(), zie_power) == pytest.approx(1.2 * zie_power.mean, abs=1e-8)


INSTANCES = 200
TOL = 1e-9


def _random_principle(rng):
    k = GiniDeviation() if rng.random() < 0.5 else MeanMedianDeviation()
    return PremiumPrinciple(theta=rng.uniform(0.0, 0.5), k=Sum((k,), (rng.uniform(0.0, 1.0),)))


def _random_probs(rng):
    return rng.dirichlet(np.ones(int(rng.integers(2, 9))))


class TestPremiumProperties:
    """Randomized finite distributions; Y and Z share the scenario probabilities."""

    @pytest.fixture
    def rng(self):
        return np.random.default_rng(42)

    def test_translation(self, rng):
        for _ in range(INSTANCES):
            pp, probs = _random_principle(rng), _random_probs(rng)
            y, a = rng.uniform(0.0, 10.0, probs.size), rng.uniform(-5.0, 5.0)
            shifted = premium_discrete(pp, y + a, probs)
            assert shifted == pytest.approx(premium_discrete(pp, y, probs) + (1 + pp.theta) * a, abs=TOL)

    def test_positive_homogeneity(self, rng):
        for _ in range(INSTANCES):
            pp, probs = _random_principle(rng), _random_probs(rng)
            y, a = rng.uniform(0.0, 10.0, probs.size), rng.uniform(0.1, 5.0)
            assert premium_discrete(pp, a * y, probs) == pytest.approx(a * premium_discrete(pp, y, probs), abs=TOL)

    def test_subadditivity(self, rng):
        for _ in range(INSTANCES):
            pp, probs = _random_principle(rng), _random_probs(rng)
            y, z = rng.uniform(0.0, 10.0, (2, probs.size))
            total = premium_discrete(pp, y + z, probs)
            assert total <= premium_discrete(pp, y, probs) + premium_discrete(pp, z, probs) + TOL

    def test_comonotonic_additivity(self, rng):
        for _ in range(INSTANCES):
            pp, probs = _random_principle(rng), _random_probs(rng)
            y = np.sort(rng.uniform(0.0, 10.0, probs.size))
            z = np.sort(rng.uniform(0.0, 10.0, probs.size))
            total = premium_discrete(pp, y + z, probs)
            assert total == pytest.approx(premium_discrete(pp, y, probs) + premium_discrete(pp, z, probs), abs=TOL)

    def test_convex_order(self, rng):
        """Splitting each outcome into a symmetric pair is a mean-preserving spread."""
        for _ in range(INSTANCES):
            pp, probs = _random_principle(rng), _random_probs(rng)
            y = rng.uniform(0.0, 10.0, probs.size)
            spread = rng.uniform(0.0, 2.0, probs.size)
            z = np.concatenate([y - spread, y + spread])
            z_probs = np.concatenate([probs, probs]) / 2
            assert premium_discrete(pp, y, probs) <= premium_discrete(pp, z, z_probs) + TOL
