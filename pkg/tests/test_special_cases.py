import math

import pytest

from closed_forms import solve_power_exponential
from contracts import Regime
from special_cases import solve_deductible, solve_diml, solve_full, solve_full_check, solve_max_limit
from distortions import IDENTITY, Linear, LinearPlusMeanMedian, Power, PremiumPrinciple
from errors import PreconditionError
from loss_models import DiscreteLoss, ZeroInflatedExponential
from rdeu import BuyerPreferences
from solver import SolverConfig
from utilities import CARA


class TestFullCheck:
    def test_discounted_premium(self, exp1):
        assert solve_full_check(PremiumPrinciple(theta=-0.1), IDENTITY, exp1)

    def test_loaded_premium(self, exp1):
        assert not solve_full_check(PremiumPrinciple(theta=0.1), IDENTITY, exp1)

    def test_checked_up_to_survival_at_zero(self):
        """tk = p^0.5 exceeds p on (0, 0.25]."""
        m = DiscreteLoss((0.0, 1.0), (0.75, 0.25))
        pp = PremiumPrinciple.from_seller(Power(0.0, 0.5))
        assert not solve_full_check(pp, IDENTITY, m)

    def test_solve_full_reports_full(self, cara_buyer, exp1):
        report = solve_full(cara_buyer, PremiumPrinciple(theta=-0.1), exp1)
        assert report.regime == Regime.FULL
        assert report.solver_path == "full_check"

    def test_solve_full_precondition(self, cara_buyer, loaded_premium, exp1):
        with pytest.raises(PreconditionError, match="solve_general"):
            solve_full(cara_buyer, loaded_premium, exp1)


class TestDeductible:
    def test_cara_exponential(self, cara_buyer, exp1):
        """With tk = 1.2 p the deductible solves e^d = 1.2 (1 + d)."""
        pp = PremiumPrinciple(theta=0.2)
        report = solve_deductible(cara_buyer, pp, exp1)
        d = report.diagnostics["d_star"]
        assert math.exp(d) == pytest.approx(1.2 * (1 + d), abs=1e-6)
        assert d == pytest.approx(0.73105, abs=1e-4)
        assert report.regime == Regime.DEDUCTIBLE
        assert report.residual < 1e-4

    def test_hazard_rate_order_required(self, cara_buyer, exp1):
        pp = PremiumPrinciple.from_seller(Power(0.1, 0.5))
        with pytest.raises(PreconditionError, match="hazard-rate"):
            solve_deductible(cara_buyer, pp, exp1)


class TestMaxLimit:
    def test_single_crossing(self, linear_buyer, exp1):
        pp = PremiumPrinciple.from_seller(LinearPlusMeanMedian(-0.2, 0.3))
        report = solve_max_limit(linear_buyer, pp, exp1)
        assert report.diagnostics["m"] == pytest.approx(math.log(1 / 0.6), abs=1e-8)
        assert report.diagnostics["S_at_m"] == pytest.approx(0.6, abs=1e-8)
        assert report.regime == Regime.MAX_LIMIT

    def test_loaded_gives_zero(self, linear_buyer, exp1):
        pp = PremiumPrinciple.from_seller(LinearPlusMeanMedian(0.1, 0.5))
        report = solve_max_limit(linear_buyer, pp, exp1)
        assert report.diagnostics["m"] == 0.0
        assert report.regime == Regime.ZERO

    def test_no_crossing_gives_full(self, linear_buyer, exp1):
        report = solve_max_limit(linear_buyer, PremiumPrinciple.from_seller(Linear(0.9)), exp1)
        assert report.diagnostics["m"] is None
        assert report.regime == Regime.FULL

    def test_needs_linear_utility(self, cara_buyer, exp1):
        with pytest.raises(PreconditionError, match="linear utility"):
            solve_max_limit(cara_buyer, PremiumPrinciple(theta=-0.1), exp1)


class TestDIML:
    def test_matches_power_closed_form(self):
        prefs = BuyerPreferences(CARA(2.0), wealth=0.0)
        pp = PremiumPrinciple.from_seller(Power(0.1, 0.5))
        m = ZeroInflatedExponential(0.9, 1.0)
        report = solve_diml(prefs, pp, m, SolverConfig(grid_n=100))
        closed = solve_power_exponential(gamma=2.0, lam=1.0, c=0.5, theta=0.1, q=0.9, w=0.0)
        assert report.solver_path == "diml"
        assert report.regime == Regime.DEDUCTIBLE_COINSURANCE
        assert report.diagnostics["m"] is None
        assert report.diagnostics["d_star"] == pytest.approx(closed.diagnostics["d_star"], abs=1e-3)
        assert report.premium == pytest.approx(closed.premium, abs=1e-3)
        assert report.contract.slope(3.0) == pytest.approx(0.75, abs=1e-6)

    def test_tail_stays_finite(self):
        """Far past the last representable survival level the contract keeps slope 0.5."""
        prefs = BuyerPreferences(CARA(1.0), wealth=5.0)
        pp = PremiumPrinciple.from_seller(Power(0.1, 0.5))
        m = ZeroInflatedExponential(1.0, 1.0)
        report = solve_diml(prefs, pp, m, SolverConfig(grid_n=100))
        I = report.contract
        assert math.isfinite(report.premium)
        assert I.slope(50.0) == pytest.approx(0.5, abs=1e-6)
        assert I.slope(900.0) == pytest.approx(0.5, abs=1e-6)
        assert float(I(900.0)) - float(I(800.0)) == pytest.approx(50.0, rel=1e-6)
        assert math.isfinite(float(I(1e4)))

    def test_rejects_negative_theta(self, cara_buyer, exp1):
        with pytest.raises(PreconditionError, match="theta"):
            solve_diml(cara_buyer, PremiumPrinciple(theta=-0.1), exp1)

    def test_rejects_discrete_loss(self, cara_buyer, loaded_premium, two_atoms):
        with pytest.raises(PreconditionError, match="density"):
            solve_diml(cara_buyer, loaded_premium, two_atoms)

    def test_rejects_linear_utility(self, linear_buyer, loaded_premium, exp1):
        with pytest.raises(PreconditionError, match="strictly concave"):
            solve_diml(linear_buyer, loaded_premium, exp1)
