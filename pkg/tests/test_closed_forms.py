import math

import pytest

from closed_forms import (
    closed_form_arguments,
    find_deductible,
    solve_dualpower_exponential,
    solve_gini_exponential,
    solve_power_exponential,
)
from contracts import Regime, contract_distance, default_grid
from distortions import ConvexDualPower, DualPower, GiniDeviation, LinearPlusGini, Power, PremiumPrinciple
from errors import DomainError, PreconditionError
from loss_models import ZeroInflatedExponential
from rdeu import BuyerPreferences
from solver import solve_general
from utilities import CARA, LinearUtility


class TestFindDeductible:
    def test_linear_root(self):
        assert find_deductible(lambda d: d - 1.5, lambda d: 1.0, 1.0, 1.0) == pytest.approx(1.5, abs=1e-12)

    def test_nonnegative_at_zero(self):
        assert find_deductible(lambda d: 2.0, lambda d: 0.0, 1.0, 1.0) == 0.0

    def test_no_sign_change(self):
        with pytest.raises(PreconditionError, match="sign change"):
            find_deductible(lambda d: -1.0, lambda d: 0.0, 1.0, 1.0)


class TestPowerExponential:
    def test_fair_full_probability(self):
        """theta = 0, q = 1: coinsurance from zero with slope 1 - lambda(1-c)/gamma."""
        report = solve_power_exponential(gamma=2.0, lam=1.0, c=0.5, theta=0.0, q=1.0, w=0.0)
        assert report.diagnostics["d_star"] == 0.0
        assert report.diagnostics["slope"] == pytest.approx(0.75)
        assert report.contract.alpha == pytest.approx(0.75)

    def test_no_insurance_when_rate_dominates(self):
        report = solve_power_exponential(gamma=1.0, lam=2.0, c=0.5, theta=0.1, q=0.9, w=0.0)
        assert report.regime == Regime.ZERO
        assert report.diagnostics["d_star"] is None

    def test_loaded_root(self):
        report = solve_power_exponential(gamma=2.0, lam=1.0, c=0.5, theta=0.1, q=0.9, w=0.0)
        assert abs(report.diagnostics["G_at_root"]) < 1e-10
        assert report.diagnostics["d_star"] == pytest.approx(0.5, abs=0.1)
        assert report.regime == Regime.DEDUCTIBLE_COINSURANCE
        assert report.residual < 1e-4

    def test_buyer_exponent_substitution(self):
        report = solve_power_exponential(gamma=2.0, lam=1.0, c=0.5, theta=0.1, q=0.9, w=0.0, a_buyer=0.8)
        sub = report.diagnostics["substituted"]
        assert sub["q"] == pytest.approx(0.9 ** 0.8)
        assert sub["lambda"] == pytest.approx(0.8)
        assert sub["c"] == pytest.approx(0.625)
        assert report.diagnostics["slope"] == pytest.approx(1 - 0.8 * 0.375 / 2.0)

    def test_buyer_exponent_range(self):
        with pytest.raises(DomainError, match="buyer exponent"):
            solve_power_exponential(gamma=2.0, lam=1.0, c=0.5, theta=0.1, q=0.9, w=0.0, a_buyer=0.4)

    @pytest.mark.parametrize("kwargs", [
        {"gamma": 0.0}, {"lam": -1.0}, {"theta": -0.1}, {"q": 0.0}, {"c": 1.0},
    ])
    def test_parameter_domain(self, kwargs):
        args = {"gamma": 2.0, "lam": 1.0, "c": 0.5, "theta": 0.1, "q": 0.9, "w": 0.0, **kwargs}
        with pytest.raises(DomainError):
            solve_power_exponential(**args)


class TestDualPowerExponential:
    def test_root(self):
        report = solve_dualpower_exponential(gamma=2.0, lam=1.0, c=1.5, theta=0.1, q=0.5, w=0.0)
        assert abs(report.diagnostics["G_at_root"]) < 1e-10
        assert report.diagnostics["d_star"] > 0
        assert report.solver_path == "dualpower_exponential"
        assert math.isinf(report.contract.m)

    def test_fallback_records_reason(self, mocker):
        general = mocker.patch("closed_forms.solve_general")
        general.return_value.diagnostics = {}
        report = solve_dualpower_exponential(gamma=0.1, lam=1.0, c=3.0, theta=0.1, q=0.9, w=0.0)
        assert report.solver_path == "dualpower_exponential:general"
        assert "lambda" in report.diagnostics["fallback_reason"]

    def test_rejects_small_exponent(self):
        with pytest.raises(DomainError, match="exceed 1"):
            solve_dualpower_exponential(gamma=2.0, lam=1.0, c=0.5, theta=0.1, q=0.5, w=0.0)


class TestGiniExponential:
    def test_root(self):
        report = solve_gini_exponential(gamma=2.0, lam=1.0, alpha=0.4, theta=0.05, q=0.8, w=0.0)
        assert abs(report.diagnostics["G_at_root"]) < 1e-10
        assert report.diagnostics["d_star"] > 0
        assert report.regime != Regime.ZERO

    def test_fair_without_deviation_is_full(self):
        report = solve_gini_exponential(gamma=2.0, lam=1.0, alpha=0.0, theta=0.0, q=1.0, w=0.0)
        assert report.diagnostics["d_star"] == 0.0
        assert report.regime == Regime.FULL

    def test_rejects_negative_alpha(self):
        with pytest.raises(DomainError, match="alpha"):
            solve_gini_exponential(gamma=2.0, lam=1.0, alpha=-0.1, theta=0.05, q=0.8, w=0.0)


class TestClosedFormArguments:
    def test_power_arguments(self):
        prefs = BuyerPreferences(CARA(2.0), wealth=0.0)
        args = closed_form_arguments("power_exponential", prefs, Power(0.1, 0.5), ZeroInflatedExponential(0.9, 1.0))
        assert args == {"gamma": 2.0, "lam": 1.0, "theta": 0.1, "q": 0.9, "w": 0.0, "c": 0.5}

    def test_buyer_exponent_passed(self):
        prefs = BuyerPreferences(CARA(2.0), ConvexDualPower(0.8), wealth=0.0)
        args = closed_form_arguments("power_exponential", prefs, Power(0.1, 0.5), ZeroInflatedExponential(0.9, 1.0))
        assert args["a_buyer"] == 0.8

    def test_needs_cara(self):
        prefs = BuyerPreferences(LinearUtility(), wealth=0.0)
        with pytest.raises(PreconditionError, match="CARA"):
            closed_form_arguments("power_exponential", prefs, Power(0.1, 0.5), ZeroInflatedExponential(0.9, 1.0))

    def test_needs_matching_seller(self):
        prefs = BuyerPreferences(CARA(2.0), wealth=0.0)
        with pytest.raises(PreconditionError, match="seller"):
            closed_form_arguments("gini_exponential", prefs, Power(0.1, 0.5), ZeroInflatedExponential(0.9, 1.0))

    def test_unknown_route(self):
        with pytest.raises(DomainError):
            closed_form_arguments("nope", None, GiniDeviation(), None)


class TestAgainstGeneralSolver:
    @pytest.mark.parametrize("solve, seller, args", [
        (solve_dualpower_exponential, DualPower(0.1, 1.5),
         {"gamma": 2.0, "lam": 1.0, "c": 1.5, "theta": 0.1, "q": 0.5, "w": 0.0}),
        (solve_gini_exponential, LinearPlusGini(0.05, 0.4),
         {"gamma": 2.0, "lam": 1.0, "alpha": 0.4, "theta": 0.05, "q": 0.8, "w": 0.0}),
    ], ids=["dual_power", "gini"])
    def test_closed_form_matches_general(self, solve, seller, args):
        closed = solve(**args)
        assert abs(closed.diagnostics["G_at_root"]) < 1e-10
        assert closed.residual < 1e-4

        prefs = BuyerPreferences(CARA(args["gamma"]), wealth=args["w"])
        m = ZeroInflatedExponential(args["q"], args["lam"])
        general = solve_general(prefs, PremiumPrinciple.from_seller(seller), m)
        xs = default_grid(m, 400, tail_mass=1e-4)
        assert contract_distance(closed.contract, general.contract, xs) < 5e-3
