import pytest

import sweep
from cli import run_config_from_dict, solve_run
from contracts import Regime, Zero
from errors import ConfigError, PreconditionError, SizeError
from solver import SolveReport


def _report(premium=0.0):
    return SolveReport(
        contract=Zero(), premium=premium, rdeu_value=1.0, residual=0.0, regime=Regime.ZERO,
        unique=True, iterations=0, solver_path="test", diagnostics={"d_star": None, "slope": 0.0},
    )


class TestSweepRanges:
    def test_list_and_linspace(self):
        ranges = sweep.sweep_ranges_from_dict({
            "premium.seller.theta": [0.0, 0.1],
            "preferences.utility.gamma": {"start": 1.0, "stop": 2.0, "num": 3},
        })
        assert ranges[0].values == (0.0, 0.1)
        assert ranges[1].values == (1.0, 1.5, 2.0)
        assert [r.column for r in ranges] == ["theta", "gamma"]

    def test_explicit_values(self):
        assert sweep.sweep_ranges_from_dict({"a.b": {"values": [3]}})[0].values == (3.0,)

    def test_too_many_parameters(self):
        with pytest.raises(SizeError):
            sweep.sweep_ranges_from_dict({"a": [1], "b": [1], "c": [1]})

    def test_too_many_cells(self):
        with pytest.raises(SizeError, match="cells"):
            sweep.sweep_ranges_from_dict({"a": {"start": 0, "stop": 1, "num": 1000},
                                          "b": {"start": 0, "stop": 1, "num": 1000}})

    def test_missing_linspace_field(self):
        with pytest.raises(ConfigError, match="num"):
            sweep.sweep_ranges_from_dict({"a": {"start": 0, "stop": 1}})

    def test_non_numeric_values(self):
        with pytest.raises(ConfigError, match="numbers"):
            sweep.sweep_ranges_from_dict({"a": ["x"]})


class TestSetPath:
    def test_sets_nested_value(self):
        config = {"premium": {"seller": {"theta": 0.1}}}
        sweep.set_path(config, "premium.seller.theta", 0.3)
        assert config["premium"]["seller"]["theta"] == 0.3

    def test_missing_path(self):
        with pytest.raises(ConfigError, match="does not exist"):
            sweep.set_path({"premium": {}}, "premium.seller.theta", 0.3)


class TestRunSweep:
    def test_empty_range_returns_no_rows(self, mocker):
        solve = mocker.Mock()
        ranges = sweep.sweep_ranges_from_dict({"a": {"start": 0, "stop": 1, "num": 0}})
        assert sweep.run_sweep({"a": 1.0}, ranges, solve) == []
        solve.assert_not_called()

    def test_one_row_per_cell_in_grid_order(self, mocker):
        solve = mocker.Mock(side_effect=lambda cell: _report(premium=cell["x"]["a"] * 10 + cell["y"]))
        ranges = sweep.sweep_ranges_from_dict({"x.a": [1.0, 2.0], "y": [0.0, 0.5]})
        rows = sweep.run_sweep({"x": {"a": 0.0}, "y": 0.0}, ranges, solve, threads=2)
        assert [(r["a"], r["y"]) for r in rows] == [(1.0, 0.0), (1.0, 0.5), (2.0, 0.0), (2.0, 0.5)]
        assert [r["premium"] for r in rows] == [10.0, 10.5, 20.0, 20.5]
        assert rows[0]["regime"] == "zero"

    def test_config_not_mutated(self, mocker):
        config = {"x": 1.0}
        ranges = sweep.sweep_ranges_from_dict({"x": [5.0]})
        sweep.run_sweep(config, ranges, mocker.Mock(return_value=_report()))
        assert config == {"x": 1.0}

    def test_failed_cell_recorded(self, mocker):
        solve = mocker.Mock(side_effect=PreconditionError("no sign change"))
        rows = sweep.run_sweep({"x": 1.0}, sweep.sweep_ranges_from_dict({"x": [2.0]}), solve)
        assert rows == [{"x": 2.0, "regime": "error: no sign change"}]

    def test_out_of_domain_cell_recorded(self, mocker):
        def solve(cell):
            if cell["c"] > 1:
                raise ConfigError("premium.seller: power exponent c must lie in (0, 1]")
            return _report(premium=cell["c"])

        rows = sweep.run_sweep({"c": 0.5}, sweep.sweep_ranges_from_dict({"c": [0.5, 1.5]}), solve)
        assert rows[0]["premium"] == 0.5
        assert rows[1] == {"c": 1.5, "regime": "error: premium.seller: power exponent c must lie in (0, 1]"}

    def test_bad_path_fails_before_solving(self, mocker):
        solve = mocker.Mock()
        ranges = sweep.sweep_ranges_from_dict({"nope.theta": [0.1]})
        with pytest.raises(ConfigError):
            sweep.run_sweep({"premium": {}}, ranges, solve)
        solve.assert_not_called()

    def test_columns(self):
        ranges = sweep.sweep_ranges_from_dict({"premium.seller.theta": [0.1]})
        assert sweep.sweep_columns(ranges)[:2] == ["theta", "regime"]


class TestGammaSweep:
    def test_regime_flips_at_gamma_one(self, power_config):
        """With lambda=2 and c=0.5, no insurance is optimal exactly while gamma <= lambda (1 - c) = 1."""
        config = {**power_config, "solver": {"route": "power_exponential", "grid_n": 60}}
        config["loss"] = {**config["loss"], "lambda": 2.0}
        gammas = [round(0.9 + 0.01 * k, 2) for k in range(21)]
        ranges = sweep.sweep_ranges_from_dict({"preferences.utility.gamma": gammas})
        rows = sweep.run_sweep(config, ranges, lambda cell: solve_run(run_config_from_dict(cell)))
        regimes = {row["gamma"]: row["regime"] for row in rows}
        assert all(regimes[g] == "zero" for g in gammas if g <= 1.0)
        assert all(regimes[g] == "deductible_coinsurance" for g in gammas if g >= 1.01)
        assert rows[11]["slope"] == pytest.approx(1 - 1 / 1.01)
