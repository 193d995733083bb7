"""
Command-line front door.

    python src/cli.py premium  --config full.json
    python src/cli.py evaluate --config run.json
    python src/cli.py solve    --config power.json --out report.json --csv curves.csv
    python src/cli.py verify   --config run.json [--report report.json]
    python src/cli.py oracle   --config power.json
    python src/cli.py orders   --config pair.json
    python src/cli.py sweep    --config sweep.json --csv sweep.csv

Exit codes: 0 success, 1 domain or precondition failure, 2 bad configuration.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from closed_forms import CLOSED_FORMS, closed_form_arguments
from config import Settings, configure_logging, get_settings
from contracts import Full, Indemnity, indemnity_from_dict
from special_cases import solve_deductible, solve_diml, solve_full, solve_max_limit
from distortions import Distortion, PremiumPrinciple, check_order, distortion_from_dict, premium_principle_from_dict
from errors import ConfigError, DomainError, IndeterminateOrderError, PreconditionError, QuadratureError, SizeError
from loss_models import LossModel, loss_model_from_dict
from oracle import brute_force_solve, compare_with, exhaustive_tiny
from rdeu import BuyerPreferences, certainty_equivalent, preferences_from_dict, rdeu_value
from reports import CURVE_COLUMNS, anchor_error, read_json, resolve_output, to_json, write_csv, write_json
from riskmetrics import gini_cross_check, mean_median_cross_check, premium, premium_breakdown
from solver import SolveReport, SolverConfig, curve_table, solve_general, solver_config_from_dict, verify_optimality
from sweep import run_sweep, sweep_columns, sweep_ranges_from_dict

logger = logging.getLogger(__name__)

RESIDUAL_OK = 1e-4
SOLVER_ROUTES = {
    "general": solve_general,
    "full_check": solve_full,
    "deductible": solve_deductible,
    "max_limit": solve_max_limit,
    "diml": solve_diml,
}
ROUTES = tuple(SOLVER_ROUTES) + tuple(CLOSED_FORMS)
TOP_LEVEL_KEYS = {"loss", "preferences", "premium", "contract", "solver", "output", "sweep", "orders", "oracle"}


@dataclass
class RunConfig:
    """A parsed run configuration; sections a subcommand does not need may be absent."""
    raw: dict
    loss: Optional[LossModel] = None
    preferences: Optional[BuyerPreferences] = None
    premium: Optional[PremiumPrinciple] = None
    seller: Optional[Distortion] = None
    contract: Optional[Indemnity] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    route: str = "general"
    output: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"config: missing field {name!r}")


def run_config_from_dict(spec: dict) -> RunConfig:
    unknown = set(spec) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"config: unknown field {sorted(unknown)[0]!r}")
    cfg = RunConfig(raw=spec)
    if "loss" in spec:
        cfg.loss = loss_model_from_dict(spec["loss"], "loss")
    if "preferences" in spec:
        cfg.preferences = preferences_from_dict(spec["preferences"], "preferences")
    if "premium" in spec:
        cfg.premium = premium_principle_from_dict(spec["premium"], "premium")
        if isinstance(spec["premium"], dict) and "seller" in spec["premium"]:
            cfg.seller = distortion_from_dict(spec["premium"]["seller"], "premium.seller")
    if "contract" in spec:
        cfg.contract = indemnity_from_dict(spec["contract"], "contract")
    solver_spec = spec.get("solver") or {}
    cfg.solver = solver_config_from_dict(solver_spec, "solver")
    cfg.route = solver_spec.get("route", "general") if isinstance(solver_spec, dict) else "general"
    if cfg.route not in ROUTES:
        raise ConfigError(f"solver.route: unknown route {cfg.route!r}; expected one of {', '.join(ROUTES)}")
    for section in ("output", "oracle"):
        value = spec.get(section, {})
        if not isinstance(value, dict):
            raise ConfigError(f"{section}: expected an object")
        setattr(cfg, section, value)
    return cfg


def load_run_config(path: Path) -> RunConfig:
    data, text = read_json(path)
    try:
        return run_config_from_dict(data)
    except ConfigError as e:
        raise anchor_error(e, text)


def solve_run(cfg: RunConfig) -> SolveReport:
    """Dispatch a configured problem to its solver route."""
    cfg.require("loss", "preferences", "premium")
    logger.info("solving with route %s", cfg.route)
    if cfg.route in CLOSED_FORMS:
        args = closed_form_arguments(cfg.route, cfg.preferences, cfg.seller, cfg.loss)
        return CLOSED_FORMS[cfg.route](**args, cfg=cfg.solver)
    return SOLVER_ROUTES[cfg.route](cfg.preferences, cfg.premium, cfg.loss, cfg.solver)


def _output_path(flag: Optional[str], cfg: RunConfig, key: str, settings: Settings) -> Optional[Path]:
    if flag:
        return Path(flag)
    if cfg.output.get(key):
        return resolve_output(cfg.output[key], settings.output_dir)
    return None


def _emit(data: dict, out: Optional[Path]) -> None:
    if out is not None:
        write_json(out, data)
        logger.info("wrote %s", out)
    print(to_json(data))


def cmd_premium(args, cfg: RunConfig, settings: Settings) -> int:
    cfg.require("loss", "premium")
    contract = cfg.contract or Full()
    result = premium_breakdown(cfg.premium, contract, cfg.loss, cfg.solver.quadrature).to_dict()
    if args.cross_check == "gini":
        result["cross_check"] = gini_cross_check(cfg.loss, args.samples, args.seed, cfg.solver.quadrature).to_dict()
    elif args.cross_check == "mean_median":
        result["cross_check"] = mean_median_cross_check(cfg.loss, cfg.solver.quadrature).to_dict()
    _emit(result, _output_path(args.out, cfg, "json", settings))
    return 0


def cmd_evaluate(args, cfg: RunConfig, settings: Settings) -> int:
    cfg.require("loss", "preferences", "premium")
    contract = cfg.contract or Full()
    q = cfg.solver.quadrature
    pi = premium(cfg.premium, contract, cfg.loss, q)
    value = rdeu_value(cfg.preferences, contract, pi, cfg.loss, q)
    result = {
        "premium": pi,
        "rdeu_value": value,
        "certainty_equivalent": certainty_equivalent(cfg.preferences, value),
    }
    _emit(result, _output_path(args.out, cfg, "json", settings))
    return 0


def cmd_solve(args, cfg: RunConfig, settings: Settings) -> int:
    report = solve_run(cfg)
    _emit(report.to_dict(), _output_path(args.out, cfg, "json", settings))
    csv_path = _output_path(args.csv, cfg, "csv", settings)
    if csv_path is not None:
        rows = curve_table(report, cfg.preferences, cfg.premium, cfg.loss, cfg.solver)
        write_csv(csv_path, rows, CURVE_COLUMNS)
        logger.info("wrote %d curve rows to %s", len(rows), csv_path)
    return 0


def cmd_verify(args, cfg: RunConfig, settings: Settings) -> int:
    cfg.require("loss", "preferences", "premium")
    if args.report:
        data, text = read_json(Path(args.report))
        try:
            contract = SolveReport.from_dict(data).contract
        except ConfigError as e:
            raise anchor_error(e, text)
    else:
        cfg.require("contract")
        contract = cfg.contract
    residual = verify_optimality(contract, cfg.preferences, cfg.premium, cfg.loss, cfg.solver)
    result = {"residual": residual, "optimal": residual < RESIDUAL_OK, "regime": contract.classify().value}
    _emit(result, _output_path(args.out, cfg, "json", settings))
    return 0


def cmd_oracle(args, cfg: RunConfig, settings: Settings) -> int:
    cfg.require("loss", "preferences", "premium")
    q = cfg.solver.quadrature
    if "exhaustive" in cfg.oracle:
        tiny = exhaustive_tiny(cfg.preferences, cfg.premium, cfg.loss, int(cfg.oracle["exhaustive"]), q)
        _emit(tiny.to_dict(), _output_path(args.out, cfg, "json", settings))
        return 0
    report = solve_run(cfg)
    result = brute_force_solve(cfg.preferences, cfg.premium, cfg.loss, int(cfg.oracle.get("n", 200)),
                               int(cfg.oracle.get("iters", 5000)), q)
    comparison = compare_with(result, report, cfg.preferences, cfg.premium, cfg.loss, q)
    comparison.update({"solver_path": report.solver_path, "oracle_iterations": result.iterations,
                       "oracle_converged": result.converged})
    _emit(comparison, _output_path(args.out, cfg, "json", settings))
    return 0


def cmd_orders(args, cfg: RunConfig, settings: Settings) -> int:
    spec = cfg.raw.get("orders")
    if not isinstance(spec, dict) or "j1" not in spec or "j2" not in spec:
        raise ConfigError("orders: expected an object with 'j1' and 'j2' distortions")
    j1 = distortion_from_dict(spec["j1"], "orders.j1")
    j2 = distortion_from_dict(spec["j2"], "orders.j2")
    p_max = float(spec.get("p_max", 1.0))
    result, fails_at = {}, {}
    for order in ("FSD", "HR", "LR"):
        try:
            outcome = check_order(j1, j2, order, p_max=p_max)
        except IndeterminateOrderError as e:
            logger.warning("%s order: %s", order, e)
            result[order.lower()] = None
            continue
        result[order.lower()] = outcome.holds
        if not outcome.holds:
            fails_at[order.lower()] = outcome.fails_at
    result["fails_at"] = fails_at
    _emit(result, _output_path(args.out, cfg, "json", settings))
    return 0


def cmd_sweep(args, cfg: RunConfig, settings: Settings) -> int:
    if "sweep" not in cfg.raw:
        raise ConfigError("config: missing field 'sweep'")
    ranges = sweep_ranges_from_dict(cfg.raw["sweep"])
    base = {k: v for k, v in cfg.raw.items() if k != "sweep"}
    rows = run_sweep(base, ranges, lambda cell: solve_run(run_config_from_dict(cell)), settings.threads)
    csv_path = _output_path(args.csv, cfg, "csv", settings) or settings.output_dir / "sweep.csv"
    write_csv(csv_path, rows, sweep_columns(ranges))
    print(f"Wrote {len(rows)} rows to {csv_path}")
    return 0


COMMANDS = {
    "premium": cmd_premium,
    "evaluate": cmd_evaluate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
    "orders": cmd_orders,
    "sweep": cmd_sweep,
}


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskmetric",
                                     description="Distortion-deviation premiums and optimal insurance contracts.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="Path to the JSON run configuration")
        p.add_argument("--out", help="Write the JSON result to this path as well as stdout")
        p.add_argument("--csv", help="CSV output path (solve curves, sweep table)")
        p.add_argument("--seed", type=int, default=settings.seed,
                       help=f"Monte Carlo seed (default: {settings.seed})")
        p.add_argument("--verbose", action="store_true", help="Debug logging")
        if name == "premium":
            p.add_argument("--cross-check", choices=("gini", "mean_median"))
            p.add_argument("--samples", type=int, default=1_000_000, help="Monte Carlo pairs for --cross-check gini")
        if name == "verify":
            p.add_argument("--report", help="Verify the contract of a saved solve report")
    return parser


def run(argv: Optional[list[str]] = None) -> int:
    try:
        settings = get_settings()
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    configure_logging("DEBUG" if args.verbose else settings.log_level)

    try:
        cfg = load_run_config(Path(args.config))
        return COMMANDS[args.command](args, cfg, settings)
    except (ConfigError, SizeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except (DomainError, PreconditionError, QuadratureError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(run())
