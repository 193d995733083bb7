"""
Parameter sweeps over a run configuration.

Swept parameters are dotted paths into the raw configuration, e.g.
"preferences.utility.gamma". Every cell is an independent solve, run on
a thread pool capped by RISKMETRIC_THREADS.
"""

import copy
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from errors import ConfigError, DomainError, PreconditionError, QuadratureError, SizeError
from reports import SWEEP_COLUMNS
from solver import SolveReport

logger = logging.getLogger(__name__)

MAX_PARAMETERS = 2
MAX_CELLS = 100_000


@dataclass(frozen=True)
class SweepRange:
    path: str
    values: tuple

    @property
    def column(self) -> str:
        return self.path.rsplit(".", 1)[-1]


def _range_from_dict(path: str, spec) -> SweepRange:
    where = f"sweep.{path}"
    if isinstance(spec, list):
        values = spec
    elif isinstance(spec, dict) and "values" in spec:
        values = spec["values"]
    elif isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except KeyError as e:
            raise ConfigError(f"{where}: missing field {e.args[0]!r}")
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}: {e}")
        if num < 0:
            raise ConfigError(f"{where}: num must be >= 0, got {num}")
        values = np.linspace(start, stop, num).tolist()
    else:
        raise ConfigError(f"{where}: expected a list or an object with start/stop/num or values")
    try:
        values = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: sweep values must be numbers")
    if not all(math.isfinite(v) for v in values):
        raise ConfigError(f"{where}: sweep values must be finite")
    return SweepRange(path, values)


def sweep_ranges_from_dict(spec: dict) -> list[SweepRange]:
    if not isinstance(spec, dict) or not spec:
        raise ConfigError("sweep: expected an object mapping parameter paths to ranges")
    ranges = [_range_from_dict(path, value) for path, value in spec.items()]
    if len(ranges) > MAX_PARAMETERS:
        raise SizeError(f"sweep: at most {MAX_PARAMETERS} parameters, got {len(ranges)}")
    cells = math.prod(len(r.values) for r in ranges)
    if cells > MAX_CELLS:
        raise SizeError(f"sweep: {cells} cells exceeds the limit of {MAX_CELLS}")
    return ranges


def set_path(config: dict, path: str, value: float) -> None:
    """Set a dotted-path entry in a nested config dict."""
    keys = path.split(".")
    node = config
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"sweep: path {path!r} does not exist in the configuration")
        node = node[key]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"sweep: path {path!r} does not exist in the configuration")
    node[keys[-1]] = value


def _row(params: dict, report: SolveReport) -> dict:
    diagnostics = report.diagnostics
    return {
        **params,
        "regime": report.regime.value,
        "d_star": diagnostics.get("d_star"),
        "slope": diagnostics.get("slope"),
        "premium": report.premium,
        "rdeu_value": report.rdeu_value,
        "residual": report.residual,
    }


def sweep_columns(ranges: list[SweepRange]) -> list[str]:
    return [r.column for r in ranges] + list(SWEEP_COLUMNS)


def run_sweep(config: dict, ranges: list[SweepRange], solve_cell: Callable[[dict], SolveReport],
              threads: int = 1) -> list[dict]:
    """One row per parameter cell, in grid order."""
    grid = list(itertools.product(*(r.values for r in ranges)))
    if not grid:
        logger.info("sweep: empty range, nothing to solve")
        return []
    # validate every path up front so a bad path fails before any solve
    validation_copy = copy.deepcopy(config)
    for r in ranges:
        set_path(validation_copy, r.path, r.values[0])

    def run_cell(values: tuple) -> dict:
        cell = copy.deepcopy(config)
        params = {}
        for r, v in zip(ranges, values):
            set_path(cell, r.path, v)
            params[r.column] = v
        try:
            return _row(params, solve_cell(cell))
        except (ConfigError, DomainError, PreconditionError, QuadratureError) as e:
            logger.warning("sweep cell %s failed: %s", params, e)
            return {**params, "regime": f"error: {e}"}

    workers = max(1, min(threads, len(grid)))
    print(f"Sweeping {len(grid)} cells on {workers} thread(s)...")
    rows = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for i, row in enumerate(pool.map(run_cell, grid), start=1):
            rows.append(row)
            if i % 100 == 0:
                print(f"  Solved {i} of {len(grid)} cells...")
    print(f"Sweep complete: {len(rows)} rows")
    return rows
