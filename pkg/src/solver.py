"""
Optimality condition and the general solver for the optimal indemnity.

For a contract I with premium pi, the marginal function is

    L(t) = N(t) / N(-inf) - tk(S_X(t)),
    N(t) = integral of u'(w - R(x) - pi) 1{x > t} db(F_X(x)),

and I is optimal exactly when its slope is 0 where L < 0 and 1 where L > 0.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import optimize

from contracts import (
    Indemnity,
    PiecewiseLinear,
    Regime,
    default_grid,
    indemnity_from_dict,
)
from distortions import PremiumPrinciple
from errors import ConfigError, DomainError, QuadratureError
from loss_models import LossModel
from rdeu import BuyerPreferences, atom_weights, rdeu_value
from riskmetrics import (
    DEFAULT_QUADRATURE,
    QuadratureConfig,
    far_limit,
    integrate_pieces,
    premium,
    segment_weights,
)

logger = logging.getLogger(__name__)

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
RESIDUAL_OK = 1e-4
SNAP_TOL = 1e-3
POLISH_ROUNDS = 6
OSCILLATION_STEPS = 3
REFINE_ROUNDS = 4
KNOT_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    grid_n: int = 400
    damping: float = 0.3
    tol: float = 1e-6
    max_iter: int = 500
    L_zero_band: float = 1e-7
    polish: bool = True
    quadrature: QuadratureConfig = DEFAULT_QUADRATURE

    def __post_init__(self):
        if self.grid_n < 2:
            raise DomainError("grid_n must be at least 2")
        if not 0 < self.damping <= 1:
            raise DomainError(f"damping must lie in (0, 1], got {self.damping}")
        if self.tol <= 0 or self.L_zero_band <= 0:
            raise DomainError("tol and L_zero_band must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be at least 1")

    def to_dict(self) -> dict:
        return {
            "grid_n": self.grid_n,
            "damping": self.damping,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "L_zero_band": self.L_zero_band,
            "polish": self.polish,
        }


def solver_config_from_dict(spec: Optional[dict], path: str = "solver") -> SolverConfig:
    spec = spec or {}
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {"grid_n", "damping", "tol", "max_iter", "L_zero_band", "polish", "route", "quadrature"}
    unknown = set(spec) - known
    if unknown:
        raise ConfigError(f"{path}: unknown field {sorted(unknown)[0]!r}")
    try:
        quad = QuadratureConfig(**spec.get("quadrature", {}))
        return SolverConfig(
            grid_n=int(spec.get("grid_n", 400)),
            damping=float(spec.get("damping", 0.3)),
            tol=float(spec.get("tol", 1e-6)),
            max_iter=int(spec.get("max_iter", 500)),
            L_zero_band=float(spec.get("L_zero_band", 1e-7)),
            polish=bool(spec.get("polish", True)),
            quadrature=quad,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}")


@dataclass(frozen=True, eq=False)
class MarginalFunction:
    """L on the knots and segment midpoints of a grid, interleaved in t."""
    t: np.ndarray
    L: np.ndarray
    tail_ratio: np.ndarray
    tk_S: np.ndarray
    tb_S: np.ndarray
    premium: float
    denominator: float
    tail_diverged: bool = False

    @property
    def knots(self) -> np.ndarray:
        return self.t[0::2]

    @property
    def midpoints(self) -> np.ndarray:
        return self.t[1::2]

    @property
    def L_knots(self) -> np.ndarray:
        return self.L[0::2]

    @property
    def L_mid(self) -> np.ndarray:
        return self.L[1::2]


class MarginalEngine:
    """
    Evaluates L for contracts on a fixed knot grid.

    The continuous part is integrated with 8-point Gauss-Legendre on each
    half segment, so N is available at every knot and midpoint from one
    reverse cumulative sum. Atoms sit on knots. The part beyond the last
    knot is a single adaptive quadrature.
    """

    def __init__(self, prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                 knots, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
        self.prefs, self.pp, self.m, self.cfg = prefs, pp, m, cfg
        self.knots = np.asarray(knots, dtype=float)
        n = len(self.knots) - 1
        points = np.empty(2 * n + 1)
        points[0::2] = self.knots
        points[1::2] = 0.5 * (self.knots[:-1] + self.knots[1:])
        self.points = points

        lo, hi = points[:-1], points[1:]
        half = 0.5 * (hi - lo)
        self.nodes = 0.5 * (hi + lo)[:, None] + half[:, None] * GL_NODES[None, :]
        density = np.asarray(m.density(self.nodes), dtype=float)
        with np.errstate(invalid="ignore", over="ignore"):
            weight = np.asarray(prefs.b.derivative_from_survival(m.survival(self.nodes)))
            db = np.where(density > 0, weight * density, 0.0)
        self.node_weights = half[:, None] * GL_WEIGHTS[None, :] * db

        survival = np.asarray(m.survival(points), dtype=float)
        self.tk_S = np.asarray(pp.tk(survival), dtype=float)
        self.tb_S = np.asarray(prefs.tb(survival), dtype=float)

        atoms = atom_weights(prefs.b, m)
        self.atom_x = np.array([a for a, _ in atoms], dtype=float)
        self.atom_inc = np.array([inc for _, inc in atoms], dtype=float)
        self.atom_idx = np.array([int(np.argmin(np.abs(points - a))) for a in self.atom_x], dtype=int)

        last = float(self.knots[-1])
        self.has_tail = m.has_density and not (math.isfinite(m.support_bound) and last >= m.support_bound)

    @cached_property
    def premium_weights(self) -> tuple[np.ndarray, float]:
        return segment_weights(self.pp.tk, self.m, self.knots, self.cfg)

    def premium_of(self, I: Indemnity) -> float:
        if isinstance(I, PiecewiseLinear) and np.array_equal(np.asarray(I.knots), self.knots):
            w, tail = self.premium_weights
            return float(np.dot(I.slopes, w) + I.ext_slope * tail)
        return premium(self.pp, I, self.m, self.cfg)

    def _tail(self, I: Indemnity, pi: float) -> tuple[float, bool]:
        if not self.has_tail:
            return 0.0, False
        u1, b, m, w = self.prefs.utility.marginal, self.prefs.b, self.m, self.prefs.wealth

        def fn(x):
            f = float(m.density(x))
            if f == 0.0:
                return 0.0
            return float(u1(w - (x - float(I(x))) - pi)) * float(b.derivative_from_survival(m.survival(x))) * f

        start = float(self.knots[-1])
        with np.errstate(over="ignore", invalid="ignore"):
            g0, g1 = fn(start), fn(start + max(start, 1.0))
            if g0 > 0 and not g1 < g0:
                return math.inf, True
            try:
                value = integrate_pieces(fn, start, far_limit(m), self.cfg)
            except QuadratureError:
                return math.inf, True
        if not math.isfinite(value):
            return math.inf, True
        return value, False

    def evaluate(self, I: Indemnity, pi: Optional[float] = None) -> MarginalFunction:
        pi = self.premium_of(I) if pi is None else pi
        u1, w = self.prefs.utility.marginal, self.prefs.wealth
        retention = self.nodes - np.asarray(I(self.nodes), dtype=float)
        H = np.sum(np.asarray(u1(w - retention - pi)) * self.node_weights, axis=1)
        C = np.append(np.cumsum(H[::-1])[::-1], 0.0)

        mass = np.zeros(len(self.points) + 1)
        if self.atom_x.size:
            atom_R = self.atom_x - np.asarray(I(self.atom_x), dtype=float)
            np.add.at(mass, self.atom_idx, np.asarray(u1(w - atom_R - pi)) * self.atom_inc)
        # atoms strictly above each point
        A = np.cumsum(mass[::-1])[::-1][1:]

        tail, diverged = self._tail(I, pi)
        if diverged:
            ratio = np.ones_like(self.points)
            denominator = math.inf
        else:
            denominator = float(C[0] + mass.sum() + tail)
            ratio = (C + A + tail) / denominator
        return MarginalFunction(
            t=self.points, L=ratio - self.tk_S, tail_ratio=ratio, tk_S=self.tk_S, tb_S=self.tb_S,
            premium=pi, denominator=denominator, tail_diverged=diverged,
        )


def distortion_points(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel) -> tuple:
    """Loss levels where tk(S) or tb(S) has a kink."""
    levels = set(pp.tk.kinks()) | set(prefs.tb.kinks())
    return tuple(float(m.quantile(p)) for p in sorted(levels) if 0 < p < 1)


def solve_grid(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel, cfg: SolverConfig,
               extra: tuple = ()) -> np.ndarray:
    points = tuple(x for x in extra if 0 < x < math.inf) + distortion_points(prefs, pp, m)
    return default_grid(m, cfg.grid_n, extra=points)


def compute_L(I: Indemnity, prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
              cfg: SolverConfig = SolverConfig()) -> MarginalFunction:
    knots = solve_grid(prefs, pp, m, cfg, tuple(I.breakpoints()))
    return MarginalEngine(prefs, pp, m, knots, cfg.quadrature).evaluate(I)


def residual_of(mf: MarginalFunction, I: Indemnity, band: float) -> float:
    """sup of |slope| where L < -band and |1 - slope| where L > band, over knots and midpoints."""
    slope = np.asarray(I.slope(mf.t), dtype=float)
    violation = np.where(mf.L < -band, np.abs(slope), 0.0) + np.where(mf.L > band, np.abs(1.0 - slope), 0.0)
    return float(violation.max()) if violation.size else 0.0


def verify_optimality(I: Indemnity, prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                      cfg: SolverConfig = SolverConfig()) -> float:
    return residual_of(compute_L(I, prefs, pp, m, cfg), I, cfg.L_zero_band)


def uniqueness_check(pp: PremiumPrinciple, m: LossModel, utility=None) -> dict:
    """The optimum is unique iff theta != 0 or ess inf X = 0 (strictly concave u)."""
    if utility is not None and not utility.strictly_concave:
        return {"unique": None, "reason": "not applicable: utility is not strictly concave"}
    if pp.theta != 0:
        return {"unique": True, "reason": "theta != 0"}
    if m.ess_inf == 0:
        return {"unique": True, "reason": "ess inf X = 0"}
    return {"unique": False, "reason": f"theta = 0 and ess inf X = {m.ess_inf:g} > 0"}


@dataclass
class SolveReport:
    contract: Indemnity
    premium: float
    rdeu_value: float
    residual: float
    regime: Regime
    unique: Optional[bool]
    iterations: int
    solver_path: str
    converged: bool = True
    uniqueness_reason: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "contract": self.contract.to_dict(),
            "premium": self.premium,
            "rdeu_value": self.rdeu_value,
            "residual": self.residual,
            "regime": self.regime.value,
            "unique": self.unique,
            "uniqueness_reason": self.uniqueness_reason,
            "iterations": self.iterations,
            "solver_path": self.solver_path,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SolveReport":
        try:
            return cls(
                contract=indemnity_from_dict(data["contract"]),
                premium=float(data["premium"]),
                rdeu_value=float(data["rdeu_value"]),
                residual=float(data["residual"]),
                regime=Regime(data["regime"]),
                unique=data.get("unique"),
                iterations=int(data["iterations"]),
                solver_path=data["solver_path"],
                converged=bool(data.get("converged", True)),
                uniqueness_reason=data.get("uniqueness_reason", ""),
                diagnostics=dict(data.get("diagnostics", {})),
            )
        except KeyError as e:
            raise ConfigError(f"report: missing field {e.args[0]!r}")
        except ValueError as e:
            raise ConfigError(f"report: {e}")


def build_report(I: Indemnity, prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                 cfg: SolverConfig, solver_path: str, iterations: int, converged: bool = True,
                 diagnostics: Optional[dict] = None) -> SolveReport:
    """Premium, value, residual, regime and uniqueness for a finished contract."""
    pi = premium(pp, I, m, cfg.quadrature)
    residual = verify_optimality(I, prefs, pp, m, cfg)
    uniqueness = uniqueness_check(pp, m, prefs.utility)
    ok = converged and residual < RESIDUAL_OK
    if not ok:
        logger.warning("%s: residual %.3g after %d iterations", solver_path, residual, iterations)
    return SolveReport(
        contract=I,
        premium=pi,
        rdeu_value=rdeu_value(prefs, I, pi, m, cfg.quadrature),
        residual=residual,
        regime=I.classify(),
        unique=uniqueness["unique"],
        uniqueness_reason=uniqueness["reason"],
        iterations=iterations,
        solver_path=solver_path,
        converged=ok,
        diagnostics=diagnostics or {},
    )


def _contract(knots: np.ndarray, slopes: np.ndarray) -> PiecewiseLinear:
    return PiecewiseLinear(tuple(knots), tuple(np.clip(slopes, 0.0, 1.0)), float(np.clip(slopes[-1], 0.0, 1.0)))


def _snap(slopes: np.ndarray, L: np.ndarray, band: float) -> np.ndarray:
    out = slopes.copy()
    out[(out < SNAP_TOL) & (L < band)] = 0.0
    out[(out > 1 - SNAP_TOL) & (L > -band)] = 1.0
    return out


def _sign_project(slopes: np.ndarray, L: np.ndarray, band: float) -> np.ndarray:
    """Fractional slopes move to the bound the sign of L points at."""
    out = slopes.copy()
    fractional = (out > 0) & (out < 1)
    out[fractional & (L < -band)] = 0.0
    out[fractional & (L > band)] = 1.0
    return out


def _active_set_polish(engine: MarginalEngine, knots: np.ndarray, slopes: np.ndarray,
                       band: float) -> tuple[np.ndarray, int]:
    """Solve L = 0 on fractional segments, then re-check the bound signs."""
    s = np.where(slopes < SNAP_TOL, 0.0, np.where(slopes > 1 - SNAP_TOL, 1.0, slopes))
    rounds = 0
    for rounds in range(1, POLISH_ROUNDS + 1):
        free = np.flatnonzero((s > 0) & (s < 1))
        if free.size:
            def equations(z, free=free):
                trial = s.copy()
                trial[free] = np.clip(z, 0.0, 1.0)
                return engine.evaluate(_contract(knots, trial)).L_mid[free]

            sol = optimize.root(equations, s[free], method="hybr", options={"xtol": 1e-12})
            if not sol.success:
                logger.debug("active-set root did not converge: %s", sol.message)
            s[free] = np.clip(sol.x, 0.0, 1.0)
        L = engine.evaluate(_contract(knots, s)).L_mid
        projected = _sign_project(s, L, band)
        raise_up = (projected <= 0) & (L > band)
        push_down = (projected >= 1) & (L < -band)
        released = raise_up | push_down
        if np.array_equal(projected, s) and not released.any():
            break
        s = projected
        s[released] = 0.5
        logger.debug("active set: %d segments released", int(released.sum()))
    return s, rounds


def _refined_start(knots: np.ndarray, slopes: np.ndarray, refined: np.ndarray, shape: dict) -> np.ndarray:
    """Slopes on a refined grid: zero below d* and above m, the body slope across the split segments."""
    mids = 0.5 * (refined[:-1] + refined[1:])
    idx = np.clip(np.searchsorted(knots, mids, side="right") - 1, 0, len(slopes) - 1)
    start = slopes[idx].copy()
    d, body, limit = shape["d_star"], shape["slope"], shape["m"]
    if d is not None:
        split = idx == int(np.clip(np.searchsorted(knots, d, side="right") - 1, 0, len(slopes) - 1))
        start[split] = np.where(mids[split] < d, 0.0, body)
        start[mids < d] = 0.0
    if limit is not None:
        split = idx == int(np.clip(np.searchsorted(knots, limit, side="right") - 1, 0, len(slopes) - 1))
        start[split & (mids < limit)] = body
        start[mids > limit] = 0.0
    return np.clip(start, 0.0, 1.0)


def contract_shape(I: PiecewiseLinear, tol: float = SNAP_TOL) -> dict:
    """Deductible, body slope and limit read off a piecewise-linear slope profile."""
    knots = np.asarray(I.knots)
    s = np.asarray(I.slopes)
    h = np.diff(knots)
    positive = np.flatnonzero(s > tol)
    if positive.size == 0 and I.ext_slope <= tol:
        return {"d_star": None, "slope": 0.0, "m": None}
    if positive.size == 0:
        return {"d_star": float(knots[-1]), "slope": I.ext_slope, "m": None}
    k, j = int(positive[0]), int(positive[-1])
    body = s[k + 1: j + 1]
    slope = float(np.median(body)) if body.size else float(s[k])
    d = float(np.clip(knots[k + 1] - s[k] * h[k] / slope, knots[k], knots[k + 1]))
    if I.ext_slope > tol or j == len(s) - 1:
        m = None
    else:
        m = float(np.clip(knots[j] + s[j] * h[j] / slope, knots[j], knots[j + 1]))
    return {"d_star": d, "slope": slope, "m": m}


def _rising(change: float, last_change: float, rising: int) -> int:
    """Consecutive steps with strictly growing sup slope change; a flat step resets."""
    return rising + 1 if change > last_change else 0


def _candidate(engine: MarginalEngine, knots: np.ndarray, slopes: np.ndarray, band: float) -> tuple:
    I = _contract(knots, slopes)
    return residual_of(engine.evaluate(I), I, band), engine, knots, slopes


def _refine(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel, cfg: SolverConfig,
            engine: MarginalEngine, knots: np.ndarray, slopes: np.ndarray) -> list[tuple]:
    """Re-solve with d* and m inserted as knots until d* stops moving."""
    band = cfg.L_zero_band
    found = []
    for _ in range(REFINE_ROUNDS):
        shape = contract_shape(_contract(knots, slopes))
        cuts = tuple(v for v in (shape["d_star"], shape["m"]) if v is not None and v > 0)
        if not cuts or all(np.min(np.abs(knots - v)) <= KNOT_TOL for v in cuts):
            break
        refined = solve_grid(prefs, pp, m, cfg, cuts)
        start = _refined_start(knots, slopes, refined, shape)
        engine = MarginalEngine(prefs, pp, m, refined, cfg.quadrature)
        slopes, _ = _active_set_polish(engine, refined, start, band)
        knots = refined
        found.append(_candidate(engine, knots, slopes, band))
        logger.debug("refined grid at %s: residual %.3g", cuts, found[-1][0])
    return found


def solve_general(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                  cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Damped fixed point on the slope profile, then an active-set polish on a refined grid."""
    knots = solve_grid(prefs, pp, m, cfg)
    engine = MarginalEngine(prefs, pp, m, knots, cfg.quadrature)
    band = cfg.L_zero_band
    n = len(knots) - 1
    s = np.full(n, 0.5)
    omega = cfg.damping
    # per-segment step factor, halved whenever that segment turns around
    scale = np.ones(n)
    heading = np.zeros(n)
    last_change, rising = math.inf, 0
    fixed_point_done = False

    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        L = engine.evaluate(_contract(knots, s)).L_mid
        target = np.where(L > band, 1.0, np.where(L < -band, 0.0, s))
        updated = np.clip(s + omega * scale * (target - s), 0.0, 1.0)
        moved = np.sign(updated - s)
        scale[moved * heading < 0] *= 0.5
        heading = np.where(moved != 0, moved, heading)
        change = float(np.max(np.abs(updated - s)))
        s = updated
        rising = _rising(change, last_change, rising)
        last_change = change
        if rising >= OSCILLATION_STEPS:
            omega *= 0.5
            rising = 0
            logger.debug("iteration %d: oscillation, damping now %.3g", iterations, omega)
        if change < cfg.tol:
            fixed_point_done = True
            break
    logger.info("fixed point: %d iterations, last change %.3g, damping %.3g", iterations, last_change, omega)
    if not fixed_point_done:
        logger.warning("fixed point hit max_iter=%d without reaching tol", cfg.max_iter)

    L = engine.evaluate(_contract(knots, s)).L_mid
    candidates = [_candidate(engine, knots, s, band), _candidate(engine, knots, _sign_project(s, L, band), band)]
    rounds = 0
    if cfg.polish and prefs.utility.strictly_concave:
        polished, rounds = _active_set_polish(engine, knots, s, band)
        candidates.append(_candidate(engine, knots, polished, band))
        candidates += _refine(prefs, pp, m, cfg, engine, knots, polished)
    residual, engine, knots, s = min(candidates, key=lambda c: c[0])
    logger.info("kept candidate with residual %.3g out of %d", residual, len(candidates))

    s = _snap(s, engine.evaluate(_contract(knots, s)).L_mid, band)
    I = _contract(knots, s)
    diagnostics = {
        **contract_shape(I),
        "damping": omega,
        "fixed_point_iterations": iterations,
        "polish_rounds": rounds,
    }
    return build_report(I, prefs, pp, m, cfg, "general", iterations, fixed_point_done, diagnostics)


def curve_table(report: SolveReport, prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                cfg: SolverConfig = SolverConfig()) -> list[dict]:
    """CSV rows x, I_star, R_star, L, tk_S, tb_S on the knots of the solve grid."""
    mf = compute_L(report.contract, prefs, pp, m, cfg)
    xs = mf.knots
    values = np.asarray(report.contract(xs), dtype=float)
    return [
        {"x": float(x), "I_star": float(v), "R_star": float(x - v), "L": float(L),
         "tk_S": float(tk), "tb_S": float(tb)}
        for x, v, L, tk, tb in zip(xs, values, mf.L_knots, mf.tk_S[0::2], mf.tb_S[0::2])
    ]
