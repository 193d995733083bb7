"""
Brute-force certification of optimal contracts.

The loss axis is cut into cells; a contract in I_c becomes a slope vector
s in [0, 1]^n on the cell edges, the premium is linear in s and the RDEU
objective is concave in s. The oracle maximizes it by projected gradient
ascent, or by full enumeration on tiny discrete instances.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from contracts import Indemnity, PiecewiseLinear, contract_distance, default_grid
from distortions import PremiumPrinciple
from errors import DomainError, SizeError
from loss_models import DiscreteLoss, LossModel
from rdeu import BuyerPreferences
from riskmetrics import (
    DEFAULT_QUADRATURE,
    QuadratureConfig,
    far_limit,
    integrate_loss_axis,
    integrate_pieces,
    kink_images,
    segment_weights,
)
from solver import SolveReport

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 60
STEP_TOL = 1e-10
TIE_TOL = 1e-12
COMPARE_TAIL = 1e-4
MAX_TINY_ATOMS = 3
MAX_TINY_LEVELS = 101


@dataclass(frozen=True)
class DiscreteProblem:
    """
    Discretized buyer problem on knots 0 = x_0 < ... < x_n.

    Cell c covers (x_c, x_{c+1}] (the last one runs to the top of the
    support) and carries b-mass beta[c] at its b-weighted mean
    x_c + offsets[c]; the loss level 0 carries b-mass beta_zero.
    """
    prefs: BuyerPreferences
    knots: np.ndarray
    beta: np.ndarray
    beta_zero: float
    offsets: np.ndarray
    premium_weights: np.ndarray

    @classmethod
    def from_model(cls, prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel, n: int = 200,
                   cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> "DiscreteProblem":
        if n < 2:
            raise DomainError(f"the oracle needs at least 2 segments, got {n}")
        b = prefs.b

        def G(t):
            return float(b(m.cdf(t)))

        if isinstance(m, DiscreteLoss):
            positive = [a for a, _ in m.atoms() if a > 0]
            knots = np.array([0.0, *positive]) if positive else np.array([0.0, 1.0])
        else:
            knots = default_grid(m, n)
        edges = np.array([G(x) for x in knots])
        beta = np.diff(edges)
        beta[-1] = 1.0 - edges[-2]

        if isinstance(m, DiscreteLoss):
            # each cell's mass sits on its right edge
            offsets = np.diff(knots)
        else:
            pts = kink_images(b, m) + tuple(m.breakpoints())
            body = [
                integrate_pieces(lambda t, top=edges[c + 1]: top - G(t), knots[c], knots[c + 1], cfg, pts)
                for c in range(len(knots) - 2)
            ]
            last = integrate_loss_axis(lambda t: 1.0 - G(t), m, cfg, pts,
                                       start=float(knots[-2]), stop=far_limit(m))
            raw = np.array(body + [last])
            with np.errstate(divide="ignore", invalid="ignore"):
                offsets = np.where(beta > 0, raw / beta, 0.5 * np.diff(knots))

        weights, tail = segment_weights(pp.tk, m, knots, cfg)
        weights = weights.copy()
        weights[-1] += tail
        logger.debug("discrete problem: %d cells, zero mass %.6g", len(beta), edges[0])
        return cls(prefs, knots, beta, float(edges[0]), offsets, weights)

    @property
    def size(self) -> int:
        return len(self.beta)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.knots)

    def premium(self, s) -> np.ndarray:
        return np.asarray(np.asarray(s, dtype=float) @ self.premium_weights)

    def _wealth(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Terminal wealth per cell and at loss 0, for one or a batch of slope vectors."""
        s = np.asarray(s, dtype=float)
        covered = np.cumsum(s * self.widths, axis=-1) - s * self.widths
        indemnity = covered + s * self.offsets
        pi = self.premium(s)[..., None]
        w = self.prefs.wealth
        reps = self.knots[:-1] + self.offsets
        return w - reps + indemnity - pi, w - pi[..., 0]

    def objective(self, s) -> np.ndarray:
        cells, zero = self._wealth(s)
        u = self.prefs.utility.u
        return np.asarray(u(cells)) @ self.beta + self.beta_zero * np.asarray(u(zero))

    def _marginals(self, s):
        cells, zero = self._wealth(s)
        u1 = self.prefs.utility.marginal
        weighted = self.beta * np.asarray(u1(cells))
        total = np.asarray(weighted.sum(axis=-1) + self.beta_zero * np.asarray(u1(zero)))
        return weighted, total

    def gradient(self, s) -> np.ndarray:
        weighted, total = self._marginals(s)
        beyond = np.flip(np.cumsum(np.flip(weighted, -1), -1), -1) - weighted
        return self.widths * beyond + self.offsets * weighted - self.premium_weights * total[..., None]

    def discrete_marginal(self, s) -> np.ndarray:
        """Grid-scale analog of L: gradient over (width * total weighted marginal utility)."""
        _, total = self._marginals(s)
        return self.gradient(s) / (self.widths * total[..., None])

    def _design(self) -> np.ndarray:
        """d(indemnity - premium)/ds_j per cell (rows) and slope (columns)."""
        n = self.size
        j, c = np.meshgrid(np.arange(n), np.arange(n))
        a = np.where(j < c, self.widths[None, :], 0.0) + np.where(j == c, self.offsets[None, :], 0.0)
        return a - self.premium_weights[None, :]

    def hessian(self, s, design: Optional[np.ndarray] = None) -> np.ndarray:
        """Second derivatives of the objective for a single slope vector."""
        cells, zero = self._wealth(s)
        u2 = self.prefs.utility.second
        a = self._design() if design is None else design
        curvature = self.beta * np.asarray(u2(cells))
        w = self.premium_weights
        return (a * curvature[:, None]).T @ a + self.beta_zero * float(u2(zero)) * np.outer(w, w)

    def slopes_of(self, I: Indemnity) -> np.ndarray:
        """Chord slopes of a contract on the knots."""
        return np.clip(np.diff(np.asarray(I(self.knots), dtype=float)) / self.widths, 0.0, 1.0)


@dataclass
class OracleResult:
    slopes: np.ndarray
    value: float
    premium: float
    knots: np.ndarray
    iterations: int = 0
    converged: bool = True
    ties: int = 1
    unique: Optional[bool] = None
    tied_slopes: list = field(default_factory=list)

    @property
    def contract(self) -> PiecewiseLinear:
        return PiecewiseLinear(tuple(self.knots), tuple(self.slopes), float(self.slopes[-1]))

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "premium": self.premium,
            "iterations": self.iterations,
            "converged": self.converged,
            "knots": self.knots.tolist(),
            "slopes": self.slopes.tolist(),
        }
        if self.unique is not None:
            out.update({"ties": self.ties, "unique": self.unique,
                        "tied_slopes": [t.tolist() for t in self.tied_slopes]})
        return out


def _tail_scaling(problem: DiscreteProblem, s: np.ndarray) -> np.ndarray:
    _, total = problem._marginals(s)
    tail = np.flip(np.cumsum(np.flip(problem.beta)))
    return 1.0 / np.maximum(problem.widths * tail * total, 1e-300)


def _ascent_direction(problem: DiscreteProblem, s: np.ndarray, g: np.ndarray,
                      design: Optional[np.ndarray]) -> np.ndarray:
    """
    Tail-mass scaled gradient; for strictly concave utility the slopes not
    pinned at a bound take a Newton step instead.
    """
    direction = _tail_scaling(problem, s) * g
    if design is None:
        return direction
    pinned = ((s <= 0) & (g < 0)) | ((s >= 1) & (g > 0))
    free = ~pinned
    if not free.any():
        return direction
    H = problem.hessian(s, design)
    try:
        newton = -np.linalg.solve(H[np.ix_(free, free)], g[free])
    except np.linalg.LinAlgError:
        return direction
    if np.all(np.isfinite(newton)) and float(g[free] @ newton) > 0:
        direction[free] = newton
    return direction


def brute_force_solve(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel, n: int = 200,
                      iters: int = 5000, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> OracleResult:
    """Projected ascent with Armijo backtracking along the projection arc."""
    problem = DiscreteProblem.from_model(prefs, pp, m, n, cfg)
    design = problem._design() if prefs.utility.strictly_concave else None
    s = np.full(problem.size, 0.5)
    value = float(problem.objective(s))
    converged = False
    iteration = 0
    for iteration in range(1, iters + 1):
        g = problem.gradient(s)
        direction = _ascent_direction(problem, s, g, design)
        if float(g @ (np.clip(s + direction, 0.0, 1.0) - s)) <= 0:
            # projection turned the Newton step downhill
            direction = _tail_scaling(problem, s) * g
        step = 1.0
        for _ in range(MAX_HALVINGS):
            trial = np.clip(s + step * direction, 0.0, 1.0)
            trial_value = float(problem.objective(trial))
            if trial_value >= value + ARMIJO * float(g @ (trial - s)):
                break
            step *= 0.5
        else:
            converged = True
            break
        change = float(np.max(np.abs(trial - s)))
        s, value = trial, trial_value
        if change < STEP_TOL:
            converged = True
            break
    logger.info("oracle: %d iterations, value %.12g, converged=%s", iteration, value, converged)
    return OracleResult(s, value, float(problem.premium(s)), problem.knots, iteration, converged)


def exhaustive_tiny(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel, k: int = 101,
                    cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> OracleResult:
    """Enumerate every slope vector on a k-level grid; report value ties."""
    if not isinstance(m, DiscreteLoss):
        raise DomainError("exhaustive enumeration needs a discrete loss model")
    if len(m.atoms()) > MAX_TINY_ATOMS:
        raise SizeError(f"exhaustive enumeration allows at most {MAX_TINY_ATOMS} atoms, got {len(m.atoms())}")
    if k > MAX_TINY_LEVELS:
        raise SizeError(f"exhaustive enumeration allows at most {MAX_TINY_LEVELS} slope levels, got {k}")
    if k < 2:
        raise DomainError("need at least 2 slope levels")

    problem = DiscreteProblem.from_model(prefs, pp, m, cfg=cfg)
    levels = np.linspace(0.0, 1.0, k)
    grid = np.stack(np.meshgrid(*([levels] * problem.size), indexing="ij"), axis=-1).reshape(-1, problem.size)
    values = problem.objective(grid)
    best = int(np.argmax(values))
    top = float(values[best])
    tied = np.flatnonzero(values >= top - TIE_TOL * max(1.0, abs(top)))
    logger.info("exhaustive: %d candidates, %d tied at %.12g", len(values), len(tied), top)
    return OracleResult(
        slopes=grid[best],
        value=top,
        premium=float(problem.premium(grid[best])),
        knots=problem.knots,
        iterations=len(values),
        ties=len(tied),
        unique=len(tied) == 1,
        tied_slopes=[grid[i] for i in tied],
    )


def gradient_check(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel, s, h: float = 1e-5,
                   cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Max relative error of the analytic gradient against centered differences."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= h) or np.any(s >= 1 - h):
        raise DomainError(f"slopes must lie strictly inside ({h}, {1 - h})")
    problem = DiscreteProblem.from_model(prefs, pp, m, len(s), cfg)
    if problem.size != len(s):
        raise DomainError(f"slope vector has {len(s)} entries but the grid has {problem.size} cells")
    analytic = problem.gradient(s)
    bump = h * np.eye(len(s))
    numeric = (problem.objective(s + bump) - problem.objective(s - bump)) / (2 * h)
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-300)
    return float(np.max(np.abs(analytic - numeric))) / scale


def compare_with(result: OracleResult, report: SolveReport, prefs: BuyerPreferences, pp: PremiumPrinciple,
                 m: LossModel, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> dict:
    """Contract distance and value gaps between an oracle run and a solver report."""
    problem = DiscreteProblem.from_model(prefs, pp, m, len(result.slopes), cfg)
    knots = problem.knots
    xs = knots[knots <= m.upper_limit(COMPARE_TAIL)]
    grid_value = float(problem.objective(problem.slopes_of(report.contract)))
    out = {
        "contract_distance": contract_distance(result.contract, report.contract, xs),
        "value_gap": result.value - report.rdeu_value,
        "grid_value_gap": result.value - grid_value,
        "oracle_value": result.value,
        "solver_value": report.rdeu_value,
    }
    logger.info("oracle vs %s: distance %.3g, value gap %.3g", report.solver_path,
                out["contract_distance"], out["value_gap"])
    return out
