"""
Constructive solvers for the special cases of the optimality condition.

Each solver checks its preconditions first and raises PreconditionError
(pointing at solve_general) when they fail.
"""

import logging
import math

import numpy as np
from scipy import optimize

from contracts import DIML, Deductible, Full, LikelihoodRatio, MaxLimit, default_grid
from distortions import Distortion, Dual, PremiumPrinciple, check_order
from errors import PreconditionError
from loss_models import LossModel
from rdeu import BuyerPreferences, marginal_denominator
from riskmetrics import premium
from solver import SolveReport, SolverConfig, build_report

logger = logging.getLogger(__name__)

FULL_CHECK_GRID = 1001
FULL_CHECK_SLACK = 1e-10
SCAN_SEGMENTS = 100
SCAN_TAIL_MASS = 1e-10
BISECT_XTOL = 1e-12


def _fallback(reason: str) -> PreconditionError:
    return PreconditionError(f"{reason}; use solve_general instead")


def _require_order(j1: Distortion, j2: Distortion, order: str, m: LossModel, label: str) -> None:
    result = check_order(j1, j2, order, p_max=float(m.survival(0.0)))
    if not result.holds:
        raise _fallback(f"{label} fails at p={result.fails_at:.6g}")


def _scan_points(m: LossModel) -> np.ndarray:
    """Loss levels with positive survival, for sign scans."""
    xs = default_grid(m, SCAN_SEGMENTS, tail_mass=SCAN_TAIL_MASS)
    return xs[np.asarray(m.survival(xs)) > 0]


def _first_crossing(fn, xs: np.ndarray, up: bool) -> float:
    """inf{x : fn(x) >= 0} (up) or inf{x : fn(x) <= 0} (not up) by scan and bisection."""
    sign = 1.0 if up else -1.0
    values = [sign * fn(x) for x in xs]
    if values[0] >= 0:
        return 0.0
    hits = [i for i, v in enumerate(values) if v >= 0]
    if not hits:
        return math.inf
    k = hits[0]
    return optimize.bisect(lambda x: sign * fn(x), xs[k - 1], xs[k], xtol=BISECT_XTOL)


def solve_full_check(pp: PremiumPrinciple, b: Distortion, m: LossModel) -> bool:
    """Full insurance is optimal iff tk <= tb on [0, S_X(0)]."""
    p = np.linspace(0.0, float(m.survival(0.0)), FULL_CHECK_GRID)
    return bool(np.all(np.asarray(pp.tk(p)) <= np.asarray(Dual(b)(p)) + FULL_CHECK_SLACK))


def solve_full(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
               cfg: SolverConfig = SolverConfig()) -> SolveReport:
    if not solve_full_check(pp, prefs.b, m):
        raise _fallback("tk exceeds tb somewhere on [0, S_X(0)]")
    return build_report(Full(), prefs, pp, m, cfg, "full_check", 0)


def solve_deductible(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                     cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """d* = inf{d >= 0 : J(d, d) >= 0} under tk <=_hr tb."""
    _require_order(pp.tk, prefs.tb, "HR", m, "hazard-rate order tk <= tb")
    s0 = float(m.survival(0.0))
    if np.any(np.diff(np.asarray(pp.tk(np.linspace(0.0, s0, FULL_CHECK_GRID)))) <= 0):
        raise _fallback("tk is not strictly increasing on [0, S_X(0)]")

    u1, w, q = prefs.utility.marginal, prefs.wealth, cfg.quadrature
    evaluations = 0

    def J(d: float) -> float:
        nonlocal evaluations
        evaluations += 1
        I = Deductible(d)
        pi = premium(pp, I, m, q)
        denominator = marginal_denominator(prefs, I, pi, m, q)
        s = float(m.survival(d))
        return float(u1(w - d - pi)) / denominator - float(pp.tk(s)) / float(prefs.tb(s))

    d_star = _first_crossing(J, _scan_points(m), up=True)
    logger.info("deductible: d* = %.10g after %d evaluations of J", d_star, evaluations)
    diagnostics = {"d_star": None if math.isinf(d_star) else d_star}
    return build_report(Deductible(d_star), prefs, pp, m, cfg, "deductible", evaluations, True, diagnostics)


def solve_max_limit(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                    cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """I*(x) = min(x, m*), m* = inf{t : tb(S(t)) - tk(S(t)) <= 0}, for linear utility."""
    if prefs.utility.kind != "linear":
        raise _fallback("the max-limit construction needs linear utility")
    _require_order(prefs.tb, pp.tk, "HR", m, "hazard-rate order tb <= tk")

    def L(t: float) -> float:
        s = float(m.survival(t))
        return float(prefs.tb(s)) - float(pp.tk(s))

    limit = _first_crossing(L, _scan_points(m), up=False)
    logger.info("max limit: m* = %.10g", limit)
    diagnostics = {"m": None if math.isinf(limit) else limit}
    if math.isfinite(limit):
        diagnostics["S_at_m"] = float(m.survival(limit))
    return build_report(MaxLimit(limit), prefs, pp, m, cfg, "max_limit", 0, True, diagnostics)


def _increasing_concave(x: np.ndarray, y: np.ndarray) -> bool:
    dy = np.diff(y)
    if np.any(dy < -1e-10 * max(1.0, float(np.max(np.abs(y))))):
        return False
    slopes = dy / np.diff(x)
    return bool(np.all(np.diff(slopes) <= 1e-8 * max(1.0, float(np.max(np.abs(slopes))))))


def _check_diml_preconditions(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
                              ell: LikelihoodRatio, xs: np.ndarray) -> str:
    if pp.theta < 0:
        raise _fallback(f"theta = {pp.theta:g} < 0")
    if not m.has_density or any(a > 0 for a, _ in m.atoms()):
        raise _fallback("the loss needs a density on (0, M] and no atoms away from 0")
    if not prefs.utility.strictly_concave:
        raise _fallback("utility must be strictly concave")
    _require_order(prefs.tb, pp.tk, "LR", m, "likelihood-ratio order tb <= tk")

    values = np.asarray(ell(xs), dtype=float)
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise _fallback("l(x) must be positive and finite on the loss grid")
    if prefs.utility.is_prudent and _increasing_concave(xs, values):
        return "prudent utility, l increasing concave"
    if prefs.utility.is_hara and _increasing_concave(xs, np.log(values)):
        return "HARA utility, ln l increasing concave"
    raise _fallback("neither (u''' >= 0, l increasing concave) nor (HARA, ln l increasing concave) holds")


def _diml_candidate(prefs: BuyerPreferences, ell: LikelihoodRatio, pi: float, upsilon: float,
                    xs: np.ndarray) -> DIML:
    """Clamp x - w + pi + (u')^{-1}(l(x) upsilon) into I_c."""
    u, w, m = prefs.utility, prefs.wealth, ell.model

    def interior(x):
        return x - w + pi + u.marginal_inverse(np.asarray(ell(x)) * upsilon)

    values = np.asarray(interior(xs), dtype=float)
    if np.all(values <= 0):
        return DIML(math.inf, math.inf, u, ell, upsilon)
    if values[0] > 0:
        d = 0.0
    else:
        k = int(np.flatnonzero(values <= 0)[-1])
        d = float(xs[-1]) if k == len(xs) - 1 else optimize.bisect(
            lambda x: float(interior(x)), xs[k], xs[k + 1], xtol=BISECT_XTOL)

    def slope(x):
        phi = u.marginal_inverse(np.asarray(ell(x)) * upsilon)
        return 1.0 + np.asarray(ell.derivative(x)) * upsilon / np.asarray(u.second(phi))

    above = xs[xs > d]
    limit = m.support_bound
    if above.size:
        slopes = np.asarray(slope(above), dtype=float)
        bad = np.flatnonzero(slopes <= 0)
        if bad.size:
            j = int(bad[0])
            lo = d if j == 0 else float(above[j - 1])
            limit = optimize.bisect(lambda x: float(slope(x)), lo, float(above[j]), xtol=BISECT_XTOL) \
                if float(slope(lo)) > 0 else lo
    return DIML(d, max(limit, d), u, ell, upsilon)


def solve_diml(prefs: BuyerPreferences, pp: PremiumPrinciple, m: LossModel,
               cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Damped iteration on (pi*, upsilon) around the marginal-utility interior formula."""
    ell = LikelihoodRatio(pp.tk, prefs.tb, m)
    xs = default_grid(m, cfg.grid_n)
    xs = xs[np.asarray(m.survival(xs)) > 0]
    route = _check_diml_preconditions(prefs, pp, m, ell, xs)
    logger.info("diml preconditions hold: %s", route)

    u, w, q, omega = prefs.utility, prefs.wealth, cfg.quadrature, cfg.damping
    pi = premium(pp, Full(), m, q)
    log_ups = math.log(float(u.marginal(w - pi)))
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        I = _diml_candidate(prefs, ell, pi, math.exp(log_ups), xs)
        new_pi = premium(pp, I, m, q)
        new_log_ups = math.log(marginal_denominator(prefs, I, new_pi, m, q))
        change = max(abs(new_pi - pi), abs(new_log_ups - log_ups))
        pi = (1 - omega) * pi + omega * new_pi
        log_ups = (1 - omega) * log_ups + omega * new_log_ups
        logger.debug("diml iteration %d: pi=%.10g ln(upsilon)=%.10g change=%.3g", iterations, pi, log_ups, change)
        if change < cfg.tol:
            converged = True
            break
    if not converged:
        logger.warning("diml iteration did not settle within %d steps", cfg.max_iter)

    I = _diml_candidate(prefs, ell, pi, math.exp(log_ups), xs)
    diagnostics = {
        "d_star": None if math.isinf(I.d) else I.d,
        "m": None if math.isinf(I.m) else I.m,
        "upsilon": math.exp(log_ups),
        "precondition": route,
    }
    return build_report(I, prefs, pp, m, cfg, "diml", iterations, converged, diagnostics)
