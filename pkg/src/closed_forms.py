"""
Closed-form optimal contracts for CARA utility and zero-inflated
exponential losses under three seller distortions: power, dual-power and
linear-plus-Gini.

In each family the deductible d* is the unique non-negative root of a
scalar function G with G(0) <= 0 and G(d) -> inf, found by doubling
bracket, bisection and one Newton step on the analytic G'.
"""

import logging
import math
from typing import Callable, Optional

from scipy import optimize

from contracts import DIML, DeductibleCoinsurance, LikelihoodRatio, Zero
from distortions import ConvexDualPower, DualPower, LinearPlusGini, Power, PremiumPrinciple
from errors import DomainError, PreconditionError
from loss_models import ZeroInflatedExponential
from rdeu import BuyerPreferences
from solver import SolveReport, SolverConfig, build_report, solve_general
from utilities import CARA

logger = logging.getLogger(__name__)

ROOT_XTOL = 1e-12
BRACKET_TAIL = 1e-10


def _check_common(gamma: float, lam: float, theta: float, q: float, w: float) -> None:
    if not gamma > 0:
        raise DomainError(f"risk aversion gamma must be positive, got {gamma}")
    if not lam > 0:
        raise DomainError(f"loss rate lambda must be positive, got {lam}")
    if not theta >= 0:
        raise DomainError(f"closed forms need theta >= 0, got {theta}")
    if not 0 < q <= 1:
        raise DomainError(f"loss probability q must lie in (0, 1], got {q}")
    if not math.isfinite(w):
        raise DomainError(f"wealth must be finite, got {w}")


def _growth(delta: float, d: float) -> float:
    """(e^{delta d} - 1) / delta, continuous at delta = 0."""
    return d if delta == 0 else math.expm1(delta * d) / delta


def find_deductible(G: Callable[[float], float], dG: Callable[[float], float], q: float, lam: float) -> float:
    """Unique non-negative root of G, 0 when G(0) >= 0."""
    if G(0.0) >= 0:
        return 0.0
    d_max = math.log(q / BRACKET_TAIL) / lam
    lo, hi = 0.0, min(1.0, d_max)
    while G(hi) < 0:
        if hi >= d_max:
            raise PreconditionError(f"G has no sign change on [0, {d_max:.6g}]; use solve_general instead")
        lo, hi = hi, min(2 * hi, d_max)
    root = optimize.bisect(G, lo, hi, xtol=ROOT_XTOL)

    slope = dG(root)
    if slope != 0 and math.isfinite(slope):
        step = root - G(root) / slope
        if lo <= step <= hi and abs(G(step)) <= abs(G(root)):
            root = step
    logger.debug("deductible root %.15g in [%.6g, %.6g], G=%.3g", root, lo, hi, G(root))
    return root


def _problem(gamma: float, q: float, lam: float, w: float, tk, b=None):
    prefs = BuyerPreferences(CARA(gamma), b, w) if b is not None else BuyerPreferences(CARA(gamma), wealth=w)
    return prefs, PremiumPrinciple.from_seller(tk), ZeroInflatedExponential(q, lam)


def solve_power_exponential(gamma: float, lam: float, c: float, theta: float, q: float, w: float,
                            a_buyer: Optional[float] = None,
                            cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """
    Power seller distortion (1+theta) p^c, 0 < c < 1.

    No insurance is optimal when lam (1-c) >= gamma; otherwise the optimum
    is a deductible with constant coinsurance slope 1 - lam (1-c) / gamma.
    A buyer distortion 1 - (1-p)^a is handled by solving the substituted
    problem (q^a, lam a, c / a) and verifying against the original one.
    """
    _check_common(gamma, lam, theta, q, w)
    if not 0 < c < 1:
        raise DomainError(f"power exponent c must lie in (0, 1), got {c}")
    b = None
    if a_buyer is not None:
        if not c < a_buyer < 1:
            raise DomainError(f"buyer exponent a must satisfy c < a < 1, got a={a_buyer}, c={c}")
        b = ConvexDualPower(a_buyer)
    prefs, pp, m = _problem(gamma, q, lam, w, Power(theta, c), b)

    qs, ls, cs = (q, lam, c) if a_buyer is None else (q ** a_buyer, lam * a_buyer, c / a_buyer)
    if ls * (1 - cs) >= gamma:
        logger.info("power family: lambda(1-c)=%.6g >= gamma=%.6g, no insurance", ls * (1 - cs), gamma)
        return build_report(Zero(), prefs, pp, m, cfg, "power_exponential", 0, True, {"d_star": None, "slope": 0.0})

    alpha = 1 - ls * (1 - cs) / gamma
    delta = gamma - ls

    def xi(d):
        return (1 - qs) + qs * ls * _growth(delta, d) + (qs / cs) * math.exp(delta * d)

    def G(d):
        return qs ** (1 - cs) * math.exp((delta + ls * cs) * d) - cs * (1 + theta) * xi(d)

    def dG(d):
        return (gamma - ls * (1 - cs)) * math.exp(delta * d) * (
            qs ** (1 - cs) * math.exp(ls * cs * d) - (1 + theta) * qs)

    d_star = find_deductible(G, dG, qs, ls)
    logger.info("power family: d*=%.10g, slope %.6g", d_star, alpha)
    diagnostics = {"d_star": d_star, "slope": alpha, "xi": xi(d_star), "G_at_root": G(d_star)}
    if a_buyer is not None:
        diagnostics["substituted"] = {"q": qs, "lambda": ls, "c": cs}
    return build_report(DeductibleCoinsurance(d_star, alpha), prefs, pp, m, cfg,
                        "power_exponential", 0, True, diagnostics)


def _fallback_general(prefs, pp, m, cfg: SolverConfig, family: str, reason: str) -> SolveReport:
    logger.info("%s: %s, falling back to the general solver", family, reason)
    report = solve_general(prefs, pp, m, cfg)
    report.solver_path = f"{family}:general"
    report.diagnostics["fallback_reason"] = reason
    return report


def solve_dualpower_exponential(gamma: float, lam: float, c: float, theta: float, q: float, w: float,
                                cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Dual-power seller distortion (1+theta)(1 - (1-p)^c), c > 1: deductible with no upper limit."""
    _check_common(gamma, lam, theta, q, w)
    if not c > 1:
        raise DomainError(f"dual-power exponent c must exceed 1, got {c}")
    prefs, pp, m = _problem(gamma, q, lam, w, DualPower(theta, c))
    if not gamma * (1 - q) > q * lam * (c - 1):
        return _fallback_general(prefs, pp, m, cfg, "dualpower_exponential",
                                 "gamma(1-q) <= q lambda (c-1)")

    delta = gamma - lam

    def A(d):
        return 1 - q * math.exp(-lam * d)

    def tail(d):
        return (1 - q) + q * lam * _growth(delta, d)

    def G(d):
        a = A(d)
        return math.exp(gamma * d) * ((1 + theta) * a ** c - theta) - c * (1 + theta) * a ** (c - 1) * tail(d)

    def dG(d):
        a = A(d)
        return (gamma * math.exp(gamma * d) * ((1 + theta) * a ** c - theta)
                - c * (c - 1) * (1 + theta) * a ** (c - 2) * q * lam * math.exp(-lam * d) * tail(d))

    d_star = find_deductible(G, dG, q, lam)
    a = A(d_star)
    xi = tail(d_star) + (math.exp(gamma * d_star) / c) * (1 - a ** c) / a ** (c - 1)
    contract = DIML(d_star, math.inf, prefs.utility, LikelihoodRatio(pp.tk, prefs.tb, m), xi)
    logger.info("dual-power family: d*=%.10g", d_star)
    diagnostics = {"d_star": d_star, "xi": xi, "G_at_root": G(d_star)}
    return build_report(contract, prefs, pp, m, cfg, "dualpower_exponential", 0, True, diagnostics)


def solve_gini_exponential(gamma: float, lam: float, alpha: float, theta: float, q: float, w: float,
                           cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Seller distortion (1+theta) p + alpha (p - p^2): deductible with no upper limit."""
    _check_common(gamma, lam, theta, q, w)
    if not alpha >= 0:
        raise DomainError(f"deviation weight alpha must be >= 0, got {alpha}")
    prefs, pp, m = _problem(gamma, q, lam, w, LinearPlusGini(theta, alpha))

    def B(d):
        return (1 + theta) + alpha * (1 - 2 * q * math.exp(-lam * d))

    if not gamma * B(0.0) > 2 * alpha * q * lam:
        return _fallback_general(prefs, pp, m, cfg, "gini_exponential",
                                 "gamma((1+theta) + alpha(1-2q)) <= 2 alpha q lambda")

    delta = gamma - lam

    def G(d):
        return (math.exp(gamma * d) * (1 - alpha * q * q * math.exp(-2 * lam * d))
                - B(d) * (1 + q * gamma * _growth(delta, d)))

    def dG(d):
        e = math.exp(-lam * d)
        return (gamma * math.exp(gamma * d) * (1 - alpha * q * q * e * e)
                + 2 * lam * alpha * q * q * math.exp((gamma - 2 * lam) * d)
                - 2 * alpha * q * lam * e * (1 + q * gamma * _growth(delta, d))
                - B(d) * q * gamma * math.exp(delta * d))

    d_star = find_deductible(G, dG, q, lam)
    xi = math.exp(gamma * d_star) / B(d_star)
    contract = DIML(d_star, math.inf, prefs.utility, LikelihoodRatio(pp.tk, prefs.tb, m), xi)
    logger.info("gini family: d*=%.10g", d_star)
    diagnostics = {"d_star": d_star, "xi": xi, "G_at_root": G(d_star)}
    return build_report(contract, prefs, pp, m, cfg, "gini_exponential", 0, True, diagnostics)


CLOSED_FORMS = {
    "power_exponential": solve_power_exponential,
    "dualpower_exponential": solve_dualpower_exponential,
    "gini_exponential": solve_gini_exponential,
}

_SELLER_KINDS = {
    "power_exponential": Power,
    "dualpower_exponential": DualPower,
    "gini_exponential": LinearPlusGini,
}


def closed_form_arguments(route: str, prefs: BuyerPreferences, seller, m) -> dict:
    """Scalar arguments of a closed-form solver, read off a configured problem."""
    if route not in CLOSED_FORMS:
        raise DomainError(f"unknown closed-form route {route!r}")
    expected = _SELLER_KINDS[route]
    if not isinstance(seller, expected):
        raise PreconditionError(f"{route} needs a premium given as seller of kind {expected.kind!r}")
    if not isinstance(m, ZeroInflatedExponential):
        raise PreconditionError(f"{route} needs a zero-inflated exponential loss")
    if not isinstance(prefs.utility, CARA):
        raise PreconditionError(f"{route} needs CARA utility")
    args = {"gamma": prefs.utility.gamma, "lam": m.lam, "theta": seller.theta, "q": m.q, "w": prefs.wealth}
    if route == "gini_exponential":
        args["alpha"] = seller.alpha
    else:
        args["c"] = seller.c
    b_kind = getattr(prefs.b, "kind", None)
    if route == "power_exponential" and isinstance(prefs.b, ConvexDualPower):
        args["a_buyer"] = prefs.b.a
    elif b_kind != "linear" or prefs.b(0.5) != 0.5:
        raise PreconditionError(f"{route} needs the identity buyer distortion")
    return args
