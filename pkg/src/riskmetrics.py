"""
Signed Choquet integrals rho_j and the distortion-deviation premium.

Integrals over the loss axis are split at atoms, at the images of
distortion kinks and at contract breakpoints, integrated piecewise with
QUADPACK, and closed with an infinite-range piece for unbounded support.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import integrate, optimize

from distortions import Distortion, GiniDeviation, MeanMedianDeviation, PremiumPrinciple
from errors import DomainError, QuadratureError
from loss_models import LossModel

logger = logging.getLogger(__name__)

PIECE_LIMIT = 1000
ERROR_SLACK = 10.0
FAR_TAIL_MASS = 1e-300


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_subdivisions: int = 2 ** 16
    tail_mass: float = 1e-12

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "max_subdivisions", "tail_mass"):
            if not getattr(self, name) > 0:
                raise DomainError(f"quadrature setting {name} must be positive")


DEFAULT_QUADRATURE = QuadratureConfig()


def _pieces(a: float, b: float, points: Iterable[float]) -> list[tuple[float, float]]:
    inner = sorted({float(p) for p in points if a < p < b})
    edges = [a, *inner, b]
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def integrate_pieces(fn: Callable[[float], float], a: float, b: float,
                     cfg: QuadratureConfig = DEFAULT_QUADRATURE,
                     points: Iterable[float] = ()) -> float:
    """Adaptive quadrature of fn over [a, b] (b may be inf), split at points."""
    pieces = _pieces(a, b, points)
    if not pieces:
        return 0.0
    limit = int(min(cfg.max_subdivisions, PIECE_LIMIT))
    total, total_err = 0.0, 0.0
    for lo, hi in pieces:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            out = integrate.quad(fn, lo, hi, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                                 limit=limit, full_output=1)
        value, err = out[0], out[1]
        if not math.isfinite(value):
            raise QuadratureError(f"integral diverges on [{lo:.6g}, {hi:.6g}]", value, err)
        if len(out) > 3 and err > ERROR_SLACK * max(cfg.abs_tol, cfg.rel_tol * abs(value)):
            raise QuadratureError(f"quadrature did not converge on [{lo:.6g}, {hi:.6g}]", value, err)
        total += value
        total_err += err
    logger.debug("integrated %d pieces on [%g, %g]: %.12g (err %.2g)", len(pieces), a, b, total, total_err)
    return total


def kink_images(j: Distortion, m: LossModel) -> tuple:
    """Loss levels t where S(t) crosses a kink of j."""
    return tuple(float(m.quantile(p)) for p in j.kinks() if 0 < p < 1)


def integrate_loss_axis(fn: Callable[[float], float], m: LossModel, cfg: QuadratureConfig,
                        points: Iterable[float] = (), start: float = 0.0,
                        stop: float = math.inf) -> float:
    """
    Integrate fn over [start, stop) restricted to the support of X.

    stop caps the tail piece for integrands that overflow far out (utility
    of very negative wealth times an underflowing density).
    """
    upper = min(m.upper_limit(cfg.tail_mass), stop)
    bounded = math.isfinite(m.support_bound)
    pts = tuple(points) + tuple(m.breakpoints())
    end = m.support_bound if bounded else stop
    if upper <= start:
        return 0.0 if bounded or end <= start else integrate_pieces(fn, start, end, cfg)
    body = integrate_pieces(fn, start, upper, cfg, pts)
    if bounded or end <= upper:
        return body
    return body + integrate_pieces(fn, upper, end, cfg)


def far_limit(m: LossModel) -> float:
    """Loss level with survival 1e-300: beyond it every weighted integrand is negligible."""
    return m.upper_limit(FAR_TAIL_MASS)


def rho(j: Distortion, m: LossModel, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """rho_j(X) = integral of j(S_X(t)) dt over t >= 0 (X is non-negative)."""
    return integrate_loss_axis(lambda t: j(m.survival(t)), m, cfg, kink_images(j, m))


def rho_discrete(j: Distortion, values, probs) -> float:
    """Exact signed Choquet integral of a finite distribution (any sign)."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.argsort(values, kind="stable")
    values, probs = values[order], probs[order]
    support, inverse = np.unique(values, return_inverse=True)
    mass = np.bincount(inverse, weights=probs)
    # S at each support point: P(Y > v_i)
    tail = np.clip(1.0 - np.cumsum(mass), 0.0, 1.0)
    return float(support[0] * j(1.0) + np.sum(np.diff(support) * np.asarray(j(tail[:-1]))))


def premium_discrete(pp: PremiumPrinciple, values, probs) -> float:
    """pi(Y) = (1+theta) E[Y] + rho_k(Y) for a finite distribution."""
    return rho_discrete(pp.tk, values, probs)


def _check_contract(I, m: LossModel) -> None:
    points = np.concatenate([
        np.linspace(0.0, m.upper_limit(1e-6) or 1.0, 257),
        np.asarray(I.breakpoints(), dtype=float),
    ])
    s = np.asarray(I.slope(points), dtype=float)
    if np.any(s < -1e-12) or np.any(s > 1 + 1e-12) or np.any(np.isnan(s)):
        raise DomainError("contract is not in I_c: slope outside [0, 1]")


def segment_weights(j: Distortion, m: LossModel, knots, cfg: QuadratureConfig = DEFAULT_QUADRATURE
                    ) -> tuple[np.ndarray, float]:
    """Per-segment integrals of j(S(t)) over the knots, plus the tail beyond the last knot."""
    knots = np.asarray(knots, dtype=float)
    pts = kink_images(j, m) + tuple(m.breakpoints())
    fn = lambda t: j(m.survival(t))
    weights = np.array([
        integrate_pieces(fn, lo, hi, cfg, pts) for lo, hi in zip(knots[:-1], knots[1:])
    ])
    last = float(knots[-1])
    if math.isfinite(m.support_bound) and last >= m.support_bound:
        tail = 0.0
    else:
        tail = integrate_loss_axis(fn, m, cfg, pts, start=last)
    return weights, tail


def premium(pp: PremiumPrinciple, I, m: LossModel, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """pi = integral of I'(t) * tk(S_X(t)) dt."""
    _check_contract(I, m)
    tk = pp.tk
    if getattr(I, "kind", None) == "zero":
        return 0.0
    if getattr(I, "kind", None) == "piecewise_linear":
        w, tail = segment_weights(tk, m, I.knots, cfg)
        return float(np.dot(I.slopes, w) + (I.ext_slope * tail if I.ext_slope else 0.0))
    points = tuple(I.breakpoints()) + kink_images(tk, m)
    return integrate_loss_axis(lambda t: I.slope(t) * tk(m.survival(t)), m, cfg, points)


@dataclass(frozen=True)
class PremiumBreakdown:
    premium: float
    loading_part: float
    deviation_part: float

    def to_dict(self) -> dict:
        return {"premium": self.premium, "loading_part": self.loading_part,
                "deviation_part": self.deviation_part}


def premium_breakdown(pp: PremiumPrinciple, I, m: LossModel,
                      cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> PremiumBreakdown:
    """Canonical split pi = (1+theta) E[I(X)] + rho_k(I(X))."""
    _check_contract(I, m)
    points = tuple(I.breakpoints()) + kink_images(pp.k, m)
    expected = integrate_loss_axis(lambda t: I.slope(t) * m.survival(t), m, cfg, points)
    deviation = integrate_loss_axis(lambda t: I.slope(t) * pp.k(m.survival(t)), m, cfg, points)
    loading = (1 + pp.theta) * expected
    return PremiumBreakdown(premium=loading + deviation, loading_part=loading, deviation_part=deviation)


@dataclass(frozen=True)
class CrossCheck:
    rho_value: float
    check_value: float
    z_score: Optional[float] = None
    argmin: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def gini_cross_check(m: LossModel, n_samples: int, seed: int = 42,
                     cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> CrossCheck:
    """rho_{p-p^2} against the Monte Carlo estimate of E|Y - Y'| / 2."""
    if n_samples < 2:
        raise DomainError("need at least two Monte Carlo pairs")
    rho_value = rho(GiniDeviation(), m, cfg)
    rng = np.random.default_rng(seed)
    y1 = m.sample(rng, n_samples)
    y2 = m.sample(rng, n_samples)
    half_gaps = 0.5 * np.abs(y1 - y2)
    mc_value = float(half_gaps.mean())
    se = float(half_gaps.std(ddof=1) / math.sqrt(n_samples))
    if se > 0:
        z = (mc_value - rho_value) / se
    else:
        z = 0.0 if abs(mc_value - rho_value) < 1e-12 else math.inf
    logger.info("gini cross-check: rho=%.10g mc=%.10g z=%.3f", rho_value, mc_value, z)
    return CrossCheck(rho_value=rho_value, check_value=mc_value, z_score=z)


def mean_absolute_deviation(m: LossModel, y: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """E|X - y| = integral of F below y plus integral of S above y."""
    if y <= 0:
        return m.mean - y
    below = integrate_pieces(lambda t: m.cdf(t), 0.0, y, cfg, m.breakpoints())
    above = integrate_loss_axis(lambda t: m.survival(t), m, cfg, start=y)
    return below + above


def mean_median_cross_check(m: LossModel, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> CrossCheck:
    """rho_{min(p,1-p)} against the golden-section minimum of E|Y - y|."""
    rho_value = rho(MeanMedianDeviation(), m, cfg)
    hi = max(m.upper_limit(1e-3), 1e-6)
    res = optimize.minimize_scalar(lambda y: mean_absolute_deviation(m, y, cfg),
                                   bracket=(0.0, hi), method="golden", options={"xtol": 1e-10})
    logger.info("mean-median cross-check: rho=%.10g min=%.10g at y=%.6g", rho_value, res.fun, res.x)
    return CrossCheck(rho_value=rho_value, check_value=float(res.fun), argmin=float(res.x))
