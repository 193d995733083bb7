"""
Rank-dependent expected utility of the buyer's terminal wealth.

Terminal wealth is w - R(X) - pi with R = X - I(X); its RDEU value is
the integral of u(w - R(x) - pi) against the distorted measure b(F_X).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from distortions import IDENTITY, BuyerDual, Distortion, distortion_from_dict
from errors import ConfigError, DomainError
from loss_models import LossModel
from riskmetrics import DEFAULT_QUADRATURE, QuadratureConfig, far_limit, integrate_loss_axis
from utilities import Utility, utility_from_dict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BuyerPreferences:
    utility: Utility
    b: Distortion = IDENTITY
    wealth: float = 0.0
    allow_nonconvex: bool = False
    _dual: BuyerDual = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.wealth):
            raise DomainError(f"initial wealth must be finite, got {self.wealth}")
        object.__setattr__(self, "_dual", BuyerDual(self.b, self.allow_nonconvex))

    @property
    def dual(self) -> BuyerDual:
        return self._dual

    @property
    def tb(self) -> Distortion:
        return self._dual.tb

    def to_dict(self) -> dict:
        out = {"utility": self.utility.to_dict(), "b": self.b.to_dict(), "wealth": self.wealth}
        if self.allow_nonconvex:
            out["allow_nonconvex"] = True
        return out


def preferences_from_dict(spec: dict, path: str = "preferences") -> BuyerPreferences:
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected an object")
    try:
        utility = utility_from_dict(spec["utility"], f"{path}.utility")
        b = distortion_from_dict(spec["b"], f"{path}.b") if "b" in spec else IDENTITY
        return BuyerPreferences(utility, b, float(spec["wealth"]), bool(spec.get("allow_nonconvex", False)))
    except KeyError as e:
        raise ConfigError(f"{path}: missing field {e.args[0]!r}")
    except DomainError as e:
        raise ConfigError(f"{path}: {e}")


@dataclass(frozen=True)
class WealthOutcome:
    """Terminal wealth w - R(x) - pi for a retention function R."""
    w: float
    R: Callable
    pi: float

    def terminal(self, x):
        return self.w - np.asarray(self.R(x), dtype=float) - self.pi

    def is_monotone(self, xs, tol: float = 1e-12) -> bool:
        """Terminal wealth must be non-increasing in the loss."""
        values = np.atleast_1d(self.terminal(np.sort(np.asarray(xs, dtype=float))))
        return bool(np.all(np.diff(values) <= tol))


def atom_weights(b: Distortion, m: LossModel) -> list[tuple[float, float]]:
    """b-increments b(F(a)) - b(F(a-)) at each atom a."""
    out = []
    for a, p in m.atoms():
        s = float(m.survival(a))
        out.append((a, float(b(min(1.0, 1.0 - s))) - float(b(max(0.0, 1.0 - s - p)))))
    return out


def _density_weight(b: Distortion, m: LossModel, x: float) -> float:
    return float(b.derivative_from_survival(m.survival(x))) * float(m.density(x))


def _split_points(prefs: BuyerPreferences, I, m: LossModel) -> tuple:
    images = tuple(float(m.quantile(1.0 - p)) for p in prefs.b.kinks() if 0 < p < 1)
    return tuple(I.breakpoints()) + images


def _weighted_integral(prefs: BuyerPreferences, I, pi: float, m: LossModel, g: Callable,
                       t: float, cfg: QuadratureConfig) -> float:
    """Integral of g(terminal wealth) 1{x > t} db(F(x)) over atoms and the continuous part."""
    outcome = WealthOutcome(prefs.wealth, I.retention, pi)
    total = 0.0
    for a, inc in atom_weights(prefs.b, m):
        if a > t and inc > 0:
            total += inc * float(g(float(outcome.terminal(a))))
    if m.has_density:
        fn = lambda x: float(g(float(outcome.terminal(x)))) * _density_weight(prefs.b, m, x)
        total += integrate_loss_axis(fn, m, cfg, _split_points(prefs, I, m),
                                     start=max(t, 0.0), stop=far_limit(m))
    return total


def rdeu_value(prefs: BuyerPreferences, I, pi: float, m: LossModel,
               cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Integral of u(w - R(x) - pi) db(F_X(x)), atom at 0 included."""
    value = _weighted_integral(prefs, I, pi, m, prefs.utility.u, -math.inf, cfg)
    logger.debug("rdeu value %.12g at premium %.10g", value, pi)
    return value


def marginal_weight(prefs: BuyerPreferences, I, pi: float, m: LossModel, t: float,
                    cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Tail-weighted marginal utility: integral of u'(w - R(x) - pi) 1{x > t} db(F_X(x))."""
    return _weighted_integral(prefs, I, pi, m, prefs.utility.marginal, t, cfg)


def marginal_denominator(prefs: BuyerPreferences, I, pi: float, m: LossModel,
                         cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """marginal_weight with every loss level included, the normalizer of L."""
    return _weighted_integral(prefs, I, pi, m, prefs.utility.marginal, -math.inf, cfg)


def certainty_equivalent(prefs: BuyerPreferences, value: float) -> float:
    return float(prefs.utility.inverse(value))
