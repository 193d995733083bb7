"""
Distortion functions, premium principles in canonical form, and
stochastic-order comparisons between distortions.

A distortion is a map j: [0, 1] -> R with j(0) = 0. Seller-side kinds are
concave (not necessarily monotone); the buyer's b is convex and increasing.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from errors import ConfigError, DomainError, IndeterminateOrderError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

P_SLACK = 1e-12
CONCAVITY_GRID = 1001
CONCAVITY_TOL = 1e-12
FSD_TOL = 1e-10
RATIO_SLACK = 1e-9


def _as_probability(p: ArrayLike) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if np.any(arr < -P_SLACK) or np.any(arr > 1 + P_SLACK) or np.any(np.isnan(arr)):
        bad = arr[(arr < -P_SLACK) | (arr > 1 + P_SLACK) | np.isnan(arr)].ravel()[0]
        raise DomainError(f"probability {bad!r} outside [0, 1]")
    return np.clip(arr, 0.0, 1.0)


def _out(arr: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(arr) if np.ndim(like) == 0 else arr


class Distortion:
    """Base class: subclasses implement _value, _derivative and _second."""

    kind = "abstract"

    def __call__(self, p: ArrayLike) -> ArrayLike:
        return _out(self._value(_as_probability(p)), p)

    def derivative(self, p: ArrayLike) -> ArrayLike:
        """Derivative j'(p); the left derivative at kinks."""
        return _out(self._derivative(_as_probability(p)), p)

    def second_derivative(self, p: ArrayLike) -> ArrayLike:
        return _out(self._second(_as_probability(p)), p)

    def derivative_from_survival(self, s: ArrayLike) -> ArrayLike:
        """j'(1 - s), without forming 1 - s where the kind allows it."""
        return _out(self._derivative_complement(_as_probability(s)), s)

    def kinks(self) -> tuple:
        """Interior probabilities where the derivative jumps."""
        return ()

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _value(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _derivative(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _second(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _derivative_complement(self, s: np.ndarray) -> np.ndarray:
        return self._derivative(1 - s)


@dataclass(frozen=True)
class Linear(Distortion):
    slope: float = 1.0
    kind = "linear"

    def _value(self, p):
        return self.slope * p

    def _derivative(self, p):
        return np.full_like(p, self.slope)

    def _second(self, p):
        return np.zeros_like(p)

    def to_dict(self):
        return {"kind": self.kind, "slope": self.slope}


@dataclass(frozen=True)
class Power(Distortion):
    """(1+theta) * p**c with 0 < c <= 1."""
    theta: float = 0.0
    c: float = 0.5
    kind = "power"

    def __post_init__(self):
        if not 0 < self.c <= 1:
            raise DomainError(f"power exponent c must lie in (0, 1], got {self.c}")
        if self.theta <= -1:
            raise DomainError(f"loading theta must exceed -1, got {self.theta}")

    def _value(self, p):
        return (1 + self.theta) * p ** self.c

    def _derivative(self, p):
        with np.errstate(divide="ignore", over="ignore"):
            return (1 + self.theta) * self.c * p ** (self.c - 1)

    def _second(self, p):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return (1 + self.theta) * self.c * (self.c - 1) * p ** (self.c - 2)

    def to_dict(self):
        return {"kind": self.kind, "theta": self.theta, "c": self.c}


@dataclass(frozen=True)
class DualPower(Distortion):
    """(1+theta) * (1 - (1-p)**c) with c > 1."""
    theta: float = 0.0
    c: float = 2.0
    kind = "dual_power"

    def __post_init__(self):
        if self.c <= 1:
            raise DomainError(f"dual-power exponent c must exceed 1, got {self.c}")
        if self.theta <= -1:
            raise DomainError(f"loading theta must exceed -1, got {self.theta}")

    def _value(self, p):
        return (1 + self.theta) * (1 - (1 - p) ** self.c)

    def _derivative(self, p):
        return (1 + self.theta) * self.c * (1 - p) ** (self.c - 1)

    def _second(self, p):
        with np.errstate(divide="ignore"):
            return -(1 + self.theta) * self.c * (self.c - 1) * (1 - p) ** (self.c - 2)

    def to_dict(self):
        return {"kind": self.kind, "theta": self.theta, "c": self.c}


@dataclass(frozen=True)
class GiniDeviation(Distortion):
    kind = "gini"

    def _value(self, p):
        return p - p * p

    def _derivative(self, p):
        return 1 - 2 * p

    def _second(self, p):
        return np.full_like(p, -2.0)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class MeanMedianDeviation(Distortion):
    kind = "mean_median"

    def _value(self, p):
        return np.minimum(p, 1 - p)

    def _derivative(self, p):
        return np.where(p <= 0.5, 1.0, -1.0)

    def _second(self, p):
        return np.zeros_like(p)

    def kinks(self):
        return (0.5,)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class LinearPlusGini(Distortion):
    """(1+theta) p + alpha (p - p^2)."""
    theta: float = 0.0
    alpha: float = 0.0
    kind = "linear_plus_gini"

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError(f"deviation weight alpha must be >= 0, got {self.alpha}")

    def _value(self, p):
        return (1 + self.theta) * p + self.alpha * (p - p * p)

    def _derivative(self, p):
        return (1 + self.theta) + self.alpha * (1 - 2 * p)

    def _second(self, p):
        return np.full_like(p, -2 * self.alpha)

    def to_dict(self):
        return {"kind": self.kind, "theta": self.theta, "alpha": self.alpha}


@dataclass(frozen=True)
class LinearPlusMeanMedian(Distortion):
    """(1+theta) p + alpha min(p, 1-p)."""
    theta: float = 0.0
    alpha: float = 0.0
    kind = "linear_plus_mean_median"

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError(f"deviation weight alpha must be >= 0, got {self.alpha}")

    def _value(self, p):
        return (1 + self.theta) * p + self.alpha * np.minimum(p, 1 - p)

    def _derivative(self, p):
        return (1 + self.theta) + self.alpha * np.where(p <= 0.5, 1.0, -1.0)

    def _second(self, p):
        return np.zeros_like(p)

    def kinks(self):
        return (0.5,) if self.alpha > 0 else ()

    def to_dict(self):
        return {"kind": self.kind, "theta": self.theta, "alpha": self.alpha}


@dataclass(frozen=True)
class ConvexDualPower(Distortion):
    """Buyer distortion b(p) = 1 - (1-p)**a, convex for 0 < a < 1."""
    a: float = 0.5
    kind = "convex_dual_power"

    def __post_init__(self):
        if not 0 < self.a <= 1:
            raise DomainError(f"buyer exponent a must lie in (0, 1], got {self.a}")

    def _value(self, p):
        return 1 - (1 - p) ** self.a

    def _derivative(self, p):
        with np.errstate(divide="ignore"):
            return self.a * (1 - p) ** (self.a - 1)

    def _derivative_complement(self, s):
        with np.errstate(divide="ignore"):
            return self.a * s ** (self.a - 1)

    def _second(self, p):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.a * (1 - self.a) * (1 - p) ** (self.a - 2)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class Tabulated(Distortion):
    """Piecewise-linear interpolation through (knots, values)."""
    knots: tuple = (0.0, 1.0)
    values: tuple = (0.0, 1.0)
    kind = "tabulated"

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.ndim != 1 or knots.shape != values.shape or len(knots) < 2:
            raise DomainError("tabulated distortion needs matching knot/value arrays of length >= 2")
        if knots[0] != 0.0 or knots[-1] != 1.0 or np.any(np.diff(knots) <= 0):
            raise DomainError("tabulated knots must increase strictly from 0 to 1")
        if abs(values[0]) > P_SLACK:
            raise DomainError(f"tabulated distortion must vanish at 0, got {values[0]}")
        if np.any(values < -P_SLACK):
            raise DomainError("tabulated values must be non-negative")
        object.__setattr__(self, "knots", tuple(float(k) for k in knots))
        object.__setattr__(self, "values", tuple(float(v) for v in values))

    def _slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def _value(self, p):
        return np.interp(p, self.knots, self.values)

    def _derivative(self, p):
        # segment i covers (k_i, k_{i+1}]; p = 0 takes the first segment
        idx = np.searchsorted(self.knots, p, side="left") - 1
        idx = np.clip(idx, 0, len(self.knots) - 2)
        return self._slopes()[idx]

    def _second(self, p):
        return np.zeros_like(p)

    def kinks(self):
        return tuple(self.knots[1:-1])

    def to_dict(self):
        return {"kind": self.kind, "knots": list(self.knots), "values": list(self.values)}


@dataclass(frozen=True)
class Sum(Distortion):
    """Weighted sum of distortions."""
    terms: tuple = ()
    weights: tuple = ()
    kind = "sum"

    def __post_init__(self):
        if len(self.terms) != len(self.weights) or not self.terms:
            raise DomainError("sum distortion needs one weight per term")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def _combine(self, method: str, p: np.ndarray) -> np.ndarray:
        total = np.zeros_like(p)
        for w, term in zip(self.weights, self.terms):
            if w != 0.0:
                total = total + w * getattr(term, method)(p)
        return total

    def _value(self, p):
        return self._combine("_value", p)

    def _derivative(self, p):
        return self._combine("_derivative", p)

    def _second(self, p):
        return self._combine("_second", p)

    def kinks(self):
        points = set()
        for w, term in zip(self.weights, self.terms):
            if w != 0.0:
                points.update(term.kinks())
        return tuple(sorted(points))

    def to_dict(self):
        return {
            "kind": self.kind,
            "terms": [t.to_dict() for t in self.terms],
            "weights": list(self.weights),
        }


@dataclass(frozen=True)
class Dual(Distortion):
    """p -> base(1) - base(1 - p); for a buyer b this is tb(p) = 1 - b(1-p)."""
    base: Distortion = field(default_factory=Linear)
    kind = "dual"

    def _value(self, p):
        return self.base._value(np.ones_like(p)) - self.base._value(1 - p)

    def _derivative(self, p):
        return self.base._derivative_complement(p)

    def _second(self, p):
        return -self.base._second(1 - p)

    def kinks(self):
        return tuple(sorted(1 - k for k in self.base.kinks()))

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict()}


IDENTITY = Linear(1.0)
ZERO = Linear(0.0)


def symmetric_deviation(tilde_h: Distortion) -> Distortion:
    """h(p) = h~(p) + h~(1-p) - h~(1), symmetric about p = 1/2."""
    return Sum((tilde_h, Dual(tilde_h)), (1.0, -1.0))


def _grid(n: int = CONCAVITY_GRID) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def is_concave(j: Distortion, grid_n: int = CONCAVITY_GRID, tol: float = CONCAVITY_TOL) -> bool:
    """Sampled three-point concavity test on consecutive grid triples."""
    p = _grid(grid_n)
    v = j(p)
    return bool(np.all(v[1:-1] - 0.5 * (v[:-2] + v[2:]) >= -tol))


def is_convex(j: Distortion, grid_n: int = CONCAVITY_GRID, tol: float = CONCAVITY_TOL) -> bool:
    p = _grid(grid_n)
    v = j(p)
    return bool(np.all(v[1:-1] - 0.5 * (v[:-2] + v[2:]) <= tol))


@dataclass(frozen=True)
class PremiumPrinciple:
    """Canonical form (theta, k): pi(Y) = (1+theta) E[Y] + rho_k(Y)."""
    theta: float
    k: Distortion = ZERO

    def __post_init__(self):
        if self.theta <= -1:
            raise DomainError(f"loading theta must exceed -1, got {self.theta}")
        if abs(self.k(0.0)) > P_SLACK or abs(self.k(1.0)) > P_SLACK:
            raise DomainError("deviation distortion k must vanish at 0 and 1")
        if not is_concave(self.k):
            raise DomainError("deviation distortion k must be concave")
        if np.any(self.tk(_grid()) < -P_SLACK):
            raise DomainError("effective seller distortion (1+theta)p + k(p) must be non-negative")

    @property
    def tk(self) -> Distortion:
        """Effective seller distortion (1+theta) p + k(p)."""
        return Sum((Linear(1 + self.theta), self.k), (1.0, 1.0))

    @classmethod
    def from_seller(cls, tk: Distortion) -> "PremiumPrinciple":
        """Canonical form of an effective seller distortion (need not be monotone)."""
        theta = tk(1.0) - 1
        return cls(theta=theta, k=Sum((tk, IDENTITY), (1.0, -(1 + theta))))

    def to_dict(self) -> dict:
        return {"theta": self.theta, "k": self.k.to_dict()}


@dataclass(frozen=True)
class BuyerDual:
    """Buyer distortion b and its dual tb(p) = 1 - b(1-p)."""
    b: Distortion = IDENTITY
    allow_nonconvex: bool = False

    def __post_init__(self):
        p = _grid()
        v = self.b(p)
        if abs(v[0]) > P_SLACK or abs(v[-1] - 1.0) > P_SLACK:
            raise DomainError("buyer distortion must satisfy b(0) = 0 and b(1) = 1")
        if np.any(np.diff(v) <= 0):
            raise DomainError("buyer distortion must be strictly increasing")
        if not is_convex(self.b):
            if not self.allow_nonconvex:
                raise DomainError("buyer distortion must be convex (set allow_nonconvex to override)")
            logger.warning("non-convex buyer distortion accepted by override; special-case solver guarantees do not apply")

    @property
    def tb(self) -> Distortion:
        return Dual(self.b)


def canonical_decompose(g: Distortion, h: Distortion) -> PremiumPrinciple:
    """Split g + h into (1+theta) p + k(p) with theta = g(1) - 1."""
    p = _grid()
    g1 = g(1.0)
    if g1 <= 0:
        raise DomainError(f"invalid premium principle: g(1) = {g1} must be positive")
    if np.any(np.diff(g(p)) < -P_SLACK):
        raise DomainError("g must be non-decreasing")
    if abs(h(1.0)) > P_SLACK:
        raise DomainError("h must vanish at 0 and 1")

    theta = g1 - 1
    k = Sum((g, h, IDENTITY), (1.0, 1.0, -(1 + theta)))
    if np.any(k(p) < -1e-10):
        worst = p[np.argmin(k(p))]
        raise DomainError(f"inconsistent inputs: deviation part negative at p={worst:.4g}")
    return PremiumPrinciple(theta=theta, k=k)


@dataclass(frozen=True)
class OrderResult:
    holds: bool
    fails_at: Optional[float] = None


ORDERS = ("FSD", "HR", "LR")


def _has_tabulated(j: Distortion) -> bool:
    if isinstance(j, Tabulated):
        return True
    if isinstance(j, Sum):
        return any(_has_tabulated(t) for t in j.terms)
    if isinstance(j, Dual):
        return _has_tabulated(j.base)
    return False


def _slopes_for_order(j: Distortion, p: np.ndarray, step: float) -> np.ndarray:
    if not _has_tabulated(j):
        return np.asarray(j.derivative(p), dtype=float)
    lo = np.clip(p - step, 0.0, 1.0)
    hi = np.clip(p + step, 0.0, 1.0)
    return (j(hi) - j(lo)) / (hi - lo)


def _first_decrease(p: np.ndarray, ratio: np.ndarray) -> Optional[float]:
    drops = ratio[1:] < ratio[:-1] - RATIO_SLACK * np.maximum(1.0, np.abs(ratio[:-1]))
    if np.any(drops):
        return float(p[1:][np.argmax(drops)])
    return None


def check_order(j1: Distortion, j2: Distortion, order: str,
                grid_n: int = CONCAVITY_GRID, p_max: float = 1.0) -> OrderResult:
    """Test j1 <= j2 in the FSD, HR or LR sense on a grid over [0, p_max]."""
    order = order.upper()
    if order not in ORDERS:
        raise DomainError(f"unknown order {order!r}; expected one of {ORDERS}")
    if grid_n < 3:
        raise DomainError("grid_n must be at least 3")
    if not 0 < p_max <= 1:
        raise DomainError(f"p_max must lie in (0, 1], got {p_max}")

    p = np.linspace(0.0, p_max, grid_n)

    if order == "FSD":
        bad = j1(p) > j2(p) + FSD_TOL
        if np.any(bad):
            return OrderResult(False, float(p[np.argmax(bad)]))
        return OrderResult(True)

    interior = p[1:-1] if p_max == 1.0 else p[1:]
    if order == "HR":
        num, den = j1(interior), j2(interior)
    else:
        step = 1.0 / grid_n
        num = _slopes_for_order(j1, interior, step)
        den = _slopes_for_order(j2, interior, step)

    mask = den > 0
    if not np.any(mask):
        raise IndeterminateOrderError(f"{order} ratio undefined: denominator vanishes on the whole interior")
    fails_at = _first_decrease(interior[mask], num[mask] / den[mask])
    if fails_at is not None:
        logger.debug("%s order fails at p=%.6g", order, fails_at)
        return OrderResult(False, fails_at)
    return OrderResult(True)


_SIMPLE_KINDS = {
    "linear": (Linear, ("slope",)),
    "power": (Power, ("theta", "c")),
    "dual_power": (DualPower, ("theta", "c")),
    "gini": (GiniDeviation, ()),
    "mean_median": (MeanMedianDeviation, ()),
    "linear_plus_gini": (LinearPlusGini, ("theta", "alpha")),
    "linear_plus_mean_median": (LinearPlusMeanMedian, ("theta", "alpha")),
    "convex_dual_power": (ConvexDualPower, ("a",)),
}


def distortion_from_dict(spec: dict, path: str = "distortion") -> Distortion:
    """Build a distortion from its JSON description."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{path}: expected an object with a 'kind' field")
    kind = spec["kind"]
    try:
        if kind in _SIMPLE_KINDS:
            cls, names = _SIMPLE_KINDS[kind]
            return cls(**{n: float(spec[n]) for n in names if n in spec})
        if kind == "tabulated":
            return Tabulated(tuple(spec["knots"]), tuple(spec["values"]))
        if kind == "sum":
            terms = tuple(distortion_from_dict(t, f"{path}.terms[{i}]") for i, t in enumerate(spec["terms"]))
            return Sum(terms, tuple(spec["weights"]))
        if kind == "dual":
            return Dual(distortion_from_dict(spec["base"], f"{path}.base"))
    except KeyError as e:
        raise ConfigError(f"{path}: missing field {e.args[0]!r} for kind {kind!r}")
    except (TypeError, DomainError) as e:
        raise ConfigError(f"{path}: {e}")
    raise ConfigError(f"{path}: unknown distortion kind {kind!r}")


def premium_principle_from_dict(spec: dict, path: str = "premium") -> PremiumPrinciple:
    """Accepts exactly one of {g, h}, {theta, k} or {seller}."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: expected an object")
    forms = [("g" in spec or "h" in spec), ("theta" in spec or "k" in spec), ("seller" in spec)]
    if sum(forms) != 1:
        raise ConfigError(f"{path}: give exactly one of {{g, h}}, {{theta, k}} or {{seller}}")
    try:
        if forms[0]:
            g = distortion_from_dict(spec["g"], f"{path}.g")
            h = distortion_from_dict(spec["h"], f"{path}.h") if "h" in spec else ZERO
            return canonical_decompose(g, h)
        if forms[1]:
            k = distortion_from_dict(spec["k"], f"{path}.k") if "k" in spec else ZERO
            return PremiumPrinciple(theta=float(spec["theta"]), k=k)
        return PremiumPrinciple.from_seller(distortion_from_dict(spec["seller"], f"{path}.seller"))
    except KeyError as e:
        raise ConfigError(f"{path}: missing field {e.args[0]!r}")
    except DomainError as e:
        raise ConfigError(f"{path}: {e}")
