"""
Indemnity functions in I_c: I(0) = 0, non-decreasing and 1-Lipschitz.

Symbolic families (deductible, max-limit, coinsurance, DIML) sit next to
grid-based piecewise-linear contracts produced by the numeric solvers.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from distortions import Distortion, distortion_from_dict
from errors import ConfigError, DomainError
from loss_models import LossModel, loss_model_from_dict
from utilities import Utility, utility_from_dict

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

SLOPE_SLACK = 1e-12
CLASSIFY_TOL = 1e-3
GRID_SEGMENTS = 400
GRID_TAIL_MASS = 1e-6
# beyond this survival level a DIML interior continues with its last slope
INTERIOR_TAIL_MASS = 1e-12


class Regime(str, Enum):
    ZERO = "zero"
    FULL = "full"
    DEDUCTIBLE = "deductible"
    MAX_LIMIT = "max_limit"
    DEDUCTIBLE_COINSURANCE = "deductible_coinsurance"
    DIML = "diml"
    GENERAL = "general"


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else np.asarray(arr)


def _finite_or_none(x: float) -> Optional[float]:
    return None if math.isinf(x) else float(x)


def _none_to_inf(x) -> float:
    return math.inf if x is None else float(x)


class Indemnity:
    kind = "abstract"

    def __call__(self, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def slope(self, t: ArrayLike) -> ArrayLike:
        """Right derivative I'(t)."""
        raise NotImplementedError

    def retention(self, x: ArrayLike) -> ArrayLike:
        return _out(np.asarray(x, dtype=float) - np.asarray(self(x), dtype=float), x)

    def breakpoints(self) -> tuple:
        """Finite positive points where the slope may jump."""
        return ()

    def classify(self, tol: float = CLASSIFY_TOL) -> Regime:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(Indemnity):
    kind = "zero"

    def __call__(self, x):
        return _out(np.zeros_like(np.asarray(x, dtype=float)), x)

    def slope(self, t):
        return _out(np.zeros_like(np.asarray(t, dtype=float)), t)

    def classify(self, tol=CLASSIFY_TOL):
        return Regime.ZERO

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Full(Indemnity):
    kind = "full"

    def __call__(self, x):
        return _out(np.maximum(np.asarray(x, dtype=float), 0.0), x)

    def slope(self, t):
        return _out(np.ones_like(np.asarray(t, dtype=float)), t)

    def classify(self, tol=CLASSIFY_TOL):
        return Regime.FULL

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Deductible(Indemnity):
    """(x - d)+."""
    d: float = 0.0
    kind = "deductible"

    def __post_init__(self):
        if not self.d >= 0:
            raise DomainError(f"deductible must be >= 0, got {self.d}")

    def __call__(self, x):
        return _out(np.maximum(np.asarray(x, dtype=float) - self.d, 0.0), x)

    def slope(self, t):
        return _out(np.where(np.asarray(t, dtype=float) >= self.d, 1.0, 0.0), t)

    def breakpoints(self):
        return (self.d,) if 0 < self.d < math.inf else ()

    def classify(self, tol=CLASSIFY_TOL):
        if self.d == 0:
            return Regime.FULL
        if math.isinf(self.d):
            return Regime.ZERO
        return Regime.DEDUCTIBLE

    def to_dict(self):
        return {"kind": self.kind, "d": _finite_or_none(self.d)}


@dataclass(frozen=True)
class MaxLimit(Indemnity):
    """min(x, m)."""
    m: float = math.inf
    kind = "max_limit"

    def __post_init__(self):
        if not self.m >= 0:
            raise DomainError(f"limit must be >= 0, got {self.m}")

    def __call__(self, x):
        return _out(np.clip(np.asarray(x, dtype=float), 0.0, self.m), x)

    def slope(self, t):
        return _out(np.where(np.asarray(t, dtype=float) < self.m, 1.0, 0.0), t)

    def breakpoints(self):
        return (self.m,) if 0 < self.m < math.inf else ()

    def classify(self, tol=CLASSIFY_TOL):
        if self.m == 0:
            return Regime.ZERO
        if math.isinf(self.m):
            return Regime.FULL
        return Regime.MAX_LIMIT

    def to_dict(self):
        return {"kind": self.kind, "m": _finite_or_none(self.m)}


@dataclass(frozen=True)
class DeductibleCoinsurance(Indemnity):
    """alpha * (x - d)+."""
    d: float = 0.0
    alpha: float = 1.0
    kind = "deductible_coinsurance"

    def __post_init__(self):
        if not self.d >= 0:
            raise DomainError(f"deductible must be >= 0, got {self.d}")
        if not -SLOPE_SLACK <= self.alpha <= 1 + SLOPE_SLACK:
            raise DomainError(f"coinsurance slope must lie in [0, 1], got {self.alpha}")

    def __call__(self, x):
        return _out(self.alpha * np.maximum(np.asarray(x, dtype=float) - self.d, 0.0), x)

    def slope(self, t):
        return _out(np.where(np.asarray(t, dtype=float) >= self.d, self.alpha, 0.0), t)

    def breakpoints(self):
        return (self.d,) if 0 < self.d < math.inf else ()

    def classify(self, tol=CLASSIFY_TOL):
        if self.alpha < tol or math.isinf(self.d):
            return Regime.ZERO
        if self.alpha > 1 - tol:
            return Regime.FULL if self.d == 0 else Regime.DEDUCTIBLE
        return Regime.DEDUCTIBLE_COINSURANCE

    def to_dict(self):
        return {"kind": self.kind, "d": _finite_or_none(self.d), "alpha": self.alpha}


@dataclass(frozen=True)
class LikelihoodRatio:
    """l(x) = tk'(S(x)) / tb'(S(x)), the distorted likelihood-ratio analog."""
    tk: Distortion
    tb: Distortion
    model: LossModel

    def __call__(self, x):
        s = self.model.survival(x)
        return _out(np.asarray(self.tk.derivative(s)) / np.asarray(self.tb.derivative(s)), x)

    def derivative(self, x):
        s = np.asarray(self.model.survival(x), dtype=float)
        f = np.asarray(self.model.density(x), dtype=float)
        k1, k2 = np.asarray(self.tk.derivative(s)), np.asarray(self.tk.second_derivative(s))
        b1, b2 = np.asarray(self.tb.derivative(s)), np.asarray(self.tb.second_derivative(s))
        with np.errstate(invalid="ignore", over="ignore"):
            value = -f * (k2 * b1 - k1 * b2) / b1 ** 2
        # no density, no change in l
        return _out(np.where(f > 0, value, 0.0), x)

    def to_dict(self):
        return {"seller": self.tk.to_dict(), "buyer_dual": self.tb.to_dict(), "loss": self.model.to_dict()}


@dataclass(frozen=True)
class DIML(Indemnity):
    """
    Deductible insurance with a maximum limit and a marginal-utility interior.

    On (d, m] the contract follows I(x) = (x - d) + phi(x) - phi(d) with
    phi(x) = (u')^{-1}(l(x) * upsilon); it is 0 below d and flat above m.
    """
    d: float
    m: float
    utility: Utility
    ell: LikelihoodRatio
    upsilon: float
    kind = "diml"

    def __post_init__(self):
        if not 0 <= self.d <= self.m:
            raise DomainError(f"DIML needs 0 <= d <= m, got d={self.d}, m={self.m}")
        if self.upsilon <= 0:
            raise DomainError("DIML normalizer upsilon must be positive")

    def _phi(self, x):
        return self.utility.marginal_inverse(np.asarray(self.ell(x)) * self.upsilon)

    @property
    def _top(self) -> float:
        return min(self.m, self.ell.model.support_bound)

    @property
    def _reach(self) -> float:
        """End of the interior formula; past it the contract keeps its slope up to the limit."""
        return max(self.d, min(self._top, self.ell.model.upper_limit(INTERIOR_TAIL_MASS)))

    def _interior_slope(self, t):
        phi = np.asarray(self._phi(t))
        raw = 1.0 + np.asarray(self.ell.derivative(t)) * self.upsilon / np.asarray(self.utility.second(phi))
        return np.clip(raw, 0.0, 1.0)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if math.isinf(self.d):
            return _out(np.zeros_like(arr), x)
        top, reach = self._top, self._reach
        xc = np.clip(arr, self.d, reach)
        value = (xc - self.d) + np.asarray(self._phi(xc)) - float(self._phi(self.d))
        if reach < top:
            value = value + float(self._interior_slope(reach)) * (np.clip(arr, reach, top) - reach)
        return _out(np.where(arr <= self.d, 0.0, value), x)

    def slope(self, t):
        arr = np.asarray(t, dtype=float)
        if math.isinf(self.d):
            return _out(np.zeros_like(arr), t)
        inside = (arr >= self.d) & (arr < self._top)
        raw = self._interior_slope(np.clip(arr, self.d, self._reach))
        return _out(np.where(inside, raw, 0.0), t)

    def breakpoints(self):
        return tuple(x for x in (self.d, self.m) if 0 < x < math.inf)

    def classify(self, tol=CLASSIFY_TOL):
        if math.isinf(self.d) or self.d == self.m:
            return Regime.ZERO
        knots = default_grid(self.ell.model, 200, extra=self.breakpoints())
        slopes = np.asarray(self.slope(0.5 * (knots[:-1] + knots[1:])), dtype=float)
        profile = PiecewiseLinear(tuple(knots), tuple(slopes), float(self.slope(knots[-1])))
        return classify(profile, tol)

    def to_dict(self):
        return {
            "kind": self.kind,
            "d": _finite_or_none(self.d),
            "m": _finite_or_none(self.m),
            "upsilon": self.upsilon,
            "utility": self.utility.to_dict(),
            **self.ell.to_dict(),
        }


@dataclass(frozen=True)
class PiecewiseLinear(Indemnity):
    """Slopes per segment of knots 0 = x_0 < ... < x_n and a constant extension slope."""
    knots: tuple
    slopes: tuple
    ext_slope: float = 0.0
    kind = "piecewise_linear"
    _values: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        slopes = np.asarray(self.slopes, dtype=float)
        if knots.ndim != 1 or len(knots) < 2 or knots[0] != 0.0 or np.any(np.diff(knots) <= 0):
            raise DomainError("knots must increase strictly from 0")
        if slopes.shape != (len(knots) - 1,):
            raise DomainError(f"expected {len(knots) - 1} slopes, got {slopes.shape}")
        every = np.append(slopes, self.ext_slope)
        if np.any(every < -SLOPE_SLACK) or np.any(every > 1 + SLOPE_SLACK) or np.any(np.isnan(every)):
            raise DomainError("contract slopes must lie in [0, 1]")
        slopes = np.clip(slopes, 0.0, 1.0)
        values = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
        object.__setattr__(self, "knots", tuple(float(k) for k in knots))
        object.__setattr__(self, "slopes", tuple(float(s) for s in slopes))
        object.__setattr__(self, "ext_slope", float(min(max(self.ext_slope, 0.0), 1.0)))
        object.__setattr__(self, "_values", tuple(values))

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        knots = np.asarray(self.knots)
        slopes = np.append(self.slopes, self.ext_slope)
        idx = np.clip(np.searchsorted(knots, arr, side="right") - 1, 0, len(knots) - 1)
        value = np.asarray(self._values)[idx] + slopes[idx] * (arr - knots[idx])
        return _out(np.where(arr <= 0, 0.0, value), x)

    def slope(self, t):
        arr = np.asarray(t, dtype=float)
        slopes = np.append(self.slopes, self.ext_slope)
        idx = np.clip(np.searchsorted(self.knots, arr, side="right") - 1, 0, len(self.knots) - 1)
        return _out(slopes[idx], t)

    def breakpoints(self):
        return tuple(self.knots[1:])

    def classify(self, tol=CLASSIFY_TOL):
        return classify(self, tol)

    def to_dict(self):
        return {
            "kind": self.kind,
            "knots": list(self.knots),
            "slopes": list(self.slopes),
            "ext_slope": self.ext_slope,
        }


def project_to_Ic(raw_slopes, knots, ext_slope: Optional[float] = None) -> PiecewiseLinear:
    """Clip per-segment slopes to [0, 1]; the extension defaults to the last slope."""
    clipped = np.clip(np.asarray(raw_slopes, dtype=float), 0.0, 1.0)
    ext = clipped[-1] if ext_slope is None else min(max(float(ext_slope), 0.0), 1.0)
    return PiecewiseLinear(tuple(knots), tuple(clipped), ext)


def _runs(values: np.ndarray, tol: float) -> list[list]:
    runs: list[list] = []
    for v in values:
        if runs and abs(runs[-1][0] - v) <= tol:
            runs[-1][1] += 1
        else:
            runs.append([float(v), 1])
    return runs


def _drop_transitions(runs: list[list], tol: float) -> list[list]:
    # a lone segment between two longer runs is where a kink falls inside a cell
    kept: list[list] = []
    for i, (value, count) in enumerate(runs):
        if count == 1 and 0 < i < len(runs) - 1 and runs[i - 1][1] > 1 and runs[i + 1][1] > 1:
            lo, hi = sorted((runs[i - 1][0], runs[i + 1][0]))
            if lo - tol <= value <= hi + tol:
                continue
        if kept and abs(kept[-1][0] - value) <= tol:
            kept[-1][1] += count
        else:
            kept.append([value, count])
    return kept


def classify(I: PiecewiseLinear, tol: float = CLASSIFY_TOL) -> Regime:
    """Map a numeric slope profile onto the named contract families."""
    if tol <= 0:
        raise DomainError("classification tolerance must be positive")
    v = np.append(np.asarray(I.slopes), I.ext_slope)
    snapped = np.where(v < tol, 0.0, np.where(v > 1 - tol, 1.0, v))
    vals = [value for value, _ in _drop_transitions(_runs(snapped, tol), tol)]

    if vals == [0.0]:
        return Regime.ZERO
    if vals == [1.0]:
        return Regime.FULL
    if vals == [0.0, 1.0]:
        return Regime.DEDUCTIBLE
    if vals == [1.0, 0.0]:
        return Regime.MAX_LIMIT
    if len(vals) <= 2 and vals[-1] not in (0.0, 1.0) and (len(vals) == 1 or vals[0] == 0.0):
        return Regime.DEDUCTIBLE_COINSURANCE

    start = 1 if vals[0] == 0.0 else 0
    stop = len(vals) - 1 if vals[-1] == 0.0 else len(vals)
    middle = vals[start:stop]
    if middle and all(x > 0 for x in middle):
        return Regime.DIML
    return Regime.GENERAL


def default_grid(model: LossModel, n: int = GRID_SEGMENTS, tail_mass: float = GRID_TAIL_MASS,
                 extra: tuple = ()) -> np.ndarray:
    """
    Knots on [0, quantile(tail_mass)] (or [0, M]) with geometric refinement
    near 0; model breakpoints and the given extra points are merged in.
    """
    if n < 2:
        raise DomainError("grid needs at least 2 segments")
    upper = model.upper_limit(tail_mass)
    if not upper > 0:
        upper = max(model.mean, 1.0)
    # geometric spacing with growth factor e^(2/n): the first cell is about 3x finer than uniform
    base = upper * np.expm1(np.arange(n + 1) * (2.0 / n)) / math.expm1(2.0)
    points = [p for p in tuple(model.breakpoints()) + tuple(extra) if 0 < p < upper]
    knots = np.unique(np.concatenate([base, points]))
    # merge knots closer than a relative 1e-9 so no segment is degenerate
    keep = np.concatenate([[True], np.diff(knots) > 1e-9 * upper])
    knots = knots[keep]
    knots[0] = 0.0
    return knots


def contract_distance(a: Indemnity, b: Indemnity, xs: ArrayLike) -> float:
    """L-infinity distance on a point set."""
    xs = np.asarray(xs, dtype=float)
    return float(np.max(np.abs(np.asarray(a(xs)) - np.asarray(b(xs))))) if xs.size else 0.0


def curve_rows(I: Indemnity, xs: ArrayLike) -> list[dict]:
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(I(xs))
    return [{"x": float(x), "I": float(v), "R": float(x - v)} for x, v in zip(xs, values)]


def indemnity_from_dict(spec: dict, path: str = "contract") -> Indemnity:
    """Rebuild a contract from its JSON description (None stands for infinity)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{path}: expected an object with a 'kind' field")
    kind = spec["kind"]
    try:
        if kind == "zero":
            return Zero()
        if kind == "full":
            return Full()
        if kind == "deductible":
            return Deductible(_none_to_inf(spec["d"]))
        if kind == "max_limit":
            return MaxLimit(_none_to_inf(spec["m"]))
        if kind == "deductible_coinsurance":
            return DeductibleCoinsurance(_none_to_inf(spec["d"]), float(spec["alpha"]))
        if kind == "piecewise_linear":
            return PiecewiseLinear(tuple(spec["knots"]), tuple(spec["slopes"]), float(spec.get("ext_slope", 0.0)))
        if kind == "diml":
            ell = LikelihoodRatio(
                tk=distortion_from_dict(spec["seller"], f"{path}.seller"),
                tb=distortion_from_dict(spec["buyer_dual"], f"{path}.buyer_dual"),
                model=loss_model_from_dict(spec["loss"], f"{path}.loss"),
            )
            return DIML(
                d=_none_to_inf(spec["d"]),
                m=_none_to_inf(spec["m"]),
                utility=utility_from_dict(spec["utility"], f"{path}.utility"),
                ell=ell,
                upsilon=float(spec["upsilon"]),
            )
    except KeyError as e:
        raise ConfigError(f"{path}: missing field {e.args[0]!r} for kind {kind!r}")
    except DomainError as e:
        raise ConfigError(f"{path}: {e}")
    raise ConfigError(f"{path}: unknown contract kind {kind!r}")
