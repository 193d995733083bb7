"""
Distributions of the non-negative loss X.

Every model exposes survival S(x) = P(X > x), the infimum-convention
quantile S^{-1}(p) = inf{t >= 0 : S(t) <= p}, the density of its
continuous part and its atoms.
"""

import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _out(arr: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(arr) if np.ndim(like) == 0 else arr


def _check_probability(p: ArrayLike) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise DomainError(f"probability outside [0, 1]: {p!r}")
    return arr


class LossModel:
    """Base class for loss distributions."""

    kind = "abstract"

    def survival(self, x: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def cdf(self, x: ArrayLike) -> ArrayLike:
        return _out(1.0 - np.asarray(self.survival(x), dtype=float), x)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def density(self, x: ArrayLike) -> ArrayLike:
        """Density of the continuous part (zero for purely discrete models)."""
        return _out(np.zeros_like(np.asarray(x, dtype=float)), x)

    def atoms(self) -> list[tuple[float, float]]:
        """Point masses as (location, probability) pairs."""
        return []

    def breakpoints(self) -> tuple:
        """Positive points where S or the density is not smooth."""
        return tuple(x for x, _ in self.atoms() if x > 0)

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def ess_inf(self) -> float:
        raise NotImplementedError

    @property
    def support_bound(self) -> float:
        raise NotImplementedError

    @property
    def has_density(self) -> bool:
        return False

    def upper_limit(self, tail_mass: float) -> float:
        """Finite split point for quadrature: M, or quantile(tail_mass)."""
        if math.isfinite(self.support_bound):
            return self.support_bound
        return float(self.quantile(tail_mass))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self.quantile(rng.random(n)), dtype=float)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroInflatedExponential(LossModel):
    """Point mass 1-q at 0 and density q*lam*exp(-lam*x) on x > 0."""
    q: float = 1.0
    lam: float = 1.0
    kind = "zero_inflated_exponential"

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise DomainError(f"q must lie in (0, 1], got {self.q}")
        if self.lam <= 0:
            raise DomainError(f"lambda must be positive, got {self.lam}")

    def survival(self, x):
        arr = np.asarray(x, dtype=float)
        s = np.where(arr < 0, 1.0, self.q * np.exp(-self.lam * np.maximum(arr, 0.0)))
        return _out(s, x)

    def quantile(self, p):
        arr = _check_probability(p)
        with np.errstate(divide="ignore"):
            t = np.where(arr >= self.q, 0.0, np.log(self.q / arr) / self.lam)
        return _out(t, p)

    def density(self, x):
        arr = np.asarray(x, dtype=float)
        f = np.where(arr > 0, self.q * self.lam * np.exp(-self.lam * np.maximum(arr, 0.0)), 0.0)
        return _out(f, x)

    def atoms(self):
        return [(0.0, 1.0 - self.q)] if self.q < 1 else []

    @property
    def mean(self):
        return self.q / self.lam

    @property
    def ess_inf(self):
        return 0.0

    @property
    def support_bound(self):
        return math.inf

    @property
    def has_density(self):
        return True

    def sample(self, rng, n):
        hit = rng.random(n) < self.q
        return np.where(hit, rng.exponential(1.0 / self.lam, size=n), 0.0)

    def to_dict(self):
        return {"kind": self.kind, "q": self.q, "lambda": self.lam}


@dataclass(frozen=True)
class DiscreteLoss(LossModel):
    """Finitely many atoms with probabilities summing to one."""
    values: tuple = (0.0,)
    probs: tuple = (1.0,)
    kind = "discrete"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or len(values) == 0:
            raise DomainError("discrete loss needs matching, non-empty atom and probability lists")
        if np.any(values < 0) or np.any(np.diff(values) <= 0):
            raise DomainError("atoms must be non-negative and strictly increasing")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError(f"probabilities must be positive and sum to 1, got sum {probs.sum()!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in values))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))

    @property
    def _tail(self) -> np.ndarray:
        # _tail[i] = P(X >= values[i]), with a trailing 0
        return np.append(np.cumsum(np.asarray(self.probs)[::-1])[::-1], 0.0)

    def survival(self, x):
        arr = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.values, arr, side="right")
        s = np.where(arr < 0, 1.0, self._tail[idx])
        return _out(s, x)

    def quantile(self, p):
        arr = _check_probability(p)
        # S just after each atom; quantile is the first atom where it drops to <= p
        after = self._tail[1:]
        idx = np.searchsorted(-after, -arr, side="left")
        idx = np.clip(idx, 0, len(self.values) - 1)
        t = np.where(arr >= 1.0, 0.0, np.asarray(self.values)[idx])
        return _out(t, p)

    def atoms(self):
        return list(zip(self.values, self.probs))

    @property
    def mean(self):
        return float(np.dot(self.values, self.probs))

    @property
    def ess_inf(self):
        return self.values[0]

    @property
    def support_bound(self):
        return self.values[-1]

    def sample(self, rng, n):
        return rng.choice(np.asarray(self.values), size=n, p=np.asarray(self.probs))

    def to_dict(self):
        return {"kind": self.kind, "atoms": list(self.values), "probs": list(self.probs)}


@dataclass(frozen=True)
class TruncatedDensity(LossModel):
    """Point mass 1-q at 0 plus a piecewise-linear density on (0, M], scaled to mass q."""
    q: float = 1.0
    xs: tuple = (0.0, 1.0)
    fs: tuple = (1.0, 1.0)
    kind = "truncated_density"

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        fs = np.asarray(self.fs, dtype=float)
        if not 0 < self.q <= 1:
            raise DomainError(f"q must lie in (0, 1], got {self.q}")
        if xs.ndim != 1 or xs.shape != fs.shape or len(xs) < 2:
            raise DomainError("density table needs matching x/f arrays of length >= 2")
        if xs[0] != 0.0 or np.any(np.diff(xs) <= 0) or not np.isfinite(xs[-1]):
            raise DomainError("density table x-values must increase strictly from 0 to a finite M")
        if np.any(fs < 0):
            raise DomainError("density values must be non-negative")
        total = float(np.sum(0.5 * (fs[1:] + fs[:-1]) * np.diff(xs)))
        if total <= 0:
            raise DomainError("density table integrates to zero")
        object.__setattr__(self, "xs", tuple(float(v) for v in xs))
        object.__setattr__(self, "fs", tuple(float(v) * self.q / total for v in fs))

    def _table(self):
        xs = np.asarray(self.xs)
        fs = np.asarray(self.fs)
        h = np.diff(xs)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (fs[1:] + fs[:-1]) * h)])
        return xs, fs, h, cum

    def _continuous_cdf(self, x: np.ndarray) -> np.ndarray:
        xs, fs, h, cum = self._table()
        xc = np.clip(x, 0.0, xs[-1])
        i = np.clip(np.searchsorted(xs, xc, side="right") - 1, 0, len(h) - 1)
        s = xc - xs[i]
        g = (fs[i + 1] - fs[i]) / h[i]
        return cum[i] + fs[i] * s + 0.5 * g * s * s

    def survival(self, x):
        arr = np.asarray(x, dtype=float)
        s = np.where(arr < 0, 1.0, np.maximum(self.q - self._continuous_cdf(arr), 0.0))
        return _out(s, x)

    def quantile(self, p):
        arr = _check_probability(p)
        xs, fs, h, cum = self._table()
        target = np.clip(self.q - arr, 0.0, cum[-1])
        i = np.clip(np.searchsorted(cum, target, side="left") - 1, 0, len(h) - 1)
        delta = target - cum[i]
        g = (fs[i + 1] - fs[i]) / h[i]
        root = np.sqrt(np.maximum(fs[i] ** 2 + 2 * g * delta, 0.0))
        denom = fs[i] + root
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(denom > 0, 2 * delta / denom, 0.0)
        t = np.where(arr >= self.q, 0.0, xs[i] + np.minimum(s, h[i]))
        return _out(t, p)

    def density(self, x):
        arr = np.asarray(x, dtype=float)
        f = np.where((arr > 0) & (arr <= self.xs[-1]), np.interp(arr, self.xs, self.fs), 0.0)
        return _out(f, x)

    def atoms(self):
        return [(0.0, 1.0 - self.q)] if self.q < 1 else []

    def breakpoints(self):
        return tuple(self.xs[1:])

    @property
    def mean(self):
        xs, fs, h, _ = self._table()
        return float(np.sum(h / 6 * (xs[:-1] * (2 * fs[:-1] + fs[1:]) + xs[1:] * (fs[:-1] + 2 * fs[1:]))))

    @property
    def ess_inf(self):
        if self.q < 1:
            return 0.0
        xs, fs, _, _ = self._table()
        positive = (fs[:-1] > 0) | (fs[1:] > 0)
        return float(xs[np.argmax(positive)])

    @property
    def support_bound(self):
        return self.xs[-1]

    @property
    def has_density(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "q": self.q, "xs": list(self.xs), "density": list(self.fs)}


def loss_model_from_dict(spec: dict, path: str = "loss") -> LossModel:
    """Build a loss model from its JSON description."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{path}: expected an object with a 'kind' field")
    kind = spec["kind"]
    try:
        if kind == "zero_inflated_exponential":
            return ZeroInflatedExponential(q=float(spec.get("q", 1.0)), lam=float(spec["lambda"]))
        if kind == "exponential":
            return ZeroInflatedExponential(q=1.0, lam=float(spec["lambda"]))
        if kind == "discrete":
            atoms = spec["atoms"]
            if isinstance(atoms, dict):
                pairs = sorted((float(x), float(p)) for x, p in atoms.items())
                return DiscreteLoss(tuple(x for x, _ in pairs), tuple(p for _, p in pairs))
            return DiscreteLoss(tuple(atoms), tuple(spec["probs"]))
        if kind == "truncated_density":
            return TruncatedDensity(float(spec.get("q", 1.0)), tuple(spec["xs"]), tuple(spec["density"]))
    except KeyError as e:
        raise ConfigError(f"{path}: missing field {e.args[0]!r} for kind {kind!r}")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}")
    raise ConfigError(f"{path}: unknown loss model kind {kind!r}")
