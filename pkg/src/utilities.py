"""Utility functions of the insurance buyer."""

from dataclasses import dataclass
from typing import Union

import numpy as np

from errors import ConfigError, DomainError

ArrayLike = Union[float, np.ndarray]


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else np.asarray(arr)


class Utility:
    """u with its first three derivatives and the inverses the solvers need."""

    kind = "abstract"
    strictly_concave = True

    def check_domain(self, x: ArrayLike) -> None:
        return None

    def u(self, x):
        raise NotImplementedError

    def marginal(self, x):
        """u'(x)."""
        raise NotImplementedError

    def second(self, x):
        raise NotImplementedError

    def third(self, x):
        raise NotImplementedError

    def marginal_inverse(self, z):
        """(u')^{-1}(z) for z > 0."""
        raise NotImplementedError

    def inverse(self, v):
        """u^{-1}(v), the certainty-equivalent map."""
        raise NotImplementedError

    @property
    def is_prudent(self) -> bool:
        """True when u''' >= 0 everywhere on the domain."""
        return True

    @property
    def is_hara(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearUtility(Utility):
    kind = "linear"
    strictly_concave = False

    def u(self, x):
        return _out(np.asarray(x, dtype=float), x)

    def marginal(self, x):
        return _out(np.ones_like(np.asarray(x, dtype=float)), x)

    def second(self, x):
        return _out(np.zeros_like(np.asarray(x, dtype=float)), x)

    def third(self, x):
        return self.second(x)

    def marginal_inverse(self, z):
        raise DomainError("linear utility has constant marginal utility; (u')^{-1} is undefined")

    def inverse(self, v):
        return _out(np.asarray(v, dtype=float), v)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class CARA(Utility):
    """u(x) = (1 - exp(-gamma x)) / gamma, normalized so u(0) = 0."""
    gamma: float = 1.0
    kind = "cara"

    def __post_init__(self):
        if self.gamma <= 0:
            raise DomainError(f"CARA coefficient gamma must be positive, got {self.gamma}")

    def u(self, x):
        x = np.asarray(x, dtype=float)
        return _out(-np.expm1(-self.gamma * x) / self.gamma, x)

    def marginal(self, x):
        return _out(np.exp(-self.gamma * np.asarray(x, dtype=float)), x)

    def second(self, x):
        return _out(-self.gamma * np.exp(-self.gamma * np.asarray(x, dtype=float)), x)

    def third(self, x):
        return _out(self.gamma ** 2 * np.exp(-self.gamma * np.asarray(x, dtype=float)), x)

    def marginal_inverse(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("marginal utility level must be positive")
        return _out(-np.log(z) / self.gamma, z)

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if np.any(self.gamma * v >= 1):
            raise DomainError(f"CARA utility is bounded by 1/gamma; cannot invert {v!r}")
        return _out(-np.log1p(-self.gamma * v) / self.gamma, v)

    @property
    def is_hara(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma}


@dataclass(frozen=True)
class HARA(Utility):
    """Absolute risk aversion 1/(a x + m); a = 0 is CARA with gamma = 1/m."""
    a: float = 1.0
    m: float = 1.0
    kind = "hara"

    def __post_init__(self):
        if self.a < 0:
            raise DomainError(f"HARA slope a must be >= 0, got {self.a}")
        if self.a == 0 and self.m <= 0:
            raise DomainError("HARA with a = 0 needs m > 0")

    def check_domain(self, x):
        t = self.a * np.asarray(x, dtype=float) + self.m
        if np.any(t <= 0):
            bad = np.asarray(x, dtype=float)[t <= 0].ravel()[0] if np.ndim(x) else float(x)
            raise DomainError(f"wealth level {bad:.6g} outside the HARA domain a*x + m > 0")

    def _base(self, x):
        self.check_domain(x)
        return self.a * np.asarray(x, dtype=float) + self.m

    def u(self, x):
        if self.a == 0:
            return _out(self.m * -np.expm1(-np.asarray(x, dtype=float) / self.m), x)
        t = self._base(x)
        if self.a == 1:
            return _out(np.log(t), x)
        return _out(t ** (1 - 1 / self.a) / (self.a - 1), x)

    def marginal(self, x):
        if self.a == 0:
            return _out(np.exp(-np.asarray(x, dtype=float) / self.m), x)
        return _out(self._base(x) ** (-1 / self.a), x)

    def second(self, x):
        if self.a == 0:
            return _out(-np.exp(-np.asarray(x, dtype=float) / self.m) / self.m, x)
        return _out(-self._base(x) ** (-1 / self.a - 1), x)

    def third(self, x):
        if self.a == 0:
            return _out(np.exp(-np.asarray(x, dtype=float) / self.m) / self.m ** 2, x)
        return _out((1 + self.a) * self._base(x) ** (-1 / self.a - 2), x)

    def marginal_inverse(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("marginal utility level must be positive")
        if self.a == 0:
            return _out(-self.m * np.log(z), z)
        return _out((z ** (-self.a) - self.m) / self.a, z)

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if self.a == 0:
            return _out(-self.m * np.log1p(-v / self.m), v)
        if self.a == 1:
            return _out((np.exp(v) - self.m) / self.a, v)
        base = (self.a - 1) * v
        if np.any(base <= 0):
            raise DomainError(f"utility level {v!r} outside the range of this HARA utility")
        return _out((base ** (self.a / (self.a - 1)) - self.m) / self.a, v)

    @property
    def is_hara(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "m": self.m}


@dataclass(frozen=True)
class CRRA(Utility):
    """Power utility x^(1-rho)/(1-rho) (log for rho = 1) on x > 0."""
    rho: float = 2.0
    kind = "crra"

    def __post_init__(self):
        if self.rho <= 0:
            raise DomainError(f"relative risk aversion must be positive, got {self.rho}")

    def check_domain(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr <= 0):
            raise DomainError(f"wealth level {float(arr.min()):.6g} outside the CRRA domain x > 0")

    def u(self, x):
        self.check_domain(x)
        x_ = np.asarray(x, dtype=float)
        if self.rho == 1:
            return _out(np.log(x_), x)
        return _out(x_ ** (1 - self.rho) / (1 - self.rho), x)

    def marginal(self, x):
        self.check_domain(x)
        return _out(np.asarray(x, dtype=float) ** -self.rho, x)

    def second(self, x):
        self.check_domain(x)
        return _out(-self.rho * np.asarray(x, dtype=float) ** (-self.rho - 1), x)

    def third(self, x):
        self.check_domain(x)
        return _out(self.rho * (self.rho + 1) * np.asarray(x, dtype=float) ** (-self.rho - 2), x)

    def marginal_inverse(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("marginal utility level must be positive")
        return _out(z ** (-1 / self.rho), z)

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if self.rho == 1:
            return _out(np.exp(v), v)
        base = (1 - self.rho) * v
        if np.any(base <= 0):
            raise DomainError(f"utility level {v!r} outside the range of this CRRA utility")
        return _out(base ** (1 / (1 - self.rho)), v)

    @property
    def is_hara(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "rho": self.rho}


def utility_from_dict(spec: dict, path: str = "utility") -> Utility:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{path}: expected an object with a 'kind' field")
    kind = spec["kind"]
    try:
        if kind == "linear":
            return LinearUtility()
        if kind == "cara":
            return CARA(gamma=float(spec["gamma"]))
        if kind == "hara":
            return HARA(a=float(spec["a"]), m=float(spec["m"]))
        if kind == "crra":
            return CRRA(rho=float(spec["rho"]))
    except KeyError as e:
        raise ConfigError(f"{path}: missing field {e.args[0]!r} for kind {kind!r}")
    except DomainError as e:
        raise ConfigError(f"{path}: {e}")
    raise ConfigError(f"{path}: unknown utility kind {kind!r}")
