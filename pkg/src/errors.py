from typing import Optional


class RiskmetricError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(RiskmetricError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class IndeterminateOrderError(DomainError):
    """Ratio order undefined because the denominator vanishes on the whole interior."""


class PreconditionError(RiskmetricError):
    """A solver's structural preconditions do not hold for this problem."""


class QuadratureError(RiskmetricError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, error_bound: float):
        super().__init__(f"{message} (estimate={estimate:.6g}, error bound={error_bound:.3g})")
        self.estimate = estimate
        self.error_bound = error_bound


class ConfigError(RiskmetricError, ValueError):
    """Malformed run configuration or environment setting."""

    def __init__(self, message: str, line: Optional[int] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class SizeError(RiskmetricError):
    """Instance too large for an exhaustive or batch operation."""
