"""Semantic exception hierarchy shared by all modules."""


class AnisoSymmError(Exception):
    """Base class for all package-specific failures."""


class DomainTooSmall(AnisoSymmError):
    """A discrete Legendre supremum was attained at the last knot.

    The conjugate value there is a lower bound only; enlarge the primal
    sampling range and retry.
    """


class BoxTooSmall(AnisoSymmError):
    """A queried sublevel set touches the sampling box boundary."""


class NonIntegrableAtZero(AnisoSymmError):
    """The slope ratio phi(s)/s does not vanish as s -> 0+."""


class DivergentAtZero(AnisoSymmError):
    """The dimensional-conjugate integrand is not integrable near 0."""


class OutOfRange(AnisoSymmError):
    """An inverse was requested outside the invertible range."""


class RangeMismatch(AnisoSymmError):
    """Two tabulated functions have no usable common range."""


class NoConvergence(AnisoSymmError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class HypothesisViolation(AnisoSymmError):
    """A solvability hypothesis failed (or its margin was exhausted mid-solve)."""


class ConfigError(AnisoSymmError):
    """A run configuration failed schema validation."""
