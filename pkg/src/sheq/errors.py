"""Typed failures raised by the numerical core."""


class SheqError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(SheqError, ValueError):
    """An argument lies outside the domain of the formula."""


class IndexRangeError(DomainError, IndexError):
    """An increment or observation index is out of range."""


class DegeneratePathError(SheqError):
    """The observed path has zero quartic variation (constant path)."""


class FactorizationError(SheqError):
    """Cholesky factorization failed even after the jitter ladder."""

    def __init__(self, message: str, leading_minor: int, jitter: float):
        super().__init__(message)
        self.leading_minor = leading_minor
        self.jitter = jitter


class QuadratureError(SheqError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved_tolerance: float):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class GridMismatchError(SheqError):
    """Two paths that must share a grid (or noise) do not."""


class SchemeError(SheqError):
    """The finite-difference solver produced an unusable state."""


class ConfigError(SheqError, ValueError):
    """An experiment configuration is invalid."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
