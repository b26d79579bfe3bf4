from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.sheq.errors import DomainError


class DriftKind(str, Enum):
    ZERO = "zero"
    LINEAR = "linear"
    COSINE = "cosine"
    BOUNDED_RATIONAL = "bounded_rational"


@dataclass(frozen=True)
class Drift:
    """Globally Lipschitz drift b with its recorded Lipschitz constant.

    Kept as plain data (kind + coefficient) so it pickles into worker processes.
    """

    kind: DriftKind = DriftKind.ZERO
    coefficient: float = 1.0

    @property
    def lipschitz(self) -> float:
        if self.kind is DriftKind.ZERO:
            return 0.0
        if self.kind is DriftKind.LINEAR:
            return abs(self.coefficient)
        # cos and x/(1+x^2) both have |b'| <= 1
        return 1.0

    @property
    def is_zero(self) -> bool:
        return self.kind is DriftKind.ZERO or (
            self.kind is DriftKind.LINEAR and self.coefficient == 0.0
        )

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind is DriftKind.ZERO:
            return np.zeros_like(u)
        if self.kind is DriftKind.LINEAR:
            return self.coefficient * u
        if self.kind is DriftKind.COSINE:
            return np.cos(u)
        return u / (1.0 + u * u)

    def label(self) -> str:
        if self.kind is DriftKind.LINEAR:
            return f"linear({self.coefficient:g})"
        return self.kind.value


def make_drift(name: str, coefficient: float = 1.0) -> Drift:
    """Look up a registered drift by name."""
    try:
        kind = DriftKind(name)
    except ValueError as e:
        registered = ", ".join(k.value for k in DriftKind)
        raise DomainError(f"unknown drift '{name}' (registered: {registered})") from e
    return Drift(kind=kind, coefficient=float(coefficient))


@dataclass(frozen=True)
class ModelParams:
    """Viscosity parameter and drift of du = (theta/2) u'' dt + b(u) dt + dW."""

    theta: float
    drift: Drift = field(default_factory=Drift)

    def __post_init__(self):
        if not np.isfinite(self.theta) or self.theta <= 0:
            raise DomainError(f"theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant observation grid t_i = i/N on [0, 1]."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be a positive integer, got {self.N}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1, dtype=np.float64) / self.N

    @property
    def spacing(self) -> float:
        return 1.0 / self.N

    def t(self, i: int) -> float:
        return i / self.N
