import logging
import math
from dataclasses import dataclass

import numpy as np

from src.sheq.errors import DegeneratePathError, DomainError, GridMismatchError
from src.sheq.gaussian_sim import PathKind, PathSample, SeedSpec

logger = logging.getLogger(__name__)


def limit_value(theta: float) -> float:
    """L2 limit 6/(pi theta) of the quartic variation."""
    return 6.0 / (math.pi * theta)


def _values(path) -> np.ndarray:
    if isinstance(path, PathSample):
        return path.values
    values = np.asarray(path, dtype=np.float64)
    if values.ndim != 1:
        raise DomainError(f"expected a single path, got shape {values.shape}")
    return values


def quartic_variation(path) -> float:
    """Sum of fourth powers of the temporal increments."""
    values = _values(path)
    if len(values) < 2:
        raise DomainError("quartic variation needs at least two observations")
    sq = np.square(np.diff(values))
    return float(np.sum(sq * sq))


def quartic_variation_batch(paths: np.ndarray) -> np.ndarray:
    """Row-wise quartic variation of a (replicates, N+1) array."""
    paths = np.asarray(paths, dtype=np.float64)
    if paths.ndim != 2 or paths.shape[1] < 2:
        raise DomainError(f"expected (replicates, N+1) paths, got shape {paths.shape}")
    sq = np.square(np.diff(paths, axis=1))
    return np.sum(sq * sq, axis=1)


def standardize(V, N: int, theta: float):
    """U = sqrt(N) (V - 6/(pi theta))."""
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    return math.sqrt(N) * (V - limit_value(theta))


def theta_hat(V):
    """Viscosity estimator 6/(pi V); raises on a degenerate (constant) path."""
    V_arr = np.asarray(V, dtype=np.float64)
    if np.any(V_arr < 0):
        raise DomainError("quartic variation cannot be negative")
    if np.any(V_arr == 0):
        raise DegeneratePathError("quartic variation is zero: the observed path is constant")
    estimate = 6.0 / (math.pi * V_arr)
    return float(estimate) if estimate.ndim == 0 else estimate


def theta_bar(theta_hat_value, N: int, theta: float):
    """Renormalized estimator sqrt(N) (theta_hat - theta)."""
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    return math.sqrt(N) * (theta_hat_value - theta)


def remainder_terms(u0_path, X_path) -> float:
    """
    Cross terms P = sum_{k<4} C(4,k) sum_i (Delta_i u0)^k (Delta_i X)^(4-k).

    V(u0 + X) = V(u0) + P holds exactly.
    """
    u0 = _values(u0_path)
    X = _values(X_path)
    if u0.shape != X.shape:
        raise GridMismatchError(f"coupled paths differ in length: {u0.shape} vs {X.shape}")
    du = np.diff(u0)
    dx = np.diff(X)
    return float(
        np.sum(dx**4 + 4.0 * du * dx**3 + 6.0 * du**2 * dx**2 + 4.0 * du**3 * dx)
    )


def remainder_terms_batch(u0_paths: np.ndarray, X_paths: np.ndarray) -> np.ndarray:
    if u0_paths.shape != X_paths.shape:
        raise GridMismatchError(
            f"coupled batches differ in shape: {u0_paths.shape} vs {X_paths.shape}"
        )
    du = np.diff(u0_paths, axis=1)
    dx = np.diff(X_paths, axis=1)
    return np.sum(dx**4 + 4.0 * du * dx**3 + 6.0 * du**2 * dx**2 + 4.0 * du**3 * dx, axis=1)


@dataclass(frozen=True)
class EstimateRecord:
    N: int
    V: float
    U: float
    theta_hat: float
    theta_bar: float
    theta: float
    kind: PathKind = PathKind.LINEAR_EXACT
    seed: SeedSpec | None = None


def estimate_record(path: PathSample, theta: float) -> EstimateRecord:
    V = quartic_variation(path)
    estimate = theta_hat(V)
    return EstimateRecord(
        N=path.N,
        V=V,
        U=standardize(V, path.N, theta),
        theta_hat=estimate,
        theta_bar=theta_bar(estimate, path.N, theta),
        theta=theta,
        kind=path.kind,
        seed=path.seed,
    )


def estimator_cdf_shift_bound(t: float, N: int, theta: float) -> float:
    """
    Deterministic part of the Kolmogorov error of theta_bar at level t.

    Comes from rewriting {theta_bar <= t} as a level set of U; it is of order
    t^2 / sqrt(N) and is capped at 1.
    """
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    shifted = abs(t / math.sqrt(N) + theta)
    if shifted == 0.0:
        return 1.0
    bound = 6.0 * t * t / (math.sqrt(2.0 * math.pi * 384.0) * theta * shifted * math.sqrt(N))
    return min(1.0, bound)
