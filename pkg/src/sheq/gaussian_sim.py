"""
Exact simulation of (u0(t_i, x))_{i=0..N} by factoring the closed-form covariance.

Seeding contract: replicate r of master seed s always draws from
SeedSequence(s, spawn_key=(r, stream)), so a batch is the same no matter how
replicates are split across workers.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack

from src.core.config import Config
from src.models.params import TimeGrid
from src.sheq.errors import DomainError, FactorizationError

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-14, 1e-12, 1e-10)

# stream ids keep independent uses of one replicate apart
STREAM_PATH = 0
STREAM_FIELD = 1
STREAM_AUX = 2


class PathKind(str, Enum):
    LINEAR_EXACT = "linear-exact"
    SEMILINEAR_SCHEME = "semilinear-scheme"


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    replicate: int = 0
    stream: int = STREAM_PATH

    def __post_init__(self):
        if self.master_seed < 0 or self.master_seed >= 2**64:
            raise DomainError(f"master seed must fit in 64 unsigned bits, got {self.master_seed}")
        if self.replicate < 0:
            raise DomainError(f"replicate index must be nonnegative, got {self.replicate}")

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.master_seed, spawn_key=(self.replicate, self.stream))
        )


@dataclass(frozen=True)
class PathSample:
    """Observed values v[0..N] at a fixed x; v[0] = 0."""

    values: np.ndarray
    grid: TimeGrid
    kind: PathKind = PathKind.LINEAR_EXACT
    seed: SeedSpec | None = None

    def __post_init__(self):
        if self.values.ndim != 1 or len(self.values) != self.grid.N + 1:
            raise DomainError(
                f"path needs {self.grid.N + 1} values, got shape {self.values.shape}"
            )
        if self.values[0] != 0.0:
            raise DomainError("path must start from the vanishing initial condition")

    @property
    def N(self) -> int:
        return self.grid.N

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


@dataclass(frozen=True)
class TemporalCovariance:
    """C[i][j] = cov_u0(t_i, t_j) for i, j = 1..N with its lower Cholesky factor."""

    N: int
    theta: float
    matrix: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    jitter: float = 0.0


def temporal_cov_matrix(N: int, theta: float) -> np.ndarray:
    idx = np.arange(1, N + 1, dtype=np.float64)
    kappa = 1.0 / math.sqrt(2.0 * math.pi * theta * N)
    return kappa * (
        np.sqrt(idx[:, None] + idx[None, :]) - np.sqrt(np.abs(idx[:, None] - idx[None, :]))
    )


def cholesky_with_jitter(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, walking the jitter ladder on failure."""
    leading_minor = 0
    for jitter in JITTER_LADDER:
        trial = matrix + jitter * np.eye(matrix.shape[0]) if jitter else matrix
        factor, info = lapack.dpotrf(trial, lower=1, clean=1)
        if info == 0:
            return factor, jitter
        if info < 0:
            raise DomainError(f"dpotrf rejected argument {-info}")
        leading_minor = info
        logger.debug(
            "Cholesky failed", extra={"leading_minor": info, "jitter": jitter}
        )
    raise FactorizationError(
        f"covariance is not positive definite at leading minor {leading_minor} "
        f"even with jitter {JITTER_LADDER[-1]:g}",
        leading_minor=leading_minor,
        jitter=JITTER_LADDER[-1],
    )


@lru_cache(maxsize=16)
def _cached_covariance(N: int, theta: float) -> TemporalCovariance:
    matrix = temporal_cov_matrix(N, theta)
    factor, jitter = cholesky_with_jitter(matrix)
    if jitter > 0:
        logger.warning(
            "Jitter applied to temporal covariance",
            extra={"N": N, "theta": theta, "jitter": jitter},
        )
    matrix.flags.writeable = False
    factor.flags.writeable = False
    return TemporalCovariance(N=N, theta=theta, matrix=matrix, factor=factor, jitter=jitter)


def build_temporal_covariance(N: int, theta: float, max_n: int | None = None) -> TemporalCovariance:
    """
    Build (or fetch from cache) the factored temporal covariance.

    Args:
        N: number of increments on the unit interval
        theta: viscosity
        max_n: override for Config.MAX_N; the O(N^3) factorization is refused above it

    Raises:
        DomainError: N < 1, theta <= 0 or N above the cap
        FactorizationError: the jitter ladder is exhausted
    """
    TimeGrid(N)
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    cap = Config.MAX_N if max_n is None else max_n
    if N > cap:
        raise DomainError(f"N={N} exceeds the factorization cap {cap} (set SHEQ_MAX_N to raise it)")
    return _cached_covariance(int(N), float(theta))


def sample_path(cov: TemporalCovariance, seed: SeedSpec) -> PathSample:
    z = seed.generator().standard_normal(cov.N)
    values = np.empty(cov.N + 1)
    values[0] = 0.0
    values[1:] = cov.factor @ z
    return PathSample(values=values, grid=TimeGrid(cov.N), kind=PathKind.LINEAR_EXACT, seed=seed)


def sample_paths(cov: TemporalCovariance, master_seed: int, start: int, stop: int) -> np.ndarray:
    """Rows are replicates start..stop-1, each identical to sample_path for that replicate."""
    paths = np.zeros((stop - start, cov.N + 1))
    for row, replicate in enumerate(range(start, stop)):
        z = SeedSpec(master_seed, replicate).generator().standard_normal(cov.N)
        # one matvec per row keeps every row bit-identical to sample_path
        paths[row, 1:] = cov.factor @ z
    return paths


@dataclass
class IncrementMoments:
    second: np.ndarray
    second_se: np.ndarray
    fourth: np.ndarray
    fourth_se: np.ndarray
    M: int


def sample_increments_moments(
    cov: TemporalCovariance, M: int, master_seed: int, chunk_size: int | None = None
) -> IncrementMoments:
    """Monte Carlo E[Delta_i^2] and E[Delta_i^4] per increment with standard errors."""
    if M < 100:
        raise DomainError(f"need at least 100 replicates, got {M}")
    chunk = chunk_size or Config.CHUNK_SIZE

    sums = np.zeros((4, cov.N))  # powers 2, 4, 6, 8
    for start in range(0, M, chunk):
        incs = np.diff(sample_paths(cov, master_seed, start, min(start + chunk, M)), axis=1)
        sq = incs * incs
        sums[0] += sq.sum(axis=0)
        sums[1] += (sq * sq).sum(axis=0)
        sums[2] += (sq * sq * sq).sum(axis=0)
        sums[3] += (sq * sq * sq * sq).sum(axis=0)
    m2, m4, _, m8 = sums / M

    var2 = np.maximum(m4 - m2 * m2, 0.0) * M / (M - 1)
    var4 = np.maximum(m8 - m4 * m4, 0.0) * M / (M - 1)
    return IncrementMoments(
        second=m2,
        second_se=np.sqrt(var2 / M),
        fourth=m4,
        fourth_se=np.sqrt(var4 / M),
        M=M,
    )
