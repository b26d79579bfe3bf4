"""
Exact finite-N moments of the quartic variation of the linear solution, from
the Isserlis theorem, and the asymptotic constants they converge to.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.linalg import lapack

from src.sheq.errors import DomainError
from src.sheq.kernel import (
    cov_u0,
    increment_correlation_series,
    increment_cov_matrix,
    pniq_vector,
)

logger = logging.getLogger(__name__)

SERIES_TERMS = 20000
GAUSS_HERMITE_ORDER = 40


def _check_theta(theta: float):
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")


def isserlis_cov_quartic(a, b, c):
    """Cov(X^4, Y^4) = 72 a b c^2 + 24 c^4 for centered Gaussians with Var a, b and Cov c."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("variances must be nonnegative")
    if np.any(c * c > a * b * (1.0 + 1e-12)):
        raise DomainError("covariance violates Cauchy-Schwarz: c^2 > a b")
    c2 = c * c
    value = 72.0 * a * b * c2 + 24.0 * c2 * c2
    return float(value) if value.ndim == 0 else value


def gauss_hermite_cov_quartic(a: float, b: float, c: float, order: int = GAUSS_HERMITE_ORDER) -> float:
    """Quadrature oracle for isserlis_cov_quartic: E[X^4 Y^4] - 9 a^2 b^2 on a tensor grid."""
    if a == 0.0:
        return 0.0
    nodes, weights = special.roots_hermite(order)
    z = math.sqrt(2.0) * nodes
    w = weights / math.sqrt(math.pi)

    z1, z2 = np.meshgrid(z, z, indexing="ij")
    w2 = np.outer(w, w)
    x = math.sqrt(a) * z1
    y = (c / math.sqrt(a)) * z1 + math.sqrt(max(b - c * c / a, 0.0)) * z2
    return float(np.sum(w2 * x**4 * y**4) - 9.0 * a * a * b * b)


def _check_square(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DomainError(f"increment covariance must be square, got shape {cov.shape}")
    return cov


def expected_quartic(cov: np.ndarray) -> float:
    """E V = 3 sum_i C_ii^2."""
    diag = np.diag(_check_square(cov))
    return float(3.0 * np.sum(diag * diag))


def _check_psd(cov: np.ndarray):
    scale = float(np.max(np.abs(np.diag(cov)))) if cov.size else 0.0
    trial = cov + (1e-12 * scale) * np.eye(cov.shape[0])
    _, info = lapack.dpotrf(trial, lower=1)
    if info != 0:
        raise DomainError(f"increment covariance is not positive semidefinite (leading minor {info})")


def variance_quartic(cov: np.ndarray) -> float:
    """Var V as the double sum of Isserlis covariances over all increment pairs."""
    cov = _check_square(cov)
    _check_psd(cov)
    diag = np.diag(cov)
    c2 = cov * cov
    terms = 72.0 * np.outer(diag, diag) * c2 + 24.0 * c2 * c2
    return float(np.sum(terms))


@lru_cache(maxsize=4)
def _correlation_series_sum(K: int) -> tuple[float, float]:
    """(sum over Z of rho^2, sum over Z of rho^4) with an analytic tail beyond K."""
    rho = increment_correlation_series(K)
    r2 = rho * rho
    sum2 = 1.0 + 2.0 * float(np.sum(r2[1:]))
    sum4 = 1.0 + 2.0 * float(np.sum(r2[1:] * r2[1:]))
    # rho(k) ~ -k^(-3/2) / 8 for large k
    sum2 += 2.0 * float(special.zeta(3.0, K + 1)) / 64.0
    sum4 += 2.0 * float(special.zeta(6.0, K + 1)) / 4096.0
    return sum2, sum4


def limit_variance_series(theta: float, K: int = SERIES_TERMS) -> float:
    """Exact limit of N Var V_N, accounting for the correlation of neighbouring increments."""
    _check_theta(theta)
    sum2, sum4 = _correlation_series_sum(K)
    return 4.0 / (math.pi**2 * theta**2) * (72.0 * sum2 + 24.0 * sum4)


@dataclass(frozen=True)
class AsymptoticConstants:
    theta: float
    limit: float
    sigma_theta_sq: float
    sigma1_theta_sq: float
    sigma_theta_sq_exact: float
    sigma1_theta_sq_exact: float


def asymptotic_constants(theta: float) -> AsymptoticConstants:
    """
    Limit 6/(pi theta), sigma_theta^2 = 384/(pi^2 theta^2) and the estimator
    variance pi^2 theta^4 / 36 * sigma_theta^2.

    The *_exact fields carry the variance including increment correlations,
    which is what N Var V_N actually converges to.
    """
    _check_theta(theta)
    sigma_sq = 384.0 / (math.pi**2 * theta**2)
    sigma_sq_exact = limit_variance_series(theta)
    factor = math.pi**2 * theta**4 / 36.0
    return AsymptoticConstants(
        theta=theta,
        limit=6.0 / (math.pi * theta),
        sigma_theta_sq=sigma_sq,
        sigma1_theta_sq=factor * sigma_sq,
        sigma_theta_sq_exact=sigma_sq_exact,
        sigma1_theta_sq_exact=factor * sigma_sq_exact,
    )


def bulk_expected_quartic_gap(cov: np.ndarray, theta: float) -> float:
    """|sum_{i >= N/2} (3 C_ii^2 - 6/(pi theta N))|; the boundary layer near t = 0 is excluded."""
    _check_theta(theta)
    diag = np.diag(_check_square(cov))
    N = len(diag)
    bulk = diag[N // 2 :]
    return float(abs(np.sum(3.0 * bulk * bulk - 6.0 / (math.pi * theta * N))))


def dependence_functional(N: int, q: int, theta: float, cov: np.ndarray | None = None) -> float:
    """
    E[<D(-L)^{-1} U_N, D u0(t_q)>^2] = N sum_{i,j} P_i P_j (6 c_ij^3 + 36 a_i a_j c_ij).

    The data-dependence term in the Stein bound for the pair (U_N, u0(t_q)).
    """
    _check_theta(theta)
    C = increment_cov_matrix(N, theta) if cov is None else _check_square(cov)
    P = pniq_vector(N, q, theta)
    a = np.diag(C)
    kernel = 6.0 * C**3 + 36.0 * np.outer(a, a) * C
    return float(N * (P @ (kernel @ P)))


def dependence_functionals(N: int, indices, theta: float) -> np.ndarray:
    """dependence_functional for several observations at once."""
    _check_theta(theta)
    C = increment_cov_matrix(N, theta)
    a = np.diag(C)
    kernel = 6.0 * C**3 + 36.0 * np.outer(a, a) * C
    indices = [int(q) for q in indices]
    values = np.empty(len(indices))
    for lo in range(0, len(indices), 256):
        block = indices[lo : lo + 256]
        P = np.column_stack([pniq_vector(N, q, theta) for q in block])
        values[lo : lo + len(block)] = N * np.sum(P * (kernel @ P), axis=0)
    return values


def dependence_bound(N: int, indices, theta: float) -> float:
    """sqrt of the dependence functional summed over the selected observations."""
    total = float(np.sum(dependence_functionals(N, indices, theta)))
    return math.sqrt(max(total, 0.0))


def statistic_square_covariance(N: int, q: int, theta: float) -> float:
    """Cov(U_N, u0(t_q)^2) = 12 sqrt(N) sum_i a_i P_i^2."""
    _check_theta(theta)
    C = increment_cov_matrix(N, theta)
    P = pniq_vector(N, q, theta)
    return float(12.0 * math.sqrt(N) * np.sum(np.diag(C) * P * P))


def statistic_square_correlation(N: int, q: int, theta: float, var_U: float | None = None) -> float:
    """Correlation of U_N with u0(t_q)^2; var_U defaults to the exact N Var V_N."""
    if var_U is None:
        var_U = N * variance_quartic(increment_cov_matrix(N, theta))
    b = cov_u0(q / N, q / N, theta)
    return statistic_square_covariance(N, q, theta) / math.sqrt(var_U * 2.0 * b * b)
