"""
Closed-form heat-kernel quantities for the linear solution u0 at a fixed point x.

Everything here is written in the post-integration closed forms, so the Green
kernel is never evaluated at t -> 0.
"""

import logging
import math

import numpy as np
from scipy import integrate

from src.models.params import TimeGrid
from src.sheq.errors import DomainError, IndexRangeError, QuadratureError

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-10


def _check_theta(theta: float):
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")


def _scalar_or_array(value: np.ndarray):
    return float(value) if np.ndim(value) == 0 else value


def heat_kernel(t, x, theta: float):
    """Green kernel G(theta*t, x) = (2 pi theta t)^(-1/2) exp(-x^2 / (2 theta t))."""
    _check_theta(theta)
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if np.any(t <= 0):
        raise DomainError("heat kernel needs t > 0")
    value = np.exp(-(x * x) / (2.0 * theta * t)) / np.sqrt(2.0 * math.pi * theta * t)
    return _scalar_or_array(value)


def cov_u0(s, t, theta: float):
    """Temporal covariance E[u0(s,x) u0(t,x)] = (2 pi theta)^(-1/2) (sqrt(t+s) - sqrt|t-s|)."""
    _check_theta(theta)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("covariance is defined for nonnegative times only")
    value = (np.sqrt(t + s) - np.sqrt(np.abs(t - s))) / math.sqrt(2.0 * math.pi * theta)
    return _scalar_or_array(value)


def _check_increment_index(i: int, N: int, name: str = "i"):
    if not 0 <= i <= N - 1:
        raise IndexRangeError(f"increment index {name}={i} outside 0..{N - 1}")


def increment_cov(i: int, j: int, grid: TimeGrid, theta: float) -> float:
    """E[Delta_i u0 Delta_j u0] as the second difference of cov_u0 on the grid."""
    _check_increment_index(i, grid.N, "i")
    _check_increment_index(j, grid.N, "j")
    ti, ti1 = grid.t(i), grid.t(i + 1)
    tj, tj1 = grid.t(j), grid.t(j + 1)
    return float(
        cov_u0(ti1, tj1, theta)
        - cov_u0(ti, tj1, theta)
        - cov_u0(ti1, tj, theta)
        + cov_u0(ti, tj, theta)
    )


def _second_difference(x: np.ndarray) -> np.ndarray:
    """sqrt(x+1) - 2 sqrt(x) + sqrt(x-1) for x >= 1, written without cancellation."""
    r_minus = np.sqrt(x - 1.0)
    r_mid = np.sqrt(x)
    r_plus = np.sqrt(x + 1.0)
    return -2.0 / ((r_minus + r_plus) * (r_plus + r_mid) * (r_mid + r_minus))


def increment_cov_matrix(N: int, theta: float) -> np.ndarray:
    """
    Full N x N matrix of increment covariances.

    With s = i + j and k = |i - j| the entry is
    kappa * (h(s + 1) + h(k)) off the diagonal and kappa * (2 + h(s + 1)) on it,
    where kappa = (2 pi theta N)^(-1/2) and h is the second difference of sqrt.
    """
    _check_theta(theta)
    TimeGrid(N)
    kappa = 1.0 / math.sqrt(2.0 * math.pi * theta * N)
    idx = np.arange(N, dtype=np.float64)
    s = idx[:, None] + idx[None, :]
    k = np.abs(idx[:, None] - idx[None, :])

    lag = np.full_like(k, 2.0)
    off = k > 0
    lag[off] = _second_difference(k[off])
    return kappa * (_second_difference(s + 1.0) + lag)


def _check_pniq_indices(N: int, i, q):
    TimeGrid(N)
    i_arr = np.asarray(i)
    if np.any(i_arr < 0) or np.any(i_arr > N - 1):
        raise IndexRangeError(f"increment index i={i} outside 0..{N - 1}")
    if not 1 <= q <= N:
        raise IndexRangeError(f"observation index q={q} outside 1..{N}")


def pniq(N: int, i: int, q: int, theta: float) -> float:
    """Cov(Delta_i u0, u0(t_q)) in closed form."""
    _check_theta(theta)
    _check_pniq_indices(N, i, q)
    kappa = 1.0 / math.sqrt(2.0 * math.pi * theta * N)
    return kappa * (
        math.sqrt(i + 1 + q)
        - math.sqrt(i + q)
        - math.sqrt(abs(i + 1 - q))
        + math.sqrt(abs(i - q))
    )


def pniq_vector(N: int, q: int, theta: float) -> np.ndarray:
    """pniq for every increment i = 0..N-1 at a fixed observation q."""
    _check_theta(theta)
    _check_pniq_indices(N, 0, q)
    kappa = 1.0 / math.sqrt(2.0 * math.pi * theta * N)
    i = np.arange(N, dtype=np.float64)
    return kappa * (
        np.sqrt(i + 1 + q) - np.sqrt(i + q) - np.sqrt(np.abs(i + 1 - q)) + np.sqrt(np.abs(i - q))
    )


def _time_integral(upper_index: int, q: int, N: int, theta: float) -> float:
    """
    int_0^T (2 pi theta (t_a + t_q - 2a))^(-1/2) da with T = min(t_a, t_q).

    Substituting a = T (1 - s^2) removes the endpoint singularity when t_a = t_q.
    """
    T = min(upper_index, q) / N
    if T == 0.0:
        return 0.0
    gap = abs(upper_index - q) / N

    def integrand(s: float) -> float:
        return 2.0 * T * s / math.sqrt(2.0 * math.pi * theta * (gap + 2.0 * T * s * s))

    value, abserr = integrate.quad(integrand, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=0.0, limit=200)
    if abserr > QUAD_TOL:
        raise QuadratureError(
            f"quadrature for P(N={N}, q={q}) stopped at error {abserr:.3e}",
            achieved_tolerance=abserr,
        )
    return value


def pniq_quadrature(N: int, i: int, q: int, theta: float) -> float:
    """Independent oracle for pniq via adaptive Gauss-Kronrod quadrature."""
    _check_theta(theta)
    _check_pniq_indices(N, i, q)
    return _time_integral(i + 1, q, N, theta) - _time_integral(i, q, N, theta)


def increment_correlation_series(K: int) -> np.ndarray:
    """Limiting correlations rho(k), k = 0..K, of bulk increments (fBm with H = 1/4)."""
    if K < 0:
        raise DomainError(f"K must be nonnegative, got {K}")
    k = np.arange(K + 1, dtype=np.float64)
    rho = np.ones(K + 1)
    rho[1:] = 0.5 * _second_difference(k[1:])
    return rho
