"""
Distribution distances and dependence measures shared by the experiments.

The Kolmogorov-type joint gaps and the Lipschitz-family gap are empirical
stand-ins for the independence distances between a joint law and the product
of its marginals; none of them is the supremum over all test functions.
"""

import logging
import math
from collections.abc import Callable
from functools import lru_cache

import dcor
import numpy as np
from scipy import integrate, special, stats

from src.sheq.errors import DomainError

logger = logging.getLogger(__name__)

# mean of the Kolmogorov distribution, sup |Brownian bridge|
KOLMOGOROV_MEAN = math.sqrt(math.pi / 2.0) * math.log(2.0)
MAX_JOINT_DIM = 3
MAX_GRID_CELLS = 2_000_000


def _finite_1d(samples, name: str = "samples", min_size: int = 2) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size < min_size:
        raise DomainError(f"{name} needs at least {min_size} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def _check_sigma(sigma: float):
    if not (sigma > 0 and math.isfinite(sigma)):
        raise DomainError(f"sigma must be positive, got {sigma}")


def std_normal_cdf(x):
    """Phi(x) via scipy's ndtr (Cephes erf/erfc, relative error near 1e-15)."""
    value = special.ndtr(np.asarray(x, dtype=np.float64))
    return float(value) if np.ndim(value) == 0 else value


def ks_to_normal(samples, mu: float, sigma: float) -> float:
    """One-sample Kolmogorov distance to N(mu, sigma^2), checking both sides of every step."""
    _check_sigma(sigma)
    xs = np.sort(_finite_1d(samples))
    M = xs.size
    cdf = special.ndtr((xs - mu) / sigma)
    ranks = np.arange(1, M + 1, dtype=np.float64)
    d_plus = np.max(ranks / M - cdf)
    d_minus = np.max(cdf - (ranks - 1.0) / M)
    return float(max(d_plus, d_minus))


def wasserstein1_to_normal(samples, mu: float, sigma: float, K: int = 1000) -> float:
    """
    W1 to N(mu, sigma^2) as the L1 distance between quantile functions,
    averaged over K midpoint levels (k - 1/2)/K.
    """
    _check_sigma(sigma)
    if K < 100:
        raise DomainError(f"quantile count K must be at least 100, got {K}")
    xs = _finite_1d(samples)
    levels = (np.arange(1, K + 1) - 0.5) / K
    empirical = np.quantile(xs, levels, method="inverted_cdf")
    target = mu + sigma * special.ndtri(levels)
    return float(np.mean(np.abs(empirical - target)))


def two_sample_ks(xs, ys) -> float:
    return float(stats.ks_2samp(_finite_1d(xs, "xs"), _finite_1d(ys, "ys")).statistic)


def distance_correlation(xs, ys, bias_corrected: bool = False) -> float:
    """
    Empirical distance correlation in [0, 1].

    With bias_corrected the U-centered estimator of dcor^2 is clipped at 0
    before taking the square root, which removes most of the small-sample
    upward bias under independence.
    """
    x = _finite_1d(xs, "xs", min_size=10)
    y = np.asarray(ys, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != x.size:
        raise DomainError(f"paired samples differ in length: {x.size} vs {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise DomainError("ys contains non-finite values")
    if np.ptp(x) == 0 or np.any(np.ptp(y, axis=0) == 0):
        raise DomainError("distance correlation is undefined for a constant coordinate")

    y_arg = y[:, 0] if y.shape[1] == 1 else y
    if bias_corrected:
        value = dcor.u_distance_correlation_sqr(x, y_arg)
        return float(math.sqrt(max(float(value), 0.0)))
    return float(min(max(float(dcor.distance_correlation(x, y_arg)), 0.0), 1.0))


def _rank_grid(values: np.ndarray, size: int) -> np.ndarray:
    """Sample points at evenly spaced ranks; equivariant under increasing maps."""
    ordered = np.sort(values)
    if size >= ordered.size:
        return np.unique(ordered)
    ranks = np.linspace(0, ordered.size - 1, size).round().astype(int)
    return np.unique(ordered[ranks])


def _joint_cdf_on_grid(columns: list[np.ndarray], grids: list[np.ndarray]) -> np.ndarray:
    """Empirical CDF P(col_0 <= g_0, ..., col_d <= g_d) on a product grid."""
    M = columns[0].size
    # bin b means value <= grid[b] and > grid[b-1]; the extra bin holds values above the grid
    bins = [np.searchsorted(g, col, side="left") for col, g in zip(columns, grids, strict=True)]
    shape = tuple(len(g) + 1 for g in grids)
    counts = np.zeros(shape, dtype=np.int64)
    np.add.at(counts, tuple(bins), 1)
    for axis in range(len(grids)):
        counts = np.cumsum(counts, axis=axis)
    return counts / M


def joint_kolmogorov_gap(
    xs,
    ys,
    marginal_cdf_x: Callable[[np.ndarray], np.ndarray],
    grid_size: int | None = None,
    x_levels=None,
) -> float:
    """
    max |F_joint(t, s) - Phi_x(t) F_Y(s)| over a grid of observed sample points.

    Args:
        xs: first coordinate (the statistic), shape (M,)
        ys: data coordinates, shape (M,) or (M, d) with d <= 3
        marginal_cdf_x: analytic CDF the statistic is compared to
        grid_size: points per axis; defaults to the largest size keeping the grid small
        x_levels: fixed levels for the statistic instead of its sample grid
    """
    x = _finite_1d(xs, "xs")
    y = np.asarray(ys, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != x.size:
        raise DomainError(f"paired samples differ in length: {x.size} vs {y.shape[0]}")
    d = y.shape[1]
    if d > MAX_JOINT_DIM:
        raise DomainError(f"joint gap supports at most {MAX_JOINT_DIM} data coordinates, got {d}")
    if not np.all(np.isfinite(y)):
        raise DomainError("ys contains non-finite values")

    if grid_size is None:
        grid_size = int(MAX_GRID_CELLS ** (1.0 / (d + 1)))
    grid_size = max(2, min(grid_size, x.size))

    x_grid = (
        np.sort(np.asarray(x_levels, dtype=np.float64).ravel())
        if x_levels is not None
        else _rank_grid(x, grid_size)
    )
    y_grids = [_rank_grid(y[:, k], grid_size) for k in range(d)]

    F = _joint_cdf_on_grid([x, *(y[:, k] for k in range(d))], [x_grid, *y_grids])
    # F[-1, ...] is the Y marginal (x unrestricted); drop the overflow bins of the y axes
    inner = (slice(None, -1),) + (slice(None, -1),) * d
    joint = F[inner]
    marginal_y = F[(-1,) + (slice(None, -1),) * d]
    phi = np.asarray(marginal_cdf_x(x_grid), dtype=np.float64)
    product = phi.reshape((-1,) + (1,) * d) * marginal_y[None, ...]
    return float(np.max(np.abs(joint - product)))


def pointwise_joint_gap(xs, ys, t: float, marginal_cdf_x: Callable, grid_size: int | None = None) -> float:
    """The joint gap at a single level t of the statistic."""
    return joint_kolmogorov_gap(xs, ys, marginal_cdf_x, grid_size=grid_size, x_levels=[t])


def lipschitz_family_gap(
    xs,
    ys,
    thresholds,
    marginal_cdf_x: Callable,
    n_functions: int = 64,
    seed: int = 0,
) -> float:
    """
    sup over t and a random family f(y) = clip(w . y_std - b, -1, 1), |w| = 1, of
    |E[1{x <= t} f(Y)] - Phi(t) E[f(Y)]|.

    Each f is bounded by 1 and 1-Lipschitz in standardized coordinates, so the
    value is a lower proxy for the bounded-Lipschitz joint distance.
    """
    x = _finite_1d(xs, "xs")
    y = np.asarray(ys, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != x.size:
        raise DomainError(f"paired samples differ in length: {x.size} vs {y.shape[0]}")
    scale = y.std(axis=0)
    if np.any(scale == 0):
        raise DomainError("a data coordinate is constant")
    y_std = (y - y.mean(axis=0)) / scale

    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_functions, y.shape[1]))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    b = rng.standard_normal(n_functions)
    f_values = np.clip(y_std @ w.T - b, -1.0, 1.0)  # (M, n_functions)

    t = np.asarray(thresholds, dtype=np.float64).ravel()
    indicator = (x[:, None] <= t[None, :]).astype(np.float64)  # (M, T)
    joint = indicator.T @ f_values / x.size  # (T, n_functions)
    product = np.asarray(marginal_cdf_x(t), dtype=np.float64)[:, None] * f_values.mean(axis=0)[None, :]
    return float(np.max(np.abs(joint - product)))


def dk1_bound(dw_joint: float, dw_marginal: float, density_bound: float) -> float:
    """
    Transfer of Wasserstein closeness to the bounded-Lipschitz Kolmogorov distance:
    6 sqrt(M) sqrt(dw_joint + 2 dw_marginal) + dw_joint, M bounding the limit density.
    """
    if dw_joint < 0 or dw_marginal < 0 or density_bound <= 0:
        raise DomainError("distances must be nonnegative and the density bound positive")
    return 6.0 * math.sqrt(density_bound) * math.sqrt(dw_joint + 2.0 * dw_marginal) + dw_joint


def ks_noise_floor(M: int) -> float:
    """Expected one-sample KS distance of M exact draws."""
    if M < 1:
        raise DomainError(f"M must be positive, got {M}")
    return KOLMOGOROV_MEAN / math.sqrt(M)


@lru_cache(maxsize=1)
def _wasserstein_floor_constant() -> float:
    # sqrt(M) E W1 -> E int |B(Phi(x))| dx = sqrt(2/pi) int sqrt(Phi (1 - Phi)) dx
    value, _ = integrate.quad(
        lambda x: math.sqrt(special.ndtr(x) * special.ndtr(-x)), -np.inf, np.inf
    )
    return math.sqrt(2.0 / math.pi) * value


def wasserstein_noise_floor(M: int, sigma: float = 1.0) -> float:
    """Asymptotic expected W1 between M exact normal draws and their law."""
    if M < 1:
        raise DomainError(f"M must be positive, got {M}")
    _check_sigma(sigma)
    return sigma * _wasserstein_floor_constant() / math.sqrt(M)
