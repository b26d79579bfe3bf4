import math

import numpy as np
import pytest

from src.experiments.runners import fit_loglog_slope
from src.sheq.errors import DomainError
from src.sheq.gaussian_sim import build_temporal_covariance, sample_paths
from src.sheq.kernel import increment_cov_matrix
from src.sheq.variation import quartic_variation_batch, standardize
from src.sheq.wick_oracle import (
    asymptotic_constants,
    bulk_expected_quartic_gap,
    dependence_bound,
    dependence_functional,
    dependence_functionals,
    expected_quartic,
    gauss_hermite_cov_quartic,
    isserlis_cov_quartic,
    limit_variance_series,
    statistic_square_correlation,
    statistic_square_covariance,
    variance_quartic,
)


def test_isserlis_matches_gauss_hermite(rng):
    for _ in range(100):
        a, b = rng.uniform(0.1, 2.0, size=2)
        c = rng.uniform(-1.0, 1.0) * math.sqrt(a * b)
        assert isserlis_cov_quartic(a, b, c) == pytest.approx(gauss_hermite_cov_quartic(a, b, c), abs=1e-8)


def test_isserlis_special_cases():
    assert isserlis_cov_quartic(1.0, 1.0, 0.0) == 0.0
    # Var(X^4) = 96 a^4
    assert isserlis_cov_quartic(2.0, 2.0, 2.0) == pytest.approx(96.0 * 16.0)
    np.testing.assert_allclose(isserlis_cov_quartic([1.0, 1.0], [1.0, 1.0], [0.5, 1.0]), [24.0 * 0.0625 + 18.0, 96.0])


def test_isserlis_rejects_inadmissible_covariance():
    with pytest.raises(DomainError):
        isserlis_cov_quartic(1.0, 1.0, 1.5)
    with pytest.raises(DomainError):
        isserlis_cov_quartic(-1.0, 1.0, 0.0)


def test_single_increment_moments():
    C = increment_cov_matrix(1, 1.0)
    assert expected_quartic(C) == pytest.approx(3.0 / math.pi, abs=1e-14)
    assert variance_quartic(C) == pytest.approx(96.0 / math.pi**2, abs=1e-13)


def test_variance_rejects_non_psd():
    with pytest.raises(DomainError):
        variance_quartic(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DomainError):
        expected_quartic(np.ones((2, 3)))


def test_monte_carlo_variance_matches_oracle():
    N, M = 16, 20000
    V = quartic_variation_batch(sample_paths(build_temporal_covariance(N, 1.0), 31, 0, M))
    s2 = np.var(V, ddof=1)
    se = math.sqrt((np.mean((V - V.mean()) ** 4) - s2 * s2) / M)
    assert abs(s2 - variance_quartic(increment_cov_matrix(N, 1.0))) <= 4.0 * se
    assert abs(V.mean() - expected_quartic(increment_cov_matrix(N, 1.0))) <= 4.0 * V.std(ddof=1) / math.sqrt(M)


@pytest.mark.slow
def test_monte_carlo_variance_matches_oracle_at_scale():
    N, M = 256, 200_000
    V = quartic_variation_batch(sample_paths(build_temporal_covariance(N, 1.0), 2718, 0, M))
    s2 = np.var(V, ddof=1)
    se = math.sqrt((np.mean((V - V.mean()) ** 4) - s2 * s2) / M)
    assert abs(s2 - variance_quartic(increment_cov_matrix(N, 1.0))) <= 3.0 * se


def test_asymptotic_constants_nominal_values():
    constants = asymptotic_constants(1.0)
    assert constants.limit == pytest.approx(1.909859, abs=1e-6)
    assert constants.sigma_theta_sq == pytest.approx(384.0 / math.pi**2)
    assert constants.sigma1_theta_sq == pytest.approx(32.0 / 3.0)
    assert asymptotic_constants(2.0).sigma1_theta_sq == pytest.approx(32.0 * 4.0 / 3.0)


def test_exact_limit_variance_includes_increment_correlations():
    value = limit_variance_series(1.0)
    assert value == pytest.approx(44.27, rel=2e-3)
    assert value > 384.0 / math.pi**2
    assert limit_variance_series(2.0) == pytest.approx(value / 4.0, rel=1e-14)
    # the analytic tail makes the result insensitive to truncation
    assert limit_variance_series(1.0, K=2000) == pytest.approx(value, rel=1e-9)

    constants = asymptotic_constants(2.0)
    assert constants.sigma1_theta_sq_exact == pytest.approx(math.pi**2 * 2.0**4 / 36.0 * constants.sigma_theta_sq_exact)


def test_n_variance_approaches_exact_limit():
    theta = 1.0
    target = limit_variance_series(theta)
    gaps = {}
    for N in (128, 256, 512, 1024):
        gaps[N] = abs(N * variance_quartic(increment_cov_matrix(N, theta)) - target)
    assert gaps[1024] / target < 0.03
    assert gaps[1024] < gaps[128]


def test_mean_gap_decays_like_inverse_n_and_bulk_faster():
    theta = 1.0
    limit = asymptotic_constants(theta).limit
    full, bulk = {}, {}
    for N in (64, 128, 256, 512, 1024):
        C = increment_cov_matrix(N, theta)
        full[N] = abs(expected_quartic(C) - limit)
        bulk[N] = bulk_expected_quartic_gap(C, theta)
    assert -1.1 <= fit_loglog_slope(full).slope <= -0.9
    assert -1.6 <= fit_loglog_slope(bulk).slope <= -1.4


@pytest.mark.slow
def test_exact_moment_asymptotics_to_4096():
    theta = 1.0
    constants = asymptotic_constants(theta)
    n_values = (64, 128, 256, 512, 1024, 2048, 4096)
    gaps, bulk = {}, {}
    for N in n_values:
        C = increment_cov_matrix(N, theta)
        gaps[N] = abs(N * variance_quartic(C) - constants.sigma_theta_sq_exact)
        bulk[N] = bulk_expected_quartic_gap(C, theta)
    assert gaps[4096] / constants.sigma_theta_sq_exact <= 0.01
    assert -1.3 <= fit_loglog_slope({N: gaps[N] for N in n_values if N >= 256}).slope <= -0.7
    assert -1.7 <= fit_loglog_slope(bulk).slope <= -1.3


def test_dependence_functionals_agree_and_are_nonnegative():
    N, theta = 64, 1.0
    values = dependence_functionals(N, [1, 17, 64], theta)
    assert np.all(values >= 0)
    for q, value in zip([1, 17, 64], values, strict=True):
        assert value == pytest.approx(dependence_functional(N, q, theta), rel=1e-12)
    assert dependence_bound(N, [1, 17, 64], theta) == pytest.approx(math.sqrt(values.sum()))


def test_dependence_bound_decays_in_n_and_grows_with_gamma():
    theta = 1.0
    bounds = []
    for N in (64, 256, 1024):
        m = int(math.floor(N**0.25 + 1e-9))
        bounds.append(dependence_bound(N, [math.ceil(k * N / m) for k in range(1, m + 1)], theta))
    assert bounds[0] > bounds[1] > bounds[2]

    N = 256
    assert dependence_bound(N, range(1, N + 1), theta) > dependence_bound(N, [64, 128, 192, 256], theta)


def test_statistic_square_covariance_matches_monte_carlo():
    N, q, theta, M = 32, 16, 1.0, 40000
    paths = sample_paths(build_temporal_covariance(N, theta), 404, 0, M)
    U = standardize(quartic_variation_batch(paths), N, theta)
    Y2 = paths[:, q] ** 2
    product = (U - U.mean()) * (Y2 - Y2.mean())
    exact = statistic_square_covariance(N, q, theta)
    assert exact > 0
    assert abs(product.mean() - exact) <= 5.0 * product.std() / math.sqrt(M)

    rho = statistic_square_correlation(N, q, theta)
    assert 0.0 < rho < 1.0
    assert rho == pytest.approx(np.corrcoef(U, Y2)[0, 1], abs=0.03)


def test_variance_of_independent_increments(rng):
    a = rng.uniform(0.1, 2.0, size=12)
    assert variance_quartic(np.diag(a)) == pytest.approx(96.0 * np.sum(a**4), rel=1e-12)
    assert expected_quartic(np.diag(a)) == pytest.approx(3.0 * np.sum(a**2), rel=1e-12)


@pytest.mark.parametrize("N", [16, 64])
def test_variance_dominates_the_diagonal_terms(N):
    C = increment_cov_matrix(N, 1.0)
    assert variance_quartic(C) >= 24.0 * np.sum(np.diag(C) ** 4)


def test_oracles_are_invariant_under_joint_permutation(rng):
    C = increment_cov_matrix(32, 0.7)
    perm = rng.permutation(32)
    shuffled = C[np.ix_(perm, perm)]
    assert expected_quartic(shuffled) == pytest.approx(expected_quartic(C), rel=1e-12)
    assert variance_quartic(shuffled) == pytest.approx(variance_quartic(C), rel=1e-12)


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
def test_oracles_scale_with_the_path(c):
    # scaling the path by c scales the covariance by c^2
    C = increment_cov_matrix(24, 1.0)
    assert expected_quartic(c * c * C) == pytest.approx(c**4 * expected_quartic(C), rel=1e-12)
    assert variance_quartic(c * c * C) == pytest.approx(c**8 * variance_quartic(C), rel=1e-12)
