import math

import numpy as np
import pytest
from scipy import special
from scipy import stats as sp_stats

from src.sheq import stats
from src.sheq.errors import DomainError


def _normal_midpoints(M: int) -> np.ndarray:
    return special.ndtri((np.arange(1, M + 1) - 0.5) / M)


def test_ks_of_exact_quantiles():
    M = 400
    assert stats.ks_to_normal(_normal_midpoints(M), 0.0, 1.0) == pytest.approx(0.5 / M, abs=1e-12)


def test_ks_agrees_with_scipy(rng):
    xs = rng.normal(0.2, 1.3, size=500)
    expected = sp_stats.kstest(xs, "norm", args=(0.0, 1.5)).statistic
    assert stats.ks_to_normal(xs, 0.0, 1.5) == pytest.approx(expected, abs=1e-12)


def test_ks_rejects_bad_input():
    with pytest.raises(DomainError):
        stats.ks_to_normal([1.0, np.nan, 2.0], 0.0, 1.0)
    with pytest.raises(DomainError):
        stats.ks_to_normal([1.0, 2.0], 0.0, 0.0)


def test_wasserstein_of_exact_quantiles_and_shift():
    M = 1000
    xs = _normal_midpoints(M)
    assert stats.wasserstein1_to_normal(xs, 0.0, 1.0, K=M) == pytest.approx(0.0, abs=1e-12)
    assert stats.wasserstein1_to_normal(xs + 0.3, 0.0, 1.0, K=M) == pytest.approx(0.3, abs=1e-12)
    assert stats.wasserstein1_to_normal(2.0 * xs, 0.0, 2.0, K=M) == pytest.approx(0.0, abs=1e-12)


def test_wasserstein_needs_enough_levels():
    with pytest.raises(DomainError):
        stats.wasserstein1_to_normal(np.zeros(10), 0.0, 1.0, K=50)


def test_noise_floors(rng):
    assert stats.ks_noise_floor(10000) == pytest.approx(math.sqrt(math.pi / 2) * math.log(2) / 100)
    assert stats.wasserstein_noise_floor(400) == pytest.approx(2.0 * stats.wasserstein_noise_floor(1600))
    assert stats.wasserstein_noise_floor(400, sigma=3.0) == pytest.approx(3.0 * stats.wasserstein_noise_floor(400))

    M = 2000
    w1 = [stats.wasserstein1_to_normal(rng.standard_normal(M), 0.0, 1.0, K=M) for _ in range(40)]
    ks = [stats.ks_to_normal(rng.standard_normal(M), 0.0, 1.0) for _ in range(40)]
    assert np.mean(w1) == pytest.approx(stats.wasserstein_noise_floor(M), rel=0.2)
    assert np.mean(ks) == pytest.approx(stats.ks_noise_floor(M), rel=0.2)


def test_two_sample_ks(rng):
    xs = rng.standard_normal(300)
    assert stats.two_sample_ks(xs, xs) == 0.0
    assert stats.two_sample_ks(xs, xs + 10.0) == 1.0


def test_distance_correlation(rng):
    x = rng.standard_normal(1000)
    independent = rng.standard_normal(1000)
    assert stats.distance_correlation(x, independent, bias_corrected=True) < 0.1
    assert stats.distance_correlation(x, x**2) > 0.3
    assert stats.distance_correlation(x, 2.0 * x + 1.0) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(DomainError):
        stats.distance_correlation(x, np.ones(1000))
    with pytest.raises(DomainError):
        stats.distance_correlation(x, x[:-1])


def test_joint_gap_separates_independent_and_dependent(rng):
    M = 5000
    x = rng.standard_normal(M)
    phi = stats.std_normal_cdf
    independent = stats.joint_kolmogorov_gap(x, rng.uniform(size=M), phi)
    dependent = stats.joint_kolmogorov_gap(x, x, phi)
    assert independent <= 0.04
    # P(X <= 0, X <= 0) - P(X <= 0)^2 = 1/4
    assert dependent == pytest.approx(0.25, abs=0.03)
    assert stats.pointwise_joint_gap(x, x, 0.0, phi) == pytest.approx(0.25, abs=0.03)


def test_joint_gap_in_three_data_dimensions(rng):
    M = 2000
    x = rng.standard_normal(M)
    ys = rng.standard_normal((M, 3))
    assert stats.joint_kolmogorov_gap(x, ys, stats.std_normal_cdf, grid_size=20) < 0.08
    with pytest.raises(DomainError):
        stats.joint_kolmogorov_gap(x, rng.standard_normal((M, 4)), stats.std_normal_cdf)


def test_lipschitz_family_gap(rng):
    M = 4000
    x = rng.standard_normal(M)
    thresholds = [-1.0, 0.0, 1.0]
    phi = stats.std_normal_cdf
    independent = stats.lipschitz_family_gap(x, rng.standard_normal((M, 5)), thresholds, phi, seed=3)
    dependent = stats.lipschitz_family_gap(x, np.column_stack([x, x]), thresholds, phi, seed=3)
    assert independent < 0.05
    assert dependent > 2.0 * independent
    again = stats.lipschitz_family_gap(x, np.column_stack([x, x]), thresholds, phi, seed=3)
    assert again == dependent


def test_dk1_bound():
    assert stats.dk1_bound(0.01, 0.0, 1.0) == pytest.approx(0.61)
    assert stats.dk1_bound(0.01, 0.02, 4.0) == pytest.approx(12.0 * math.sqrt(0.05) + 0.01)
    with pytest.raises(DomainError):
        stats.dk1_bound(-0.1, 0.0, 1.0)


def test_ks_of_a_point_mass_at_the_mean():
    assert stats.ks_to_normal(np.full(50, 1.5), 1.5, 2.0) == pytest.approx(0.5, abs=1e-15)


def test_distance_correlation_rejects_any_constant_column(rng):
    x = rng.standard_normal(200)
    ys = np.column_stack([rng.standard_normal(200), np.full(200, 3.0)])
    with pytest.raises(DomainError):
        stats.distance_correlation(x, ys)


@pytest.mark.parametrize("bias_corrected", [False, True])
def test_distance_correlation_is_affine_invariant(rng, bias_corrected):
    x = rng.standard_normal(400)
    y = x**2 + 0.5 * rng.standard_normal(400)
    base = stats.distance_correlation(x, y, bias_corrected=bias_corrected)
    moved = stats.distance_correlation(-3.0 * x + 7.0, 0.25 * y - 2.0, bias_corrected=bias_corrected)
    assert moved == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_joint_gap_is_invariant_under_increasing_maps_of_the_data(rng):
    M = 2000
    x = rng.standard_normal(M)
    ys = np.column_stack([x + rng.standard_normal(M), rng.standard_normal(M)])
    phi = stats.std_normal_cdf
    base = stats.joint_kolmogorov_gap(x, ys, phi)
    assert stats.joint_kolmogorov_gap(x, np.exp(ys), phi) == pytest.approx(base, abs=1e-12)
    assert stats.joint_kolmogorov_gap(x, 2.0 * ys + 1.0, phi) == pytest.approx(base, abs=1e-12)


def test_statistics_ignore_sample_order(rng):
    M = 1000
    x = rng.standard_normal(M)
    y = 0.5 * x + rng.standard_normal(M)
    perm = rng.permutation(M)
    phi = stats.std_normal_cdf
    assert stats.ks_to_normal(x[perm], 0.0, 1.0) == stats.ks_to_normal(x, 0.0, 1.0)
    assert stats.wasserstein1_to_normal(x[perm], 0.0, 1.0) == pytest.approx(
        stats.wasserstein1_to_normal(x, 0.0, 1.0), abs=1e-12
    )
    assert stats.two_sample_ks(x[perm], y) == stats.two_sample_ks(x, y)
    assert stats.distance_correlation(x[perm], y[perm]) == pytest.approx(stats.distance_correlation(x, y), rel=1e-10)
    assert stats.joint_kolmogorov_gap(x[perm], y[perm], phi) == pytest.approx(
        stats.joint_kolmogorov_gap(x, y, phi), abs=1e-12
    )
