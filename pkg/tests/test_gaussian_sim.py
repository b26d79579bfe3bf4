import numpy as np
import pytest

from src.models.params import TimeGrid
from src.sheq.errors import DomainError, FactorizationError
from src.sheq.gaussian_sim import (
    PathSample,
    SeedSpec,
    build_temporal_covariance,
    cholesky_with_jitter,
    sample_increments_moments,
    sample_path,
    sample_paths,
    temporal_cov_matrix,
)
from src.sheq.kernel import cov_u0, increment_cov_matrix
from src.sheq.stats import ks_to_normal


def test_temporal_cov_matrix_matches_closed_form():
    N, theta = 12, 0.8
    t = np.arange(1, N + 1) / N
    expected = cov_u0(t[:, None], t[None, :], theta)
    np.testing.assert_allclose(temporal_cov_matrix(N, theta), expected, atol=1e-15)


def test_factor_reproduces_covariance_without_jitter():
    cov = build_temporal_covariance(256, 1.0)
    assert cov.jitter == 0.0
    np.testing.assert_allclose(cov.factor @ cov.factor.T, cov.matrix, atol=1e-12)
    assert np.allclose(np.triu(cov.factor, 1), 0.0)


def test_cached_covariance_is_read_only():
    cov = build_temporal_covariance(32, 1.0)
    assert build_temporal_covariance(32, 1.0) is cov
    with pytest.raises(ValueError):
        cov.factor[0, 0] = 1.0


def test_jitter_ladder_rescues_singular_matrix():
    factor, jitter = cholesky_with_jitter(np.ones((3, 3)))
    assert jitter > 0
    np.testing.assert_allclose(factor @ factor.T, np.ones((3, 3)), atol=1e-6)


def test_indefinite_matrix_raises_with_leading_minor():
    with pytest.raises(FactorizationError) as excinfo:
        cholesky_with_jitter(np.diag([1.0, -1.0]))
    assert excinfo.value.leading_minor == 2


def test_factorization_cap():
    with pytest.raises(DomainError, match="cap"):
        build_temporal_covariance(64, 1.0, max_n=32)


def test_sample_path_is_reproducible():
    cov = build_temporal_covariance(64, 1.0)
    a = sample_path(cov, SeedSpec(7, 3))
    b = sample_path(cov, SeedSpec(7, 3))
    c = sample_path(cov, SeedSpec(7, 4))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.values[0] == 0.0
    assert a.N == 64


def test_batch_rows_equal_single_paths():
    cov = build_temporal_covariance(32, 2.0)
    batch = sample_paths(cov, 99, 5, 9)
    for row, replicate in enumerate(range(5, 9)):
        np.testing.assert_array_equal(batch[row], sample_path(cov, SeedSpec(99, replicate)).values)


def test_seed_streams_are_independent_draws():
    a = SeedSpec(1, 0, stream=0).generator().standard_normal(4)
    b = SeedSpec(1, 0, stream=2).generator().standard_normal(4)
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("seed,replicate", [(-1, 0), (2**64, 0), (0, -1)])
def test_seed_spec_validation(seed, replicate):
    with pytest.raises(DomainError):
        SeedSpec(seed, replicate)


def test_path_sample_invariants():
    with pytest.raises(DomainError):
        PathSample(values=np.array([0.1, 0.2, 0.3]), grid=TimeGrid(2))
    with pytest.raises(DomainError):
        PathSample(values=np.zeros(4), grid=TimeGrid(2))


def test_empirical_covariance_matches_closed_form():
    N, M = 8, 20000
    cov = build_temporal_covariance(N, 1.0)
    paths = sample_paths(cov, 2024, 0, M)[:, 1:]
    np.testing.assert_allclose(np.cov(paths, rowvar=False), cov.matrix, atol=0.03)


def test_increment_moments_match_oracle():
    N = 32
    cov = build_temporal_covariance(N, 1.0)
    moments = sample_increments_moments(cov, 4000, 11, chunk_size=500)
    a = np.diag(increment_cov_matrix(N, 1.0))
    assert np.all(np.abs(moments.second - a) <= 5.0 * moments.second_se)
    assert np.all(np.abs(moments.fourth - 3.0 * a * a) <= 5.0 * moments.fourth_se)


def test_increment_moments_need_enough_replicates():
    with pytest.raises(DomainError):
        sample_increments_moments(build_temporal_covariance(8, 1.0), 50, 0)


def test_marginals_are_gaussian_with_the_closed_form_variance():
    N, M = 64, 10_000
    paths = sample_paths(build_temporal_covariance(N, 1.0), 77, 0, M)
    for q in (1, N // 2, N):
        z = paths[:, q] / np.sqrt(cov_u0(q / N, q / N, 1.0))
        assert ks_to_normal(z, 0.0, 1.0) <= 1.36 / np.sqrt(M) + 0.01


def test_bulk_fourth_moment_decays_like_one_over_N():
    Ns = [16, 64, 256]
    bulk = []
    for N in Ns:
        moments = sample_increments_moments(build_temporal_covariance(N, 1.0), 4000, 5)
        bulk.append(float(np.mean(moments.fourth[N // 2 :])))
        # E[Delta^4] = 3 (2 kappa)^2 = 6 / (pi theta N) away from t = 0
        assert bulk[-1] * N == pytest.approx(6.0 / np.pi, rel=0.06)
    slope, _ = np.polyfit(np.log(Ns), np.log(bulk), 1)
    assert -1.1 <= slope <= -0.9
