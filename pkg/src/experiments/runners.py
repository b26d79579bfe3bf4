"""
Monte Carlo experiments. Each run_* takes a validated ExperimentConfig and
returns an ExperimentReport; run_experiment dispatches on config.kind and
writes the CSV/JSON pair when an output path is configured.

Variance targets use the exact limit constants (sigma_theta_sq_exact,
sigma1_theta_sq_exact); the nominal 384/(pi^2 theta^2) family is reported
alongside as *_nominal rows.
"""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as sp_stats

from src.core.config import Config
from src.experiments.parallel import derive_seed, run_replicates
from src.experiments.report import ExperimentReport, write_report
from src.models.experiment_config import ExperimentConfig, ExperimentKind, Placement
from src.sheq import stats, variation, wick_oracle
from src.sheq.errors import DegeneratePathError, DomainError
from src.sheq.field_sim import (
    scheme_temporal_covariance,
    simulate_coupled_batch,
    simulate_field_batch,
    temporal_holder_exponent,
)
from src.sheq.gaussian_sim import build_temporal_covariance, sample_paths
from src.sheq.kernel import cov_u0, increment_cov_matrix

logger = logging.getLogger(__name__)

MAX_DCOR_COMPONENTS = 16
# rough single-core throughput used for the budget warning
SECONDS_PER_FLOP = 1e-9
SECONDS_PER_SCHEME_CELL = 1e-8

INDEPENDENCE_NOTE = (
    "The Wasserstein distance between the joint law of (U_N, Y_N) and the product "
    "of its marginals is not estimable in dimension m(N). Reported proxies: "
    "distance correlation per data component, the empirical joint Kolmogorov gap on "
    "at most three components, a bounded-Lipschitz family gap, and the exact "
    "dependence functional of the Stein bound, which controls the distance from above."
)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float


def fit_loglog_slope(pairs) -> SlopeFit:
    """Least-squares line through (log N, log value); residual is the RMS misfit."""
    items = list(pairs.items()) if isinstance(pairs, dict) else list(pairs)
    if len(items) < 3:
        raise DomainError(f"slope fit needs at least 3 points, got {len(items)}")
    N = np.array([float(n) for n, _ in items])
    values = np.array([float(v) for _, v in items])
    if np.any(values <= 0) or np.any(N <= 0):
        raise DomainError("log-log fit needs positive N and values")
    (slope, intercept), residuals, *_ = np.polyfit(np.log(N), np.log(values), 1, full=True)
    rms = math.sqrt(float(residuals[0]) / len(items)) if residuals.size else 0.0
    return SlopeFit(slope=float(slope), intercept=float(intercept), residual=rms)


def _slope_stderr(N: np.ndarray, values: np.ndarray, stderrs: np.ndarray) -> float:
    """Delta-method standard error of the fitted slope from per-point standard errors."""
    x = np.log(N)
    weights = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    return float(math.sqrt(np.sum(weights**2 * (stderrs / values) ** 2)))


def _add_slopes(report: ExperimentReport, names: list[str]):
    for name in names:
        rows = [row for row in report.rows if row["stat"] == name and row["N"] > 0]
        if len(rows) < 3 or any(row["value"] <= 0 for row in rows):
            continue
        fit = fit_loglog_slope([(row["N"], row["value"]) for row in rows])
        stderr = None
        if all(row["stderr"] is not None for row in rows):
            stderr = _slope_stderr(
                np.array([row["N"] for row in rows], dtype=float),
                np.array([row["value"] for row in rows]),
                np.array([row["stderr"] for row in rows]),
            )
        report.add(0, f"{name}_slope", fit.slope, stderr=stderr)


def select_indices(N: int, gamma: float, placement: Placement | str = Placement.EVENLY) -> np.ndarray:
    """
    Observation indices J_N in 1..N with card(J_N) = floor(N^gamma).

    "first" takes 1..m, "evenly" takes ceil(k N / m) for k = 1..m.
    """
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must satisfy 0 <= gamma <= 1, got {gamma}")
    m = min(N, int(math.floor(N**gamma + 1e-9)))
    if m < 1:
        raise DomainError(f"m(N) = 0 for N={N}, gamma={gamma}")
    if Placement(placement) is Placement.FIRST:
        return np.arange(1, m + 1)
    k = np.arange(1, m + 1)
    return -((-k * N) // m)


def _spread(m: int, k: int) -> np.ndarray:
    return np.unique(np.linspace(0, m - 1, min(m, k)).round().astype(int))


def _mean_with_se(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def _variance_with_se(x: np.ndarray) -> tuple[float, float]:
    s2 = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    return s2, math.sqrt(max(m4 - s2 * s2, 0.0) / x.size)


def _check_nondegenerate(V: np.ndarray):
    zero = np.flatnonzero(V == 0)
    if zero.size:
        raise DegeneratePathError(f"replicate {int(zero[0])} has a constant observed path (V = 0)")


def _exact_chunk(cov, master_seed: int, y_indices: np.ndarray, start: int, stop: int):
    paths = sample_paths(cov, master_seed, start, stop)
    return variation.quartic_variation_batch(paths), paths[:, y_indices]


def _scheme_chunk(spec, params, master_seed: int, y_indices: np.ndarray, start: int, stop: int):
    paths = simulate_field_batch(spec, params, master_seed, start, stop)
    return variation.quartic_variation_batch(paths), paths[:, y_indices]


def _coupled_chunk(spec, params, master_seed: int, start: int, stop: int):
    u, u0 = simulate_coupled_batch(spec, params, master_seed, start, stop)
    X = u - u0
    return (
        variation.quartic_variation_batch(u),
        variation.quartic_variation_batch(u0),
        variation.remainder_terms_batch(u0, X),
        X,
        u0,
    )


def sample_statistics(
    config: ExperimentConfig, N: int, seed: int, y_indices=(), workers: int | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """
    V_N for every replicate plus the path values at y_indices, taken from the
    same paths. Returns (V, Y, jitter).
    """
    y_idx = np.asarray(y_indices, dtype=int)
    if config.uses_scheme:
        spec = config.field.grid_spec(N)
        V, Y = run_replicates(_scheme_chunk, config.replicates, spec, config.params, seed, y_idx, workers=workers)
        return V, Y, 0.0
    cov = build_temporal_covariance(N, config.theta, max_n=config.max_n)
    V, Y = run_replicates(_exact_chunk, config.replicates, cov, seed, y_idx, workers=workers)
    return V, Y, cov.jitter


def _new_report(config: ExperimentConfig) -> ExperimentReport:
    return ExperimentReport(
        experiment=config.kind.value,
        config=config.model_dump(mode="json"),
        master_seed=config.master_seed,
        record_timing=config.record_timing,
    )


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def _add_constants(report: ExperimentReport, constants: wick_oracle.AsymptoticConstants):
    report.add(0, "limit", constants.limit)
    report.add(0, "sigma_theta_sq_exact", constants.sigma_theta_sq_exact)
    report.add(0, "sigma_theta_sq_nominal", constants.sigma_theta_sq)


def run_moments_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Exact E V_N and Var V_N from the Wick oracle and their gaps to the limits."""
    report = _new_report(config)
    theta = config.theta
    constants = wick_oracle.asymptotic_constants(theta)
    _add_constants(report, constants)

    for N in config.n_values:
        start = time.perf_counter()
        C = increment_cov_matrix(N, theta)
        ev = wick_oracle.expected_quartic(C)
        var = wick_oracle.variance_quartic(C)
        wall = _elapsed_ms(start)
        report.wall_ms[str(N)] = wall

        report.add(N, "expected_quartic", ev, wall_ms=wall)
        report.add(N, "variance_quartic", var)
        report.add(N, "mean_gap", abs(ev - constants.limit))
        report.add(N, "bulk_mean_gap", wick_oracle.bulk_expected_quartic_gap(C, theta))
        report.add(N, "n_variance", N * var)
        report.add(N, "n_variance_gap", abs(N * var - constants.sigma_theta_sq_exact))
        report.add(N, "n_variance_gap_nominal", abs(N * var - constants.sigma_theta_sq))
        logger.info("Moments computed", extra={"N": N, "theta": theta, "wall_ms": round(wall, 1)})

    _add_slopes(report, ["mean_gap", "bulk_mean_gap", "n_variance_gap"])
    return report


def run_clt_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """KS and W1 distances of the standardized statistic U_N to its Gaussian limit."""
    report = _new_report(config)
    theta = config.theta
    constants = wick_oracle.asymptotic_constants(theta)
    _add_constants(report, constants)
    sigma = math.sqrt(constants.sigma_theta_sq_exact)
    sigma_nominal = math.sqrt(constants.sigma_theta_sq)

    for N in config.n_values:
        start = time.perf_counter()
        seed = derive_seed(config.master_seed, N)
        V, _, jitter = sample_statistics(config, N, seed, workers=workers)
        _check_nondegenerate(V)
        U = variation.standardize(V, N, theta)
        M = U.size
        wall = _elapsed_ms(start)
        report.jitter[str(N)] = jitter
        report.wall_ms[str(N)] = wall

        report.add(N, "ks", stats.ks_to_normal(U, 0.0, sigma), stats.ks_noise_floor(M), seed, wall)
        report.add(N, "ks_nominal", stats.ks_to_normal(U, 0.0, sigma_nominal), stats.ks_noise_floor(M), seed)
        report.add(
            N,
            "w1",
            stats.wasserstein1_to_normal(U, 0.0, sigma, config.quantile_count),
            stats.wasserstein_noise_floor(M, sigma),
            seed,
        )
        mean, mean_se = _mean_with_se(U)
        report.add(N, "mean_U", mean, mean_se, seed)
        var, var_se = _variance_with_se(U)
        report.add(N, "variance_U", var, var_se, seed)
        report.add(N, "variance_ratio", var / constants.sigma_theta_sq_exact, var_se / constants.sigma_theta_sq_exact, seed)
        report.add(N, "variance_ratio_nominal", var / constants.sigma_theta_sq, var_se / constants.sigma_theta_sq, seed)
        if not config.uses_scheme:
            exact = N * wick_oracle.variance_quartic(increment_cov_matrix(N, theta))
            report.add(N, "variance_U_exact", exact)
        logger.info("CLT replicate batch done", extra={"N": N, "seed": seed, "wall_ms": round(wall, 1)})

    return report


def run_rate_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Distances to the limit law per N with their Monte Carlo noise floors and fitted decay."""
    report = _new_report(config)
    theta = config.theta
    constants = wick_oracle.asymptotic_constants(theta)
    _add_constants(report, constants)
    sigma = math.sqrt(constants.sigma_theta_sq_exact)

    for N in config.n_values:
        start = time.perf_counter()
        seed = derive_seed(config.master_seed, N)
        V, _, jitter = sample_statistics(config, N, seed, workers=workers)
        _check_nondegenerate(V)
        U = variation.standardize(V, N, theta)
        M = U.size
        wall = _elapsed_ms(start)
        report.jitter[str(N)] = jitter
        report.wall_ms[str(N)] = wall

        w1 = stats.wasserstein1_to_normal(U, 0.0, sigma, config.quantile_count)
        w1_floor = stats.wasserstein_noise_floor(M, sigma)
        ks = stats.ks_to_normal(U, 0.0, sigma)
        ks_floor = stats.ks_noise_floor(M)
        report.add(N, "w1", w1, w1_floor, seed, wall)
        report.add(N, "w1_excess", max(w1 - w1_floor, 0.0), w1_floor, seed)
        report.add(N, "ks", ks, ks_floor, seed)
        report.add(N, "ks_excess", max(ks - ks_floor, 0.0), ks_floor, seed)

        if not config.uses_scheme:
            C = increment_cov_matrix(N, theta)
            mean_exact = math.sqrt(N) * (wick_oracle.expected_quartic(C) - constants.limit)
            report.add(N, "abs_mean_U_exact", abs(mean_exact))
            report.add(N, "variance_U_exact", N * wick_oracle.variance_quartic(C))

    _add_slopes(report, ["w1_excess", "ks_excess", "abs_mean_U_exact"])
    return report


def run_estimator_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Consistency and Gaussian fluctuations of theta_hat = 6/(pi V_N)."""
    report = _new_report(config)
    theta = config.theta
    constants = wick_oracle.asymptotic_constants(theta)
    report.add(0, "sigma1_theta_sq_exact", constants.sigma1_theta_sq_exact)
    report.add(0, "sigma1_theta_sq_nominal", constants.sigma1_theta_sq)
    sigma1 = math.sqrt(constants.sigma1_theta_sq_exact)

    for N in config.n_values:
        start = time.perf_counter()
        seed = derive_seed(config.master_seed, N)
        V, _, jitter = sample_statistics(config, N, seed, workers=workers)
        estimates = variation.theta_hat(V)
        bars = variation.theta_bar(estimates, N, theta)
        M = bars.size
        wall = _elapsed_ms(start)
        report.jitter[str(N)] = jitter
        report.wall_ms[str(N)] = wall

        mean, mean_se = _mean_with_se(estimates)
        report.add(N, "theta_hat_mean", mean, mean_se, seed, wall)
        report.add(N, "theta_hat_rel_bias", (mean - theta) / theta, mean_se / theta, seed)
        var, var_se = _variance_with_se(bars)
        report.add(N, "theta_bar_variance", var, var_se, seed)
        report.add(N, "theta_bar_variance_ratio", var / constants.sigma1_theta_sq_exact, var_se / constants.sigma1_theta_sq_exact, seed)
        report.add(N, "theta_bar_variance_ratio_nominal", var / constants.sigma1_theta_sq, var_se / constants.sigma1_theta_sq, seed)
        report.add(N, "theta_bar_skewness", float(sp_stats.skew(bars)), math.sqrt(6.0 / M), seed)

        gaps = []
        for t in config.t_points:
            target = float(special.ndtr(t / sigma1))
            gap = abs(float(np.mean(bars <= t)) - target)
            gaps.append(gap)
            report.add(N, f"cdf_gap@{t:g}", gap, math.sqrt(target * (1.0 - target) / M), seed)
            report.add(N, f"cdf_shift_bound@{t:g}", variation.estimator_cdf_shift_bound(t, N, theta))
        worst = max(gaps)
        report.add(N, "cdf_gap_max", worst, 0.5 / math.sqrt(M), seed)
        report.add(N, "cdf_gap_constant", worst * N**0.25, 0.5 * N**0.25 / math.sqrt(M), seed)
        logger.info("Estimator batch done", extra={"N": N, "seed": seed, "theta_hat_mean": mean})

    _add_slopes(report, ["cdf_gap_max"])
    return report


def run_independence_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Dependence diagnostics between U_N and observations u(t_q), q in J_N, from the same paths."""
    report = _new_report(config)
    report.notes.append(INDEPENDENCE_NOTE)
    theta = config.theta
    constants = wick_oracle.asymptotic_constants(theta)
    sigma = math.sqrt(constants.sigma_theta_sq_exact)

    def limit_cdf(z):
        return special.ndtr(np.asarray(z) / sigma)

    thresholds = sigma * np.asarray(config.t_points, dtype=float)

    for N in config.n_values:
        seed = derive_seed(config.master_seed, N)
        cov = increment_cov_matrix(N, theta)
        var_U_exact = N * wick_oracle.variance_quartic(cov)
        for gamma in config.gammas:
            tag = f"[gamma={gamma:g}]"
            start = time.perf_counter()
            J = select_indices(N, gamma, config.placement)
            V, Y, jitter = sample_statistics(config, N, seed, y_indices=J, workers=workers)
            _check_nondegenerate(V)
            U = variation.standardize(V, N, theta)
            M = U.size
            wall = _elapsed_ms(start)
            report.jitter[str(N)] = jitter
            report.wall_ms[f"{N}{tag}"] = wall

            components = _spread(J.size, MAX_DCOR_COMPONENTS)
            dcors = np.array(
                [
                    stats.distance_correlation(U, Y[:, k], bias_corrected=config.dcor_bias_corrected)
                    for k in components
                ]
            )
            null_scale = 1.0 / math.sqrt(M)
            report.add(N, f"m{tag}", J.size)
            report.add(N, f"dcor_max{tag}", float(dcors.max()), null_scale, seed, wall)
            report.add(N, f"dcor_mean{tag}", float(dcors.mean()), null_scale, seed)

            joint = components[: config.joint_dim]
            report.add(
                N, f"joint_ks_gap{tag}", stats.joint_kolmogorov_gap(U, Y[:, joint], limit_cdf), stats.ks_noise_floor(M), seed
            )
            report.add(
                N, f"pointwise_gap@0{tag}", stats.pointwise_joint_gap(U, Y[:, joint], 0.0, limit_cdf), stats.ks_noise_floor(M), seed
            )
            report.add(
                N,
                f"lipschitz_gap{tag}",
                stats.lipschitz_family_gap(
                    U, Y, thresholds, limit_cdf, config.lipschitz_functions, seed=derive_seed(seed, 1)
                ),
                null_scale,
                seed,
            )

            report.add(N, f"dependence_bound_exact{tag}", wick_oracle.dependence_bound(N, J, theta))
            q_pos = int(components[0])
            q = int(J[q_pos])
            report.add(N, f"sq_corr_exact{tag}", wick_oracle.statistic_square_correlation(N, q, theta, var_U=var_U_exact))
            report.add(N, f"sq_corr_mc{tag}", float(np.corrcoef(U, Y[:, q_pos] ** 2)[0, 1]), null_scale, seed)
            logger.info(
                "Independence batch done",
                extra={"N": N, "gamma": gamma, "m": int(J.size), "seed": seed, "wall_ms": round(wall, 1)},
            )

    for gamma in config.gammas:
        _add_slopes(report, [f"dependence_bound_exact[gamma={gamma:g}]"])
    return report


def run_semilinear_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Scheme-based V_N with drift, the coupled remainder and the linear-case cross-validation."""
    report = _new_report(config)
    theta = config.theta
    params = config.params
    constants = wick_oracle.asymptotic_constants(theta)
    report.add(0, "limit", constants.limit)

    for N in config.n_values:
        start = time.perf_counter()
        spec = config.field.grid_spec(N)
        seed = derive_seed(config.master_seed, N)
        V_u, V_u0, P, X, u0 = run_replicates(_coupled_chunk, config.replicates, spec, params, seed, workers=workers)
        M = V_u.size
        wall = _elapsed_ms(start)
        report.wall_ms[str(N)] = wall

        mean, mean_se = _mean_with_se(V_u)
        report.add(N, "mean_V", mean, mean_se, seed, wall)
        report.add(N, "mean_V_rel_gap", mean / constants.limit - 1.0, mean_se / constants.limit, seed)
        mean0, mean0_se = _mean_with_se(V_u0)
        report.add(N, "mean_V_linear_scheme", mean0, mean0_se, seed)

        scaled, scaled_se = _mean_with_se(math.sqrt(N) * np.abs(P))
        report.add(N, "remainder_abs_scaled", scaled, scaled_se, seed)
        if np.any(X != 0):
            report.add(N, "holder_exponent_X", temporal_holder_exponent(X), seed=seed)
        report.add(N, "holder_exponent_u0", temporal_holder_exponent(u0), seed=seed)

        exact_seed = derive_seed(config.master_seed, N, 1)
        cov = build_temporal_covariance(N, theta, max_n=config.max_n)
        report.jitter[str(N)] = cov.jitter
        V_exact, _ = run_replicates(_exact_chunk, M, cov, exact_seed, np.empty(0, dtype=int), workers=workers)
        report.add(
            N,
            "ks_scheme_vs_exact",
            stats.two_sample_ks(V_u0, V_exact),
            stats.KOLMOGOROV_MEAN * math.sqrt(2.0 / M),
            exact_seed,
        )

        scheme_var = np.diag(scheme_temporal_covariance(spec, theta))
        exact_var = cov_u0(np.arange(1, N + 1) / N, np.arange(1, N + 1) / N, theta)
        report.add(N, "scheme_marginal_var_rel_gap", float(np.max(np.abs(scheme_var / exact_var - 1.0))))
        logger.info(
            "Semilinear batch done",
            extra={"N": N, "drift": params.drift.label(), "seed": seed, "wall_ms": round(wall, 1)},
        )

    _add_slopes(report, ["remainder_abs_scaled"])
    return report


RUNNERS = {
    ExperimentKind.MOMENTS: run_moments_experiment,
    ExperimentKind.CLT: run_clt_experiment,
    ExperimentKind.RATE: run_rate_experiment,
    ExperimentKind.ESTIMATOR: run_estimator_experiment,
    ExperimentKind.INDEPENDENCE: run_independence_experiment,
    ExperimentKind.SEMILINEAR: run_semilinear_experiment,
}


def predict_seconds(config: ExperimentConfig, workers: int = 1) -> float:
    """Order-of-magnitude runtime estimate used for the budget warning."""
    M = config.replicates
    total = 0.0
    for N in config.n_values:
        if config.kind is ExperimentKind.MOMENTS:
            total += (N**3 / 3.0 + 4.0 * N**2) * SECONDS_PER_FLOP
            continue
        if config.uses_scheme:
            columns = 2 if config.kind is ExperimentKind.SEMILINEAR else 1
            steps = config.field.steps_per_observation * N
            total += columns * M * steps * config.field.cells * SECONDS_PER_SCHEME_CELL / workers
        if not config.uses_scheme or config.kind is ExperimentKind.SEMILINEAR:
            total += (N**3 / 3.0) * SECONDS_PER_FLOP + 2.0 * M * N**2 * SECONDS_PER_FLOP / workers
    if config.kind is ExperimentKind.INDEPENDENCE:
        total *= len(config.gammas)
    return total


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    n_jobs = workers or config.workers or Config.WORKERS
    predicted = predict_seconds(config, n_jobs)
    if predicted > Config.BUDGET_SECONDS:
        logger.warning(
            "Experiment exceeds the time budget",
            extra={"kind": config.kind.value, "predicted_seconds": round(predicted), "budget_seconds": Config.BUDGET_SECONDS},
        )

    start = time.perf_counter()
    report = RUNNERS[config.kind](config, workers=n_jobs)
    report.wall_ms["total"] = _elapsed_ms(start)
    logger.info(
        "Experiment finished",
        extra={"kind": config.kind.value, "rows": len(report.rows), "wall_ms": round(report.wall_ms["total"], 1)},
    )
    if config.output:
        write_report(report, config.output)
    return report
