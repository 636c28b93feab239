"""
Monte Carlo checks of the sampling moments of one stratum under simple random
sampling without replacement.

Replications run in fixed-size chunks. Chunk ``c`` draws from child ``c`` of
``SeedSequence(seed)`` and results are merged in chunk order, so reports do
not depend on the worker count.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import stats

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import ValidationError
from stratalloc.processing.moment_formulas import fourth_moment_vech, population_covariance
from stratalloc.simulation.sampler import decomposition_residual, srswor_indices, xi_statistic

logger = logging.getLogger(__name__)

CHUNK_SIZE = 500
MEAN_Z_LIMIT = 4.0
COV_Z_LIMIT = 10.0
UNCORRECTED = "without finite-population factor"


@dataclass(frozen=True, eq=False)
class SimConfig:
    """
    :param population: ``N x G`` data matrix of the simulated stratum.
    :param n: Sample size, ``2 <= n <= N``.
    :param reps: Number of independent samples.
    :param seed: Root seed.
    :param workers: Worker processes; ``STRATALLOC_WORKERS`` is read by the CLI, not here.
    """

    population: np.ndarray
    n: int
    reps: int = 10_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        population = np.atleast_2d(np.asarray(self.population, dtype=float))
        if population.ndim != 2 or population.shape[0] < 2:
            raise ValidationError("the simulated population needs at least two units.")
        object.__setattr__(self, "population", population)
        if not 2 <= self.n <= population.shape[0]:
            raise ValidationError(f"sample size n={self.n} must satisfy 2 <= n <= N={population.shape[0]}.")
        if self.reps < 1:
            raise ValidationError(f"reps must be >= 1, got {self.reps}.")
        if self.workers < 1:
            raise ValidationError(f"workers must be >= 1, got {self.workers}.")

    @property
    def N(self):
        return self.population.shape[0]

    @property
    def G(self):
        return self.population.shape[1]


@dataclass(frozen=True, eq=False)
class MomentReport:
    """
    Empirical against theoretical moments of a sampled statistic.

    ``mean_z`` uses the Monte Carlo standard error of the empirical mean;
    ``cov_z`` uses the standard error of the empirical covariance entries.
    ``alternatives`` holds further candidate covariance matrices with their
    largest absolute z-score in ``alternative_max_z``.
    """

    statistic: str
    n: int
    N: int
    reps: int
    seed: int
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    theoretical_mean: np.ndarray
    theoretical_cov: np.ndarray
    mean_z: np.ndarray
    cov_z: np.ndarray
    skewness: np.ndarray
    skewness_se: float
    excess_kurtosis: np.ndarray
    kurtosis_se: float
    alternatives: Dict[str, np.ndarray] = field(default_factory=dict)
    alternative_max_z: Dict[str, float] = field(default_factory=dict)
    identity_residual: Optional[float] = None
    matched: Optional[str] = None

    @property
    def mean_within_limit(self):
        return bool(np.all(np.abs(self.mean_z) < MEAN_Z_LIMIT))

    @property
    def cov_within_limit(self):
        return bool(np.all(np.abs(self.cov_z) < COV_Z_LIMIT))


def _chunk_sizes(reps):
    full, rest = divmod(reps, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


def _simulate_chunk(args):
    population, n, reps, seed_sequence, pop_mean, statistic = args
    rng = np.random.default_rng(seed_sequence)
    values = []
    residual = 0.0
    for _ in range(reps):
        sample = population[srswor_indices(population.shape[0], n, rng)]
        if statistic == "xi":
            values.append(xi_statistic(sample, pop_mean))
            residual = max(residual, decomposition_residual(sample, pop_mean))
        else:
            values.append(sample.mean(axis=0))
    return np.array(values), residual


def _simulate(cfg, statistic):
    pop_mean = cfg.population.mean(axis=0)
    sizes = _chunk_sizes(cfg.reps)
    children = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    tasks = [(cfg.population, cfg.n, size, child, pop_mean, statistic) for size, child in zip(sizes, children)]
    workers = min(cfg.workers, len(tasks), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_chunk, tasks))
    else:
        results = [_simulate_chunk(task) for task in tasks]
    logger.debug("Simulated %d replications in %d chunks with %d workers", cfg.reps, len(tasks), workers)
    values = np.concatenate([chunk for chunk, _ in results])
    residual = max(chunk_residual for _, chunk_residual in results)
    return values, residual


def _z_scores(difference, standard_error, reference, floor=0.0):
    # rounding-level differences count as exact matches whatever the standard error
    exact = np.abs(difference) <= 1e-9 * np.abs(reference) + floor
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(standard_error > 0, difference / np.where(standard_error > 0, standard_error, 1.0), np.inf)
    z = np.where(exact, 0.0, z)
    return np.where(np.isinf(z), np.copysign(np.inf, difference), z)


def _moment_summary(values):
    reps = values.shape[0]
    mean = values.mean(axis=0)
    centered = values - mean
    cov = centered.T @ centered / max(reps - 1, 1)
    cov = (cov + cov.T) / 2.0
    mean_se = values.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros_like(mean)
    products = centered[:, :, None] * centered[:, None, :]
    cov_se = products.std(axis=0, ddof=1) / np.sqrt(reps) if reps > 1 else np.zeros_like(cov)
    constant = np.all(centered == 0.0, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        skewness = np.where(constant, 0.0, stats.skew(values, axis=0))
        kurtosis = np.where(constant, 0.0, stats.kurtosis(values, axis=0))
    return mean, cov, mean_se, cov_se, skewness, kurtosis


def verify_lemma1_moments(cfg):
    """
    Compare the empirical mean and covariance of ``vech Xi`` with
    ``n/(n-1) vech S`` and ``n/(n-1)^2 (N - n)/(N - 1) (M4 - vech S vech S')``.

    ``S`` and ``M4`` are population moments with divisor ``N``. ``vech Xi`` is
    ``n/(n-1)`` times the mean of ``n`` draws without replacement, so its
    covariance carries the finite-population factor ``(N - n)/(N - 1)``. The
    form without that factor is reported under ``alternatives``.
    """
    population, n, N = cfg.population, cfg.n, cfg.N
    S = population_covariance(population)
    s_vech = matrix_kit.vech(S)
    kernel = fourth_moment_vech(population) - np.outer(s_vech, s_vech)
    theoretical_mean = n / (n - 1.0) * s_vech
    uncorrected_cov = n / (n - 1.0) ** 2 * kernel
    theoretical_cov = uncorrected_cov * (N - n) / (N - 1.0)
    scale = float(np.max(np.abs(uncorrected_cov))) if uncorrected_cov.size else 0.0

    values, residual = _simulate(cfg, "xi")
    mean, cov, mean_se, cov_se, skewness, kurtosis = _moment_summary(values)
    uncorrected_z = _z_scores(cov - uncorrected_cov, cov_se, uncorrected_cov, 1e-12 * scale)
    return MomentReport(
        statistic="vech Xi",
        n=n,
        N=N,
        reps=cfg.reps,
        seed=cfg.seed,
        empirical_mean=mean,
        empirical_cov=cov,
        theoretical_mean=theoretical_mean,
        theoretical_cov=theoretical_cov,
        mean_z=_z_scores(mean - theoretical_mean, mean_se, theoretical_mean),
        cov_z=_z_scores(cov - theoretical_cov, cov_se, theoretical_cov, 1e-12 * scale),
        skewness=skewness,
        skewness_se=float(np.sqrt(6.0 / cfg.reps)),
        excess_kurtosis=kurtosis,
        kurtosis_se=float(np.sqrt(24.0 / cfg.reps)),
        alternatives={UNCORRECTED: uncorrected_cov},
        alternative_max_z={UNCORRECTED: float(np.max(np.abs(uncorrected_z)))},
        identity_residual=residual,
    )


def verify_mean_clt(cfg):
    """
    Compare the empirical distribution of the sample mean with two candidate covariances:
    ``S`` itself, and the finite-population form ``(1/n - 1/N) N/(N-1) S``.

    ``theoretical_cov`` holds the finite-population form; ``matched`` names the
    candidate with the smaller largest absolute z-score.
    """
    population, n, N = cfg.population, cfg.n, cfg.N
    S = population_covariance(population)
    finite = (1.0 / n - 1.0 / N) * N / (N - 1.0) * S
    pop_mean = population.mean(axis=0)
    scale = float(np.max(np.abs(S))) if S.size else 0.0
    values, _ = _simulate(cfg, "mean")
    mean, cov, mean_se, cov_se, skewness, kurtosis = _moment_summary(values)
    candidates = {"as printed (S)": S, "finite-population": finite}
    max_z = {
        name: float(np.max(np.abs(_z_scores(cov - matrix, cov_se, matrix, 1e-12 * scale))))
        for name, matrix in candidates.items()
    }
    matched = min(candidates, key=lambda name: (max_z[name], name))
    return MomentReport(
        statistic="mean",
        n=n,
        N=N,
        reps=cfg.reps,
        seed=cfg.seed,
        empirical_mean=mean,
        empirical_cov=cov,
        theoretical_mean=pop_mean,
        theoretical_cov=finite,
        mean_z=_z_scores(mean - pop_mean, mean_se, pop_mean, 1e-12 * np.sqrt(scale)),
        cov_z=_z_scores(cov - finite, cov_se, finite, 1e-12 * scale),
        skewness=skewness,
        skewness_se=float(np.sqrt(6.0 / cfg.reps)),
        excess_kurtosis=kurtosis,
        kurtosis_se=float(np.sqrt(24.0 / cfg.reps)),
        alternatives=candidates,
        alternative_max_z=max_z,
        matched=matched,
    )
