"""
Simple random sampling without replacement and the sample statistics built on it.
"""

import logging

import numpy as np

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import ValidationError

logger = logging.getLogger(__name__)


def srswor_indices(N, n, rng):
    """
    Row indices of a simple random sample of size ``n`` from ``N`` units.

    Partial Fisher-Yates shuffle: position ``i`` swaps with a uniform position in ``[i, N)``.

    :param N: Population size.
    :param n: Sample size, ``2 <= n <= N``.
    :param rng: A ``numpy.random.Generator``.
    :return: Integer array of ``n`` distinct indices.
    :raises ValidationError: If ``n`` is out of range.
    """
    if not 2 <= n <= N:
        raise ValidationError(f"sample size n={n} must satisfy 2 <= n <= N={N}.")
    order = np.arange(N)
    picks = rng.integers(np.arange(n), N)
    for i, j in enumerate(picks):
        order[i], order[j] = order[j], order[i]
    return order[:n]


def srswor(population, n, rng):
    """
    Draw ``n`` rows of ``population`` without replacement.

    :param population: ``N x G`` data matrix of one stratum.
    :return: ``n x G`` sample.
    """
    population = np.asarray(population, dtype=float)
    return population[srswor_indices(population.shape[0], n, rng)]


def xi_statistic(sample, pop_mean):
    """
    ``vech`` of ``(1/(n-1)) sum_i (y_i - Ybar)(y_i - Ybar)'`` around the *population* mean.

    :param sample: ``n x G`` sample.
    :param pop_mean: Population mean vector of the stratum.
    :return: Vector of length ``G(G+1)/2``.
    """
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    if sample.shape[0] < 2:
        raise ValidationError("the Xi statistic needs at least two sampled units.")
    d = sample - np.asarray(pop_mean, dtype=float)
    xi = d.T @ d / (sample.shape[0] - 1.0)
    return matrix_kit.vech((xi + xi.T) / 2.0)


def decomposition_residual(sample, pop_mean):
    """
    Largest relative deviation from ``s = Xi - n/(n-1) (ybar - Ybar)(ybar - Ybar)'``.

    :return: ``max |vech(s) - vech(rhs)| / max(1, max |vech(Xi)|)``.
    """
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    n = sample.shape[0]
    xi = xi_statistic(sample, pop_mean)
    offset = sample.mean(axis=0) - np.asarray(pop_mean, dtype=float)
    correction = n / (n - 1.0) * np.outer(offset, offset)
    rhs = xi - matrix_kit.vech((correction + correction.T) / 2.0)
    centered = sample - sample.mean(axis=0)
    s = centered.T @ centered / (n - 1.0)
    lhs = matrix_kit.vech((s + s.T) / 2.0)
    return float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(xi))))
