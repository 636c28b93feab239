"""
Diagnostics for the Hajek-type conditions behind the asymptotic normality of
the sample covariance and the sample mean in one stratum.
"""

import logging
from dataclasses import dataclass

import numpy as np

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import ValidationError
from stratalloc.processing.moment_formulas import fourth_moment_vech, population_covariance

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HajekReport:
    """
    :param lhs: ``lambda' K lambda`` with ``K = M4 - vech S vech S'``.
    :param rhs: ``max_alpha lambda_alpha^2 K_alpha,alpha``.
    :param ratio: ``lhs / rhs`` (nan when degenerate).
    :param satisfied: ``ratio >= epsilon``.
    :param hcas_ratio: Per characteristic, top-n sum of ``((y - Ybar)^2 - S^2)^2`` over its total.
    :param hcas1_ratio: Per characteristic, top-n sum of ``(y - Ybar)^2`` over its total.
    :param degenerate: True when the kernel ``K`` vanishes.
    """

    n: int
    N: int
    epsilon: float
    lam: np.ndarray
    lhs: float
    rhs: float
    ratio: float
    satisfied: bool
    hcas_ratio: np.ndarray
    hcas1_ratio: np.ndarray
    degenerate: bool


def parse_lambda(text, k, rng=None):
    """
    Parse a lambda vector specification.

    Accepted forms: ``canonical:alpha`` (1-based unit vector), ``random[:seed]``
    (standard normal draw) and a comma-separated list of ``k`` numbers.

    :param text: The specification.
    :param k: Required length ``G(G+1)/2``.
    :raises ValidationError: For malformed input.
    """
    text = str(text).strip()
    if text.startswith("canonical"):
        _, _, position = text.partition(":")
        try:
            alpha = int(position or 1)
        except ValueError:
            raise ValidationError(f"bad canonical lambda '{text}'.") from None
        if not 1 <= alpha <= k:
            raise ValidationError(f"canonical index {alpha} outside 1..{k}.")
        lam = np.zeros(k)
        lam[alpha - 1] = 1.0
        return lam
    if text.startswith("random"):
        _, _, seed = text.partition(":")
        generator = np.random.default_rng(int(seed)) if seed else (rng or np.random.default_rng(0))
        return generator.standard_normal(k)
    try:
        lam = np.array([float(part) for part in text.split(",")])
    except ValueError:
        raise ValidationError(f"bad lambda list '{text}'.") from None
    if lam.shape != (k,):
        raise ValidationError(f"lambda has {lam.size} entries, expected {k}.")
    return lam


def _top_share(terms, n):
    total = terms.sum(axis=0)
    top = np.sort(terms, axis=0)[-n:].sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, top / np.where(total > 0, total, 1.0), np.nan)


def hajek_condition_report(population, n, lam, epsilon=1e-3):
    """
    Evaluate the Hajek-type conditions for sampling ``n`` of the rows of ``population``.

    The maximum over ``n``-subsets of a sum of fixed unit-level terms is the
    sum of the ``n`` largest terms, so both subset ratios are exact.

    :param population: ``N x G`` stratum data.
    :param n: Sample size.
    :param lam: Vector of length ``G(G+1)/2``.
    :param epsilon: Threshold the ratio must reach.
    :return: :class:`HajekReport`.
    """
    population = np.atleast_2d(np.asarray(population, dtype=float))
    N, G = population.shape
    if not 1 <= n <= N:
        raise ValidationError(f"sample size n={n} must satisfy 1 <= n <= N={N}.")
    lam = np.asarray(lam, dtype=float)
    k = matrix_kit.vech_length(G)
    if lam.shape != (k,):
        raise ValidationError(f"lambda has {lam.size} entries, expected {k}.")

    S = population_covariance(population)
    s_vech = matrix_kit.vech(S)
    m4 = fourth_moment_vech(population)
    kernel = m4 - np.outer(s_vech, s_vech)
    lhs = float(lam @ kernel @ lam)
    rhs = float(np.max(lam**2 * np.diag(kernel)))
    scale = max(np.abs(m4).max(), np.finfo(float).tiny)
    degenerate = bool(np.abs(kernel).max() <= 1e-14 * scale)
    if degenerate or rhs <= 0.0:
        ratio = float("nan")
    else:
        ratio = lhs / rhs

    squared = (population - population.mean(axis=0)) ** 2
    hcas = _top_share((squared - np.diag(S)) ** 2, n)
    hcas1 = _top_share(squared, n)
    if degenerate:
        logger.warning("Fourth-moment kernel vanishes; the Hajek condition is degenerate.")
    return HajekReport(
        n=n,
        N=N,
        epsilon=epsilon,
        lam=lam,
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        satisfied=bool(not degenerate and np.isfinite(ratio) and ratio >= epsilon),
        hcas_ratio=hcas,
        hcas1_ratio=hcas1,
        degenerate=degenerate,
    )
