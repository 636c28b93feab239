import logging

import numpy as np

from stratalloc.core.exceptions import InfeasibleProblemError
from stratalloc.core.strata import Allocation, TotalSampleBudget
from stratalloc.optimization.constraints import apportion
from stratalloc.processing.moment_formulas import variance_vector

logger = logging.getLogger(__name__)


def neyman_quotas(design, j, total_n):
    """
    Continuous Neyman quotas ``n_h = total_n * N_h s_hj / sum_l N_l s_lj`` for characteristic ``j``.

    :param design: Survey design.
    :param j: 0-based characteristic index.
    :param total_n: Total sample size.
    """
    spread = np.sqrt(np.array([stratum.covariance[j, j] for stratum in design.strata]))
    mass = design.sizes * spread
    if mass.sum() == 0:
        return np.full(design.H, total_n / design.H)
    return total_n * mass / mass.sum()


def neyman_allocation(design, j, total_n=None):
    """
    Integer Neyman allocation for a single characteristic.

    The continuous optimum of ``sum_h W_h^2 s_hj^2 / n_h`` under ``sum_h n_h = total_n``
    is pinned to ``[2, N_h]`` and integerized by largest remainders (lowest
    index first on ties).

    :param design: Survey design.
    :param j: Characteristic, as 0-based index, name or 1-based position string.
    :param total_n: Total sample size; defaults to the design's total-sample budget.
    :return: :class:`~stratalloc.core.strata.Allocation` summing to ``total_n``.
    :raises InfeasibleProblemError: If ``2H <= total_n <= N`` fails.
    """
    if isinstance(j, str):
        j = design.characteristic_index(j)
    if total_n is None:
        if not isinstance(design.budget, TotalSampleBudget):
            raise InfeasibleProblemError("Neyman allocation needs a total sample size.")
        total_n = design.budget.total_n
    total_n = int(total_n)
    if total_n < 2 * design.H or total_n > design.N:
        raise InfeasibleProblemError(f"total_n={total_n} outside [2H, N] = [{2 * design.H}, {design.N}].")
    quotas = neyman_quotas(design, j, total_n)
    sizes = apportion(quotas, total_n, np.full(design.H, 2.0), design.sizes)
    logger.debug("Neyman allocation for %s: %s", design.characteristic_names[j], sizes.tolist())
    return Allocation(tuple(int(v) for v in sizes))


def variance_report(design, n):
    """
    Estimated variance of every characteristic at allocation ``n``:
    ``sum_h W_h^2 s_hj^2 / n_h - sum_h W_h s_hj^2 / N``.

    :return: Vector of length G.
    """
    if isinstance(n, Allocation):
        n = n.as_array()
    return variance_vector(design, n)
