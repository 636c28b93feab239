"""
Brute-force reference solver for small allocation problems.
"""

import logging
import time

import numpy as np

from stratalloc.core.exceptions import LatticeTooLargeError
from stratalloc.optimization.constraints import EQUALITY, ConstraintSet
from stratalloc.optimization.integer_solver import build_report

logger = logging.getLogger(__name__)

LATTICE_LIMIT = 1_000_000


def iter_lattice(cons):
    """
    Yield every feasible integer allocation in lexicographic order.

    Partial allocations are cut as soon as the remaining strata can no longer
    reach (or stay within) the budget.
    """
    a, b, lower, upper = cons.a, cons.b, cons.lower.astype(int), cons.upper.astype(int)
    H = cons.H
    tol = cons.tolerance
    # cheapest and dearest completion of strata h..H-1
    min_tail = np.concatenate([np.cumsum((a * lower)[::-1])[::-1], [0.0]])
    max_tail = np.concatenate([np.cumsum((a * upper)[::-1])[::-1], [0.0]])
    reach = a.min() if cons.relation == EQUALITY else np.inf
    n = np.zeros(H, dtype=int)

    def descend(h, spent):
        if h == H:
            if cons.is_feasible(n):
                yield n.copy()
            return
        for value in range(lower[h], upper[h] + 1):
            total = spent + a[h] * value
            if total + min_tail[h + 1] > b + tol:
                break
            if cons.relation == EQUALITY and total + max_tail[h + 1] <= b - reach:
                continue
            n[h] = value
            yield from descend(h + 1, total)

    if cons.unit_costs and cons.relation == EQUALITY:
        yield from _iter_unit(lower, upper, int(b))
    else:
        yield from descend(0, 0.0)


def _iter_unit(lower, upper, total):
    H = lower.shape[0]
    min_tail = np.concatenate([np.cumsum(lower[::-1])[::-1], [0]])
    max_tail = np.concatenate([np.cumsum(upper[::-1])[::-1], [0]])
    n = np.zeros(H, dtype=int)

    def descend(h, remaining):
        if h == H - 1:
            if lower[h] <= remaining <= upper[h]:
                n[h] = remaining
                yield n.copy()
            return
        start = max(lower[h], remaining - max_tail[h + 1])
        stop = min(upper[h], remaining - min_tail[h + 1])
        for value in range(start, stop + 1):
            n[h] = value
            yield from descend(h + 1, remaining - value)

    yield from descend(0, total)


def count_lattice(cons, limit=LATTICE_LIMIT):
    """
    Number of feasible integer allocations, counting stops once ``limit`` is exceeded.

    For a total-sample budget the count is an exact polynomial convolution.
    """
    if cons.unit_costs and cons.relation == EQUALITY:
        total = int(cons.b)
        ways = np.zeros(total + 1)
        ways[0] = 1.0
        for low, high in zip(cons.lower.astype(int), cons.upper.astype(int)):
            updated = np.zeros(total + 1)
            for value in range(low, min(high, total) + 1):
                updated[value:] += ways[: total + 1 - value]
            # capped so the float counts stay exact up to the limit
            ways = np.minimum(updated, limit + 1.0)
        return int(ways[total])
    count = 0
    for _ in iter_lattice(cons):
        count += 1
        if count > limit:
            break
    return count


def exhaustive_oracle(objective, cons=None, limit=LATTICE_LIMIT):
    """
    Global optimum by enumeration; ties go to the lexicographically smallest allocation.

    :param objective: An :class:`~stratalloc.models.objective_builder.ObjectiveHandle`.
    :param cons: Constraint set; built from the design budget when omitted.
    :param limit: Largest lattice that may be enumerated.
    :return: :class:`~stratalloc.optimization.integer_solver.SolveReport` with ``bound_gap == 0``.
    :raises LatticeTooLargeError: If the feasible lattice has more than ``limit`` points.
    """
    cons = cons or ConstraintSet.from_design(objective.design)
    started = time.perf_counter()
    size = count_lattice(cons, limit)
    if size > limit:
        raise LatticeTooLargeError(f"the feasible lattice has more than {limit} points; enumeration refused.")
    best_n, best_value, visited = None, np.inf, 0
    for n in iter_lattice(cons):
        visited += 1
        value = objective.evaluate(n)
        if best_n is None or value < best_value:
            best_n, best_value = n, value
    logger.debug("Exhaustive oracle visited %d allocations", visited)
    return build_report(objective, cons, best_n, best_value, 0.0, visited, started, ["exhaustive"])
