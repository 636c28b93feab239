"""
Continuous relaxation of the allocation problem.

Separable objectives ``sum_h alpha_h / (x_h - shift) + offset`` are solved
exactly: the stationarity condition gives ``x_h = clip(shift + c_h u, lower_h,
upper_h)`` with ``c_h = sqrt(alpha_h / a_h)``, which is piecewise linear and
non-decreasing in the scalar ``u``, so the budget row is met by a breakpoint
search. Every other objective is minimized by SLSQP from several start points.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from stratalloc.core.exceptions import InfeasibleProblemError, SolverError
from stratalloc.optimization.constraints import EQUALITY

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContinuousOptions:
    """
    :param restarts: Number of random start points in addition to the central start.
    :param seed: Seed of the start-point generator.
    :param workers: Threads evaluating start points concurrently.
    :param max_iterations: SLSQP iteration cap per start.
    """

    restarts: int = 4
    seed: int = 0
    workers: int = 1
    max_iterations: int = 500


@dataclass(frozen=True, eq=False)
class ContinuousResult:
    """Best point of a relaxation, with its objective value and every start's local optimum."""

    x: np.ndarray
    value: float
    method: str
    local_optima: tuple = ()
    exact: bool = False


def solve_separable(terms, cons):
    """
    Exact minimizer of a separable convex objective over the relaxed feasible set.

    :param terms: :class:`~stratalloc.models.objective_builder.SeparableTerms`.
    :param cons: :class:`~stratalloc.optimization.constraints.ConstraintSet`.
    :return: A :class:`ContinuousResult` with ``exact=True``.
    """
    a, lo, hi = cons.a, cons.lower, cons.upper
    if np.any(lo <= terms.shift):
        raise InfeasibleProblemError("lower bounds must exceed the objective's pole.")
    target = cons.project_relaxation_target()
    c = np.sqrt(terms.alpha / a)
    active = c > 0

    x = lo.astype(float).copy()
    if active.any():
        u_low = np.where(active, (lo - terms.shift) / np.where(active, c, 1.0), 0.0)
        u_high = np.where(active, (hi - terms.shift) / np.where(active, c, 1.0), 0.0)
        breakpoints = np.unique(np.concatenate([u_low[active], u_high[active]]))

        def spend(u):
            values = np.where(active, np.clip(terms.shift + c * u, lo, hi), lo)
            return float(a @ values), values

        u_star = breakpoints[-1]
        previous_u, previous_cost = None, None
        for u in breakpoints:
            cost, _ = spend(u)
            if cost >= target:
                if previous_u is None or cost == previous_cost:
                    u_star = u
                else:
                    u_star = previous_u + (target - previous_cost) * (u - previous_u) / (cost - previous_cost)
                break
            previous_u, previous_cost = u, cost
        _, x = spend(u_star)

    # strata with alpha_h == 0 absorb any budget the others cannot use
    shortfall = target - float(a @ x)
    for h in np.flatnonzero(~active):
        if shortfall <= cons.tolerance:
            break
        extra = min(hi[h] - x[h], shortfall / a[h])
        x[h] += extra
        shortfall -= extra * a[h]
    return ContinuousResult(x=x, value=terms.evaluate(x), method="lagrangian", local_optima=(x,), exact=True)


def _central_start(cons):
    # proportional share of each stratum's range at the budget level
    span = cons.upper - cons.lower
    spendable = cons.project_relaxation_target() - float(cons.a @ cons.lower)
    total = float(cons.a @ span)
    fraction = 0.0 if total == 0 else min(max(spendable / total, 0.0), 1.0)
    return cons.lower + fraction * span


def _slsqp(objective, cons, x0, options):
    lo, hi = cons.lower, cons.upper
    function = objective.function
    scale = abs(function(np.clip(x0, lo, hi)))
    scale = scale if np.isfinite(scale) and scale > 0 else 1.0

    def f(x):
        value = function(np.clip(x, lo, hi))
        return value / scale if np.isfinite(value) else np.finfo(float).max / 1e10

    if objective.gradient_function is not None:

        def jac(x):
            return np.asarray(objective.gradient_function(np.clip(x, lo, hi)), dtype=float) / scale

    else:
        jac = "3-point"

    if cons.relaxation_relation == EQUALITY:
        constraint = {"type": "eq", "fun": lambda x: cons.a @ x - cons.b, "jac": lambda x: cons.a}
    else:
        constraint = {"type": "ineq", "fun": lambda x: cons.b - cons.a @ x, "jac": lambda x: -cons.a}
    result = optimize.minimize(
        f,
        x0,
        jac=jac,
        method="SLSQP",
        bounds=optimize.Bounds(lo, hi),
        constraints=[constraint],
        options={"maxiter": options.max_iterations, "ftol": 1e-12},
    )
    x = np.clip(result.x, lo, hi)
    return x, float(function(x))


def solve_continuous(objective, cons, options=None):
    """
    Minimize the continuous relaxation of ``objective`` over ``cons``.

    :param objective: An :class:`~stratalloc.models.objective_builder.ObjectiveHandle`.
    :param cons: The constraint set.
    :param options: :class:`ContinuousOptions`.
    :return: :class:`ContinuousResult`; exact for separable objectives, best local optimum otherwise.
    :raises SolverError: If no start point produced a finite objective value.
    """
    options = options or ContinuousOptions()
    if objective.separable is not None:
        return solve_separable(objective.separable, cons)

    rng = np.random.default_rng(options.seed)
    starts = [_central_start(cons)] + [cons.random_point(rng) for _ in range(options.restarts)]
    if options.workers > 1:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            results = list(pool.map(lambda x0: _slsqp(objective, cons, x0, options), starts))
    else:
        results = [_slsqp(objective, cons, x0, options) for x0 in starts]

    best: Optional[int] = None
    for index, (_, value) in enumerate(results):
        if np.isfinite(value) and (best is None or value < results[best][1]):
            best = index
    if best is None:
        raise SolverError("no start point produced a finite objective value.")
    logger.debug("SLSQP multistart: %d starts, best value %.6g from start %d", len(starts), results[best][1], best)
    return ContinuousResult(
        x=results[best][0],
        value=results[best][1],
        method="slsqp-multistart",
        local_optima=tuple(x for x, _ in results),
    )
