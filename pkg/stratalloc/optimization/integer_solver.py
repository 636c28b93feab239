"""
Integer allocation solver.

Separable objectives whose per-stratum terms are verified convex on the integer
range are solved by best-first branch-and-bound with exact relaxation bounds.
Everything else gets a multi-start heuristic: rounded relaxation optima plus
random lattice points, each polished by exchange local search; such reports
carry an infinite gap because no valid bound exists.
"""

import heapq
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from stratalloc.core.exceptions import InfeasibleProblemError, ValidationError
from stratalloc.core.strata import Allocation
from stratalloc.optimization.constraints import ConstraintSet
from stratalloc.optimization.continuous_solver import ContinuousOptions, solve_continuous, solve_separable
from stratalloc.processing.moment_formulas import variance_vector

logger = logging.getLogger(__name__)

BRANCH_AND_BOUND = "branch-and-bound"
RELAXATION_ROUNDING = "relaxation-rounding"
LOCAL_SEARCH = "local-search"


@dataclass(frozen=True)
class SolveOptions:
    """
    :param max_nodes: Branch-and-bound node budget.
    :param rel_tol: Relative margin above the incumbent within which nodes are still explored.
    :param restarts: Random start points for relaxations and the heuristic.
    :param seed: Seed for every random start.
    :param parallel_workers: Threads used for multi-start evaluation.
    """

    max_nodes: int = 100_000
    rel_tol: float = 1e-9
    restarts: int = 4
    seed: int = 0
    parallel_workers: int = 1

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValidationError(f"rel_tol must be positive, got {self.rel_tol}.")
        if self.max_nodes < 1 or self.restarts < 0 or self.parallel_workers < 1:
            raise ValidationError("max_nodes and parallel_workers must be >= 1 and restarts >= 0.")


@dataclass(frozen=True, eq=False)
class SolveReport:
    """
    Outcome of an integer solve.

    :param allocation: Best feasible allocation found.
    :param objective_value: Objective at ``allocation``.
    :param bound_gap: ``(incumbent - lower bound) / |incumbent|``; ``inf`` when no valid bound exists.
    :param nodes_explored: Branch-and-bound nodes (or lattice points for the exhaustive oracle).
    :param wall_time: Seconds spent.
    :param per_characteristic_variances: Estimated variance of each characteristic at ``allocation``.
    :param method_trace: Stages run, ending with the stage that produced the incumbent.
    :param slack: Unspent budget ``b - a'n``.
    """

    allocation: Allocation
    objective_value: float
    bound_gap: float
    nodes_explored: int
    wall_time: float
    per_characteristic_variances: np.ndarray
    method_trace: Tuple[str, ...] = field(default=())
    slack: float = 0.0

    @property
    def incumbent_source(self):
        return self.method_trace[-1] if self.method_trace else ""


def verify_separable_convexity(objective, cons):
    """
    Check that every term ``alpha_h / (n - shift)`` has non-negative second differences on ``lower_h..upper_h``.

    Returns False when the objective has no separable form.
    """
    terms = objective.separable
    if terms is None:
        return False
    if np.any(terms.alpha < 0) or np.any(cons.lower <= terms.shift):
        return False
    for h in range(cons.H):
        grid = np.arange(cons.lower[h], cons.upper[h] + 1.0)
        if grid.size < 3:
            continue
        values = terms.alpha[h] / (grid - terms.shift)
        second = values[2:] - 2.0 * values[1:-1] + values[:-2]
        if np.any(second < -1e-12 * np.abs(values[1:-1]).max()):
            return False
    midpoint = np.array(cons.round_to_lattice(cons.lower + 0.5 * (cons.upper - cons.lower)), dtype=float)
    reference = objective.evaluate(midpoint)
    return bool(np.isclose(terms.evaluate(midpoint), reference, rtol=1e-10, atol=1e-14 * max(1.0, abs(reference))))


def _better(value, n, best_value, best_n):
    if best_n is None or value < best_value:
        return True
    return value == best_value and tuple(n) < tuple(best_n)


def local_search(objective, cons, start, max_iterations=100_000):
    """
    Exchange local search with step halving.

    Moves are single-stratum changes of ``+-step`` and transfers of ``step``
    units between two strata; the best improving feasible move is taken
    (lexicographically smallest result on ties) until no move improves at
    step 1. At step 1 equal-value moves to a lexicographically smaller
    allocation are then taken as well, so tied optima settle on the smallest.

    :return: Tuple ``(allocation array, value, moved)``.
    """
    n = np.asarray(start, dtype=int).copy()
    initial_n = n.copy()
    value = objective.evaluate(n)
    span = int(np.max(cons.upper - cons.lower))
    step = 1
    while step * 2 <= max(span // 8, 1):
        step *= 2
    H = cons.H
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        candidates = []
        for i in range(H):
            for delta in (step, -step):
                move = n.copy()
                move[i] += delta
                candidates.append(move)
            for j in range(H):
                if i != j:
                    move = n.copy()
                    move[i] -= step
                    move[j] += step
                    candidates.append(move)
        improving_value, improving_n, tie_n = value, None, None
        for move in candidates:
            if not cons.is_feasible(move):
                continue
            candidate_value = objective.evaluate(move)
            if candidate_value < value:
                if _better(candidate_value, move, improving_value, improving_n):
                    improving_value, improving_n = candidate_value, move
            elif candidate_value == value and tuple(move) < tuple(n):
                if tie_n is None or tuple(move) < tuple(tie_n):
                    tie_n = move
        if improving_n is not None:
            n, value = improving_n, improving_value
        elif step > 1:
            step //= 2
        elif tie_n is not None:
            n = tie_n
        else:
            break
    return n, value, not np.array_equal(n, initial_n)


class _BranchAndBound:
    def __init__(self, objective, cons, options):
        self.objective = objective
        self.cons = cons
        self.options = options
        self.best_value = np.inf
        self.best_n = None
        self.source = RELAXATION_ROUNDING
        self.nodes = 0

    def offer(self, n, source):
        value = self.objective.evaluate(n)
        if _better(value, n, self.best_value, self.best_n):
            self.best_value, self.best_n, self.source = value, np.asarray(n, dtype=int), source

    def relax(self, lower, upper):
        try:
            node = self.cons.with_bounds(lower, upper)
        except InfeasibleProblemError:
            return None, None
        return node, solve_separable(self.objective.separable, node)

    def prune_level(self):
        # nodes tying the incumbent stay open
        return self.best_value + self.options.rel_tol * abs(self.best_value)

    def run(self):
        root, result = self.relax(self.cons.lower, self.cons.upper)
        self.offer(root.round_to_lattice(result.x), RELAXATION_ROUNDING)
        heap = [(result.value, 0, root.lower, root.upper, result.x)]
        counter = 1
        while heap:
            if self.nodes >= self.options.max_nodes:
                logger.warning("Branch-and-bound node budget of %d exhausted.", self.options.max_nodes)
                break
            bound, _, lower, upper, x = heapq.heappop(heap)
            self.nodes += 1
            if bound > self.prune_level():
                continue
            fractions = np.abs(x - np.round(x))
            if np.all(fractions <= 1e-9):
                n = np.round(x).astype(int)
                if self.cons.is_feasible(n):
                    self.offer(n, BRANCH_AND_BOUND)
                    continue
            node = self.cons.with_bounds(lower, upper)
            try:
                self.offer(node.round_to_lattice(x), BRANCH_AND_BOUND)
            except InfeasibleProblemError:
                pass
            distance = np.abs(x - np.floor(x) - 0.5)
            distance[fractions <= 1e-9] = np.inf
            if not np.isfinite(distance).any():
                continue
            j = int(np.argmin(distance))
            left_upper = upper.copy()
            left_upper[j] = np.floor(x[j])
            right_lower = lower.copy()
            right_lower[j] = np.ceil(x[j])
            for child_lower, child_upper in ((lower, left_upper), (right_lower, upper)):
                child, child_result = self.relax(child_lower, child_upper)
                if child is None or child_result.value > self.prune_level():
                    continue
                heapq.heappush(heap, (child_result.value, counter, child.lower, child.upper, child_result.x))
                counter += 1
        open_bounds = [entry[0] for entry in heap]
        lower_bound = min(open_bounds + [self.best_value])
        return lower_bound


def build_report(objective, cons, n, value, gap, nodes, started, trace):
    allocation = Allocation(tuple(int(v) for v in n))
    return SolveReport(
        allocation=allocation,
        objective_value=float(value),
        bound_gap=float(gap),
        nodes_explored=int(nodes),
        wall_time=time.perf_counter() - started,
        per_characteristic_variances=variance_vector(objective.design, allocation.as_array()),
        method_trace=tuple(trace),
        slack=cons.slack(n),
    )


def _gap(incumbent, bound):
    if not np.isfinite(bound):
        return np.inf
    return max(0.0, (incumbent - bound) / max(abs(incumbent), np.finfo(float).tiny))


def solve_integer(objective, cons=None, options=None):
    """
    Solve the integer allocation problem.

    :param objective: An :class:`~stratalloc.models.objective_builder.ObjectiveHandle`.
    :param cons: Constraint set; built from the design budget when omitted.
    :param options: :class:`SolveOptions`.
    :return: :class:`SolveReport`.
    :raises InfeasibleProblemError: If the feasible set is empty.
    """
    options = options or SolveOptions()
    cons = cons or ConstraintSet.from_design(objective.design)
    started = time.perf_counter()

    if cons.is_single_point():
        n = cons.lower.astype(int)
        return build_report(objective, cons, n, objective.evaluate(n), 0.0, 0, started, ["unique-feasible-point"])

    if verify_separable_convexity(objective, cons):
        search = _BranchAndBound(objective, cons, options)
        lower_bound = search.run()
        trace = [BRANCH_AND_BOUND]
        n, value, improved = local_search(objective, cons, search.best_n)
        source = LOCAL_SEARCH if improved else search.source
        if source != BRANCH_AND_BOUND:
            trace.append(source)
        logger.info("Branch-and-bound explored %d nodes; incumbent %.10g", search.nodes, value)
        return build_report(objective, cons, n, value, _gap(value, lower_bound), search.nodes, started, trace)

    return _solve_heuristic(objective, cons, options, started)


def _solve_heuristic(objective, cons, options, started):
    relaxation = solve_continuous(
        objective,
        cons,
        ContinuousOptions(restarts=options.restarts, seed=options.seed, workers=options.parallel_workers),
    )
    starts = []
    for x in (relaxation.x,) + tuple(relaxation.local_optima):
        try:
            starts.append((RELAXATION_ROUNDING, cons.round_to_lattice(x)))
        except InfeasibleProblemError:
            continue
    rng = np.random.default_rng(np.random.SeedSequence(options.seed).spawn(2)[1])
    for _ in range(options.restarts):
        try:
            starts.append(("random-start", cons.round_to_lattice(cons.random_point(rng))))
        except InfeasibleProblemError:
            continue
    if not starts:
        raise InfeasibleProblemError("no feasible lattice start point could be constructed.")

    def polish(start):
        source, n = start
        polished, value, improved = local_search(objective, cons, n)
        return polished, value, LOCAL_SEARCH if improved else source

    if options.parallel_workers > 1:
        with ThreadPoolExecutor(max_workers=options.parallel_workers) as pool:
            results = list(pool.map(polish, starts))
    else:
        results = [polish(start) for start in starts]

    best_n, best_value, best_source = None, np.inf, ""
    for n, value, source in results:
        if _better(value, n, best_value, best_n):
            best_n, best_value, best_source = n, value, source
    trace = [f"heuristic ({len(starts)} starts, no bound)", best_source]
    logger.info("Heuristic solve over %d starts; incumbent %.10g from %s", len(starts), best_value, best_source)
    return build_report(objective, cons, best_n, best_value, np.inf, 0, started, trace)
