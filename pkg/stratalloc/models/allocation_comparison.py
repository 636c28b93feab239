import logging

from stratalloc.core.strata import TotalSampleBudget
from stratalloc.models.neyman_allocation import neyman_allocation, variance_report
from stratalloc.models.objective_builder import ModelSpec, build_objective
from stratalloc.optimization.integer_solver import SolveOptions, solve_integer

logger = logging.getLogger(__name__)


class AllocationComparator:
    """
    Compare competing allocations of one survey design by the estimated
    variance of every characteristic, ranking lower variances first.
    """

    def __init__(self, design, options=None):
        """
        :param design: Survey design with a budget attached.
        :param options: :class:`~stratalloc.optimization.integer_solver.SolveOptions` for the model solves.
        """
        self.design = design
        self.options = options or SolveOptions()

    def default_specs(self, tau=None, k1=0.5, k2=0.5):
        """
        Models solved by a comparison run: deterministic trace, and, when the
        design carries fourth moments, modified E, E, V and (with ``tau``) P.

        :return: List of ``(name, ModelSpec)`` pairs.
        """
        specs = [("Deterministic", ModelSpec("deterministic", "trace"))]
        if not self.design.has_fourth_moments:
            logger.warning("Design has no fourth moments; stochastic models are left out of the comparison.")
            return specs
        specs.append((f"Modified E (k={k1:g})", ModelSpec("modified_E", "trace", k1=k1, k2=k2)))
        specs.append(("E-model", ModelSpec("E", "trace")))
        specs.append(("V-model", ModelSpec("V", "trace")))
        if tau is not None:
            specs.append((f"P-model (tau={tau:g})", ModelSpec("P", "trace", tau=tau)))
        return specs

    def candidate_allocations(self, specs):
        """
        Neyman allocations per characteristic (total-sample budgets only) followed by one solve per spec.

        :return: List of ``(name, Allocation, SolveReport or None)``.
        """
        candidates = []
        if isinstance(self.design.budget, TotalSampleBudget):
            for j, name in enumerate(self.design.characteristic_names):
                candidates.append((f"Neyman {name}", neyman_allocation(self.design, j), None))
        for name, spec in specs:
            report = solve_integer(build_objective(self.design, spec), options=self.options)
            candidates.append((name, report.allocation, report))
        return candidates

    def compare_allocations(self, candidates):
        """
        Rank candidate allocations per characteristic and overall.

        :param candidates: Output of :meth:`candidate_allocations`.
        :return: A tuple containing:
                 - best_name: Name of the allocation with the lowest average rank.
                 - best_allocation: That allocation.
                 - allocation_variances: ``{name: {characteristic: variance}}``.
                 - total_ranks: ``{name: {characteristic: rank, "average_rank": float}}``.
        """
        allocation_variances = {}
        characteristic_scores = {}
        total_ranks = {}

        for name, allocation, _ in candidates:
            variances = variance_report(self.design, allocation)
            allocation_variances[name] = dict(zip(self.design.characteristic_names, (float(v) for v in variances)))
            for characteristic, value in allocation_variances[name].items():
                characteristic_scores.setdefault(characteristic, []).append((name, value))

        # Lower variance ranks first; ties keep candidate order
        for characteristic, scores in characteristic_scores.items():
            for rank, (name, _) in enumerate(sorted(scores, key=lambda item: item[1]), start=1):
                total_ranks.setdefault(name, {})[characteristic] = rank

        for name, ranks in total_ranks.items():
            ranks["average_rank"] = sum(ranks.values()) / len(ranks)

        best_name = min(total_ranks, key=lambda name: total_ranks[name]["average_rank"])
        best_allocation = next(allocation for name, allocation, _ in candidates if name == best_name)
        return best_name, best_allocation, allocation_variances, total_ranks
