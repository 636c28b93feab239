import logging

import numpy as np

from stratalloc.core.data_loader import DesignLoader, export_summary
from stratalloc.core.exceptions import ValidationError
from stratalloc.core.strata import CostBudget, TotalSampleBudget
from stratalloc.models.allocation_comparison import AllocationComparator
from stratalloc.models.objective_builder import ModelSpec, build_objective
from stratalloc.optimization.integer_solver import SolveOptions, solve_integer
from stratalloc.reporting.report_generator import ReportGenerator
from stratalloc.simulation.hajek import hajek_condition_report, parse_lambda
from stratalloc.simulation.moment_verification import SimConfig, verify_lemma1_moments, verify_mean_clt
from stratalloc.simulation.population import synthesize_design, synthesize_stratum

logger = logging.getLogger(__name__)

SIMULATIONS = ("lemma1", "mean-clt", "hajek")
SYNTHESIZED = "synthesized"
DEFAULT_COVARIANCE = np.array([[4.0, 1.5], [1.5, 2.0]])
POPULATION_STREAM = 1


def describe_budget(budget):
    if isinstance(budget, TotalSampleBudget):
        return f"total_n = {budget.total_n}"
    if isinstance(budget, CostBudget):
        costs = ", ".join(f"{c:g}" for c in budget.costs)
        return f"costs ({costs}), c0 = {budget.c0:g}, C = {budget.C:g}"
    return "none"


class AllocationPipeline:
    """
    Main user-facing class of the library. Runs a solve or a comparison from
    data loading to report generation.
    """

    def __init__(self, config):
        """
        Initializes the pipeline.

        :param config: A :class:`~stratalloc.core.run_config.RunConfig`; validated here.
        """
        self.config = config.validate()
        self.design = None

    def model_spec(self):
        c = self.config
        return ModelSpec(
            model=c.model,
            value_fn=c.value_fn,
            k1=c.k1,
            k2=c.k2,
            tau=c.tau,
            characteristics=c.characteristics,
            det_basis=c.det_basis,
        )

    def solve_options(self):
        c = self.config
        return SolveOptions(max_nodes=c.max_nodes, restarts=c.restarts, seed=c.seed, parallel_workers=c.resolved_workers)

    def load_design(self, needs_fourth_moments=False):
        """
        Load the dataset, attach the budget and, when asked for, synthesize missing fourth moments.

        :raises ValidationError: If no budget is available or stochastic inputs are missing without synthesis options.
        """
        design = DesignLoader(self.config.data, self.config.mode).load_design()
        budget = self.config.budget_object() or design.budget
        if budget is None:
            raise ValidationError("a budget is required: give --total-n or --costs with --c0 and --budget.")
        design = design.with_budget(budget)
        if needs_fourth_moments and not design.has_fourth_moments:
            if self.config.distribution is None:
                raise ValidationError(
                    "stochastic models need fourth moments; the dataset has none, so pass --distribution "
                    "to synthesize them."
                )
            design = synthesize_design(design, self.config.distribution, self.config.seed)
        self.design = design
        logger.info("Loaded design with H=%d strata, G=%d characteristics, N=%d", design.H, design.G, design.N)
        return design

    def metadata(self):
        design = self.design
        return {
            "seed": self.config.seed,
            "dataset": f"{self.config.data} (H={design.H}, G={design.G}, N={design.N})",
            "budget": describe_budget(design.budget),
            "config": self.config.to_dict(),
        }

    def solve(self):
        """
        Solve the configured model and render its report.

        :return: Tuple ``(report_text, SolveReport)``.
        """
        spec = self.model_spec()
        self.load_design(spec.needs_fourth_moments)
        objective = build_objective(self.design, spec)
        result = solve_integer(objective, options=self.solve_options())
        logger.info("Solved %s in %.3f s", spec.label, result.wall_time)
        generator = ReportGenerator(self.config.format)
        report = generator.generate_solve_report(self.design, spec.label, result, self.metadata())
        self._save(generator, report, "solve")
        return report, result

    def compare(self):
        """
        Solve every Table-2 model for the design and rank the allocations.

        :return: Tuple ``(report_text, best_name)``.
        """
        self.load_design(needs_fourth_moments=self.config.distribution is not None)
        comparator = AllocationComparator(self.design, self.solve_options())
        k1 = 0.5 if self.config.k1 is None else self.config.k1
        k2 = 0.5 if self.config.k2 is None else self.config.k2
        candidates = comparator.candidate_allocations(comparator.default_specs(self.config.tau, k1, k2))
        best_name, _, allocation_variances, total_ranks = comparator.compare_allocations(candidates)
        allocations = {name: allocation for name, allocation, _ in candidates}
        generator = ReportGenerator(self.config.format)
        report = generator.generate_compare_report(allocation_variances, best_name, total_ranks, allocations, self.metadata())
        self._save(generator, report, "compare")
        return report, best_name

    def synthesize(self, output_path):
        """Write the design with synthesized fourth moments as a JSON design document."""
        design = DesignLoader(self.config.data, self.config.mode).load_design()
        budget = self.config.budget_object()
        if budget is not None:
            design = design.with_budget(budget)
        design = synthesize_design(design, self.config.distribution or "gaussian", self.config.seed)
        return export_summary(design, output_path)

    def _save(self, generator, report, kind):
        if self.config.report:
            generator.save_report(report, self.config.report)
        logger.debug("%s report rendered (%d characters)", kind, len(report))


def simulation_population(data=None, N=2000, distribution="gaussian", seed=0, stratum=1, mode=None):
    """
    Population for a Monte Carlo run: synthesized from the covariance of one
    stratum of ``data``, or from a fixed 2x2 covariance when ``data`` is None
    or ``"synthesized"``.

    The population draws from a stream independent of the replication streams of ``seed``.
    """
    if data is None or data == SYNTHESIZED:
        covariance = DEFAULT_COVARIANCE
    else:
        design = DesignLoader(data, mode).load_design()
        if not 1 <= stratum <= design.H:
            raise ValidationError(f"stratum must lie in 1..{design.H}, got {stratum}.")
        covariance = design.strata[stratum - 1].covariance
    rng = np.random.default_rng(np.random.SeedSequence([seed, POPULATION_STREAM]))
    return synthesize_stratum(covariance, N, distribution, rng)


def run_simulation(kind, population, n, reps=10_000, seed=0, workers=1, lam="canonical:1", epsilon=1e-3, report_format="text", timestamp=True):
    """
    Run one Monte Carlo verification and render its report.

    :param kind: ``"lemma1"``, ``"mean-clt"`` or ``"hajek"``.
    :return: Tuple ``(report_text, result)``.
    """
    if kind not in SIMULATIONS:
        raise ValidationError(f"unknown simulation '{kind}'; expected one of {SIMULATIONS}.")
    population = np.atleast_2d(np.asarray(population, dtype=float))
    N, G = population.shape
    if n == N:
        logger.warning("n equals N: every replication is a census of the stratum.")
    generator = ReportGenerator(report_format, timestamp=timestamp)
    metadata = {"seed": seed, "dataset": f"synthesized stratum (N={N}, G={G})"}
    if kind == "hajek":
        vector = parse_lambda(lam, G * (G + 1) // 2, np.random.default_rng(seed))
        result = hajek_condition_report(population, n, vector, epsilon)
        return generator.generate_hajek_report(result, metadata=metadata), result
    cfg = SimConfig(population=population, n=n, reps=reps, seed=seed, workers=workers)
    result = verify_lemma1_moments(cfg) if kind == "lemma1" else verify_mean_clt(cfg)
    return generator.generate_moment_report(result, metadata), result
