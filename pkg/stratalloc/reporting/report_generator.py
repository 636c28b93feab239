import json
import logging
import os
from datetime import datetime, timezone

import numpy as np
import scipy

import stratalloc
from stratalloc.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("text", "json")
RULE = "=" * 60


def _format_value(value):
    value = float(value)
    if not np.isfinite(value):
        return str(value)
    if value != 0 and (abs(value) >= 10000 or abs(value) < 0.001):
        return f"{value:.3e}"
    return f"{value:.4f}"


def _json_value(value):
    if isinstance(value, dict):
        return {str(key): _json_value(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_json_value(item) for item in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


def strip_timestamp(report):
    """Drop the timestamp line of a text or JSON report."""
    kept = [
        line
        for line in report.splitlines()
        if not line.startswith("Generated: ") and not line.lstrip().startswith('"generated": ')
    ]
    return "\n".join(kept)


class ReportGenerator:
    """
    A class to render allocation, comparison, simulation and verification reports.

    Reports are deterministic given their inputs; the only varying content is
    the ``Generated`` timestamp, which always sits on a line of its own.
    """

    def __init__(self, report_format="text", timestamp=True):
        """
        :param report_format: ``"text"`` (Table-style) or ``"json"``.
        :param timestamp: Include the generation timestamp line.
        """
        if report_format not in REPORT_FORMATS:
            raise ValidationError(f"report format must be one of {REPORT_FORMATS}, got '{report_format}'.")
        self.report_format = report_format
        self.timestamp = timestamp

    def _metadata(self, metadata):
        document = {}
        if self.timestamp:
            document["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        document["versions"] = {"stratalloc": stratalloc.__version__, "numpy": np.__version__, "scipy": scipy.__version__}
        document.update(metadata or {})
        return document

    def _header(self, title, metadata):
        meta = self._metadata(metadata)
        lines = [title, RULE]
        if "generated" in meta:
            lines.append(f"Generated: {meta['generated']}")
        if "seed" in meta:
            lines.append(f"Seed: {meta['seed']}")
        versions = ", ".join(f"{name} {version}" for name, version in meta["versions"].items())
        lines.append(f"Versions: {versions}")
        for key in ("dataset", "budget"):
            if key in meta:
                lines.append(f"{key.capitalize()}: {meta[key]}")
        if "config" in meta:
            lines.append(f"Config: {json.dumps(_json_value(meta['config']), sort_keys=True)}")
        return lines

    def _render(self, document, lines):
        if self.report_format == "json":
            return json.dumps(_json_value(document), indent=2)
        return "\n".join(lines)

    def generate_solve_report(self, design, label, solve_report, metadata=None):
        """
        Allocation table in the layout of a Table-2 row with the solver diagnostics.

        :param design: The solved survey design.
        :param label: Model label, e.g. ``"E / trace"``.
        :param solve_report: :class:`~stratalloc.optimization.integer_solver.SolveReport`.
        :param metadata: Run metadata (seed, dataset, budget, config echo).
        :return: The report string.
        """
        allocation = solve_report.allocation.as_array()
        variances = dict(zip(design.characteristic_names, solve_report.per_characteristic_variances))
        document = dict(self._metadata(metadata))
        document.update(
            {
                "report": "solve",
                "model": label,
                "allocation": [
                    {"stratum": stratum.stratum_id, "N_h": stratum.population_size, "n_h": int(n)}
                    for stratum, n in zip(design.strata, allocation)
                ],
                "total": int(allocation.sum()),
                "objective_value": solve_report.objective_value,
                "variances": variances,
                "solver": {
                    "method_trace": list(solve_report.method_trace),
                    "bound_gap": solve_report.bound_gap,
                    "nodes_explored": solve_report.nodes_explored,
                    "slack": solve_report.slack,
                },
            }
        )

        lines = self._header(f"Optimum Allocation Report ({label})", metadata)
        lines.append("\nAllocation:")
        header = "{:<15}{:>12}{:>10}".format("Stratum", "N_h", "n_h")
        lines.append(header)
        lines.append("-" * len(header))
        for stratum, n in zip(design.strata, allocation):
            lines.append("{:<15}{:>12}{:>10}".format(str(stratum.stratum_id), stratum.population_size, int(n)))
        lines.append("-" * len(header))
        lines.append("{:<15}{:>12}{:>10}".format("Total", design.N, int(allocation.sum())))
        lines.append(f"\nObjective value: {_format_value(solve_report.objective_value)}")
        lines.append("\nEstimated variances:")
        for name, value in variances.items():
            lines.append(f"  {name:<12}{_format_value(value)}")
        lines.append("\nSolver diagnostics:")
        lines.append(f"  Method trace:   {' -> '.join(solve_report.method_trace)}")
        lines.append(f"  Bound gap:      {_format_value(solve_report.bound_gap)}")
        lines.append(f"  Nodes explored: {solve_report.nodes_explored}")
        lines.append(f"  Budget slack:   {_format_value(solve_report.slack)}")
        return self._render(document, lines)

    def generate_compare_report(self, allocation_variances, best_name, rankings, allocations, metadata=None):
        """
        Generates a Table-2 style comparison: allocations, per-characteristic
        variances with ranks, and the overall ranking.

        :param allocation_variances: ``{name: {characteristic: variance}}``.
        :param best_name: Name of the allocation with the best average rank.
        :param rankings: Ranks per characteristic plus ``average_rank``.
        :param allocations: ``{name: Allocation}``.
        :return: A formatted report string.
        """
        characteristics = list(next(iter(allocation_variances.values())).keys())
        document = dict(self._metadata(metadata))
        document.update(
            {
                "report": "compare",
                "allocations": {name: list(allocation) for name, allocation in allocations.items()},
                "variances": allocation_variances,
                "rankings": rankings,
                "best": best_name,
            }
        )

        lines = self._header("Allocation Comparison Report", metadata)
        lines.append("\nSample sizes:")
        for name, allocation in allocations.items():
            lines.append("{:<28}".format(name) + " ".join(f"{int(n):>6}" for n in allocation))

        lines.append("\nSummary Table (estimated variances at a glance):")
        header_line = "{:<28}".format("Allocation") + "".join(f"{name:<15}" for name in characteristics + ["Average Rank"])
        lines.append(header_line)
        lines.append("-" * len(header_line))
        for name, variances in allocation_variances.items():
            row = "{:<28}".format(name)
            row += "".join(f"{_format_value(variances[key]):<15}" for key in characteristics)
            row += f"{rankings[name]['average_rank']:<15.2f}"
            lines.append(row)

        for characteristic in characteristics:
            lines.append(f"\nCharacteristic: {characteristic} (lower variance is better)")
            header = "{:<28} {:<15} {:<5}".format("Allocation", "Variance", "Rank")
            lines.append(header)
            lines.append("-" * len(header))
            for name, variances in allocation_variances.items():
                lines.append(
                    "{:<28} {:<15} {:<5}".format(name, _format_value(variances[characteristic]), rankings[name][characteristic])
                )

        lines.append("\nOverall Rankings")
        lines.append(RULE)
        for name in rankings:
            marker = " *Best*" if name == best_name else ""
            lines.append("{:<28} {:<15.2f}{}".format(name, rankings[name]["average_rank"], marker))
        lines.append(RULE)
        lines.append(f"Best allocation: {best_name}")
        return self._render(document, lines)

    def generate_moment_report(self, moment_report, metadata=None):
        """
        Empirical against theoretical moments from a Monte Carlo run.

        :param moment_report: :class:`~stratalloc.simulation.moment_verification.MomentReport`.
        """
        r = moment_report
        rows, cols = np.triu_indices(r.empirical_cov.shape[0])
        document = dict(self._metadata(metadata))
        document.update(
            {
                "report": "simulate",
                "statistic": r.statistic,
                "seed": r.seed,
                "N": r.N,
                "n": r.n,
                "reps": r.reps,
                "empirical_mean": r.empirical_mean,
                "theoretical_mean": r.theoretical_mean,
                "mean_z": r.mean_z,
                "empirical_cov": r.empirical_cov,
                "theoretical_cov": r.theoretical_cov,
                "cov_z": r.cov_z,
                "skewness": r.skewness,
                "skewness_se": r.skewness_se,
                "excess_kurtosis": r.excess_kurtosis,
                "kurtosis_se": r.kurtosis_se,
                "alternative_max_z": r.alternative_max_z,
                "matched": r.matched,
                "identity_residual": r.identity_residual,
                "mean_within_limit": r.mean_within_limit,
                "cov_within_limit": r.cov_within_limit,
            }
        )

        meta = dict(metadata or {})
        meta.setdefault("seed", r.seed)
        lines = self._header(f"Monte Carlo Moment Report ({r.statistic})", meta)
        lines.append(f"N = {r.N}, n = {r.n}, replications = {r.reps}")
        lines.append("\nMean components:")
        header = "{:<10}{:>16}{:>16}{:>10}{:>12}{:>14}".format("Component", "Empirical", "Theoretical", "z", "Skewness", "Ex. kurtosis")
        lines.append(header)
        lines.append("-" * len(header))
        for alpha in range(r.empirical_mean.size):
            lines.append(
                "{:<10}{:>16}{:>16}{:>10.3f}{:>12.3f}{:>14.3f}".format(
                    alpha + 1,
                    _format_value(r.empirical_mean[alpha]),
                    _format_value(r.theoretical_mean[alpha]),
                    r.mean_z[alpha],
                    r.skewness[alpha],
                    r.excess_kurtosis[alpha],
                )
            )
        lines.append(f"Standard errors: skewness {r.skewness_se:.4f}, excess kurtosis {r.kurtosis_se:.4f}")
        lines.append("\nCovariance entries:")
        header = "{:<10}{:>16}{:>16}{:>10}".format("Entry", "Empirical", "Theoretical", "z")
        lines.append(header)
        lines.append("-" * len(header))
        for i, j in zip(rows, cols):
            lines.append(
                "{:<10}{:>16}{:>16}{:>10.3f}".format(
                    f"({i + 1},{j + 1})",
                    _format_value(r.empirical_cov[i, j]),
                    _format_value(r.theoretical_cov[i, j]),
                    r.cov_z[i, j],
                )
            )
        lines.append(f"\nMean within limit: {'yes' if r.mean_within_limit else 'no'}")
        lines.append(f"Covariance within limit: {'yes' if r.cov_within_limit else 'no'}")
        for name, value in r.alternative_max_z.items():
            lines.append(f"Alternative '{name}': max |z| = {value:.3f}")
        if r.matched is not None:
            lines.append(f"Matched covariance: {r.matched}")
        if r.identity_residual is not None:
            lines.append(f"Decomposition identity residual: {r.identity_residual:.3e}")
        return self._render(document, lines)

    def generate_hajek_report(self, hajek_report, characteristic_names=(), metadata=None):
        """Hajek-condition ratio and the per-characteristic subset ratios."""
        r = hajek_report
        names = list(characteristic_names) or [f"y{j + 1}" for j in range(r.hcas_ratio.size)]
        document = dict(self._metadata(metadata))
        document.update(
            {
                "report": "hajek",
                "N": r.N,
                "n": r.n,
                "epsilon": r.epsilon,
                "lambda": r.lam,
                "lhs": r.lhs,
                "rhs": r.rhs,
                "ratio": r.ratio,
                "satisfied": r.satisfied,
                "degenerate": r.degenerate,
                "hcas_ratio": dict(zip(names, r.hcas_ratio)),
                "hcas1_ratio": dict(zip(names, r.hcas1_ratio)),
            }
        )
        lines = self._header("Hajek Condition Report", metadata)
        lines.append(f"N = {r.N}, n = {r.n}, epsilon = {r.epsilon:g}")
        lines.append(f"lambda = [{', '.join(f'{value:.6g}' for value in r.lam)}]")
        lines.append(f"\nlambda' K lambda:            {_format_value(r.lhs)}")
        lines.append(f"max lambda_a^2 K_aa:         {_format_value(r.rhs)}")
        lines.append(f"Ratio:                       {_format_value(r.ratio)}")
        lines.append(f"Condition satisfied:         {'yes' if r.satisfied else 'no'}")
        if r.degenerate:
            lines.append("Kernel is degenerate (K = 0).")
        lines.append("\nLargest-n share per characteristic:")
        header = "{:<15}{:>16}{:>16}".format("Characteristic", "squared dev.", "deviation")
        lines.append(header)
        lines.append("-" * len(header))
        for name, hcas, hcas1 in zip(names, r.hcas_ratio, r.hcas1_ratio):
            lines.append("{:<15}{:>16}{:>16}".format(name, _format_value(hcas), _format_value(hcas1)))
        return self._render(document, lines)

    def generate_verify_report(self, results, metadata=None):
        """
        Pass/fail summary of acceptance criteria.

        :param results: Sequence of :class:`~stratalloc.acceptance.acceptance_suite.CriterionResult`.
        """
        passed = sum(1 for result in results if result.passed)
        document = dict(self._metadata(metadata))
        document.update(
            {
                "report": "verify",
                "criteria": [
                    {"number": r.number, "group": r.group, "name": r.name, "passed": r.passed, "detail": r.detail, "values": r.values}
                    for r in results
                ],
                "passed": passed,
                "total": len(results),
            }
        )
        lines = self._header("Acceptance Verification Report", metadata)
        for r in results:
            lines.append(f"[{'PASS' if r.passed else 'FAIL'}] {r.number:>2}. {r.name} ({r.group})")
            if r.detail:
                lines.append(f"       {r.detail}")
        lines.append(RULE)
        lines.append(f"{passed} of {len(results)} criteria passed")
        return self._render(document, lines)

    def save_report(self, report, file_path="report_output/allocation_report.txt"):
        """
        Saves the generated report to a file, creating its directory when needed.

        :param report: The report string to be saved.
        :param file_path: Destination path.
        :return: The path written.
        """
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as file:
            file.write(report)
            file.write("\n")
        logger.info("Report saved at %s", file_path)
        return file_path
