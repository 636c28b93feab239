"""
Bundled acceptance criteria run by ``stratalloc verify``.

Every criterion is a function returning ``(passed, detail, values)``;
exceptions raised inside a criterion mark it as failed instead of aborting
the run.
"""

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict

import numpy as np

from stratalloc.core import matrix_kit
from stratalloc.core.data_loader import DesignLoader
from stratalloc.core.exceptions import ValidationError
from stratalloc.core.run_config import RunConfig
from stratalloc.core.strata import StratumSummary, SurveyDesign, TotalSampleBudget
from stratalloc.models.neyman_allocation import neyman_allocation, variance_report
from stratalloc.models.objective_builder import ModelSpec, build_objective
from stratalloc.optimization.exhaustive_oracle import exhaustive_oracle
from stratalloc.optimization.integer_solver import solve_integer
from stratalloc.processing import determinant_model, moment_formulas
from stratalloc.reporting.report_generator import strip_timestamp
from stratalloc.simulation.moment_verification import SimConfig, verify_lemma1_moments
from stratalloc.simulation.population import synthesize_design, synthesize_stratum

logger = logging.getLogger(__name__)

TABLE1 = "table1"
TOY = "toy_h2"
TABLE2_BA = (10, 94, 144, 136, 191, 113, 81, 109, 122)
TABLE2_VOL = (7, 62, 119, 136, 200, 161, 98, 134, 83)
TABLE2_BA_VARIANCES = (5.591, 5441.105)
TABLE2_VOL_VARIANCES = (5.953, 5139.531)


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    group: str
    passed: bool
    detail: str = ""
    values: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0


def random_design(rng, sizes, G=2, rows=8):
    """
    Design whose strata carry the population moments of small random data sets,
    so that every fourth-moment input is internally consistent.

    :param rng: A ``numpy.random.Generator``.
    :param sizes: Stratum sizes ``N_h``.
    """
    strata = []
    for h, size in enumerate(sizes):
        mixing = rng.standard_normal((G, G))
        data = rng.standard_normal((rows, G)) @ mixing + rng.exponential(1.0, (rows, G))
        strata.append(
            StratumSummary(
                stratum_id=f"S{h + 1}",
                population_size=int(size),
                covariance=moment_formulas.population_covariance(data),
                m4_vech=moment_formulas.fourth_moment_vech(data),
                m4_vec=moment_formulas.fourth_moment_vec(data),
            )
        )
    return SurveyDesign(tuple(strata))


def _relative_error(value, reference):
    value, reference = np.asarray(value, dtype=float), np.asarray(reference, dtype=float)
    return float(np.max(np.abs(value - reference)) / max(np.max(np.abs(reference)), np.finfo(float).tiny))


def neyman_rows():
    design = DesignLoader(TABLE1).load_design()
    design = design.with_budget(TotalSampleBudget(1000))
    ba = np.array(neyman_allocation(design, 0).sizes)
    vol = np.array(neyman_allocation(design, 1).sizes)
    row_error = int(max(np.abs(ba - TABLE2_BA).max(), np.abs(vol - TABLE2_VOL).max()))
    ba_var = variance_report(design, np.array(TABLE2_BA, dtype=float))
    vol_var = variance_report(design, np.array(TABLE2_VOL, dtype=float))
    variance_error = max(
        np.max(np.abs(ba_var - TABLE2_BA_VARIANCES) / TABLE2_BA_VARIANCES),
        np.max(np.abs(vol_var - TABLE2_VOL_VARIANCES) / TABLE2_VOL_VARIANCES),
    )
    passed = design.N == 559605 and row_error <= 1 and variance_error <= 0.005
    detail = f"max row deviation {row_error} unit(s), max variance deviation {100 * variance_error:.3f}%"
    return passed, detail, {"row_deviation": row_error, "variance_deviation": float(variance_error)}


def stochastic_rows(seed=0):
    design = DesignLoader(TABLE1).load_design()
    design = synthesize_design(design.with_budget(TotalSampleBudget(1000)), "gaussian", seed)

    def solve(spec):
        return solve_integer(build_objective(design, spec)).allocation

    e_model = solve(ModelSpec("E", "trace"))
    same_e = solve(ModelSpec("modified_E", "trace", k1=1.0, k2=0.0)) == e_model
    same_v = solve(ModelSpec("modified_E", "trace", k1=0.0, k2=1.0)) == solve(ModelSpec("V", "trace"))
    e_value = moment_formulas.trace_expectation(design, e_model.as_array())
    neyman_values = [
        moment_formulas.trace_expectation(design, neyman_allocation(design, j).as_array()) for j in range(design.G)
    ]
    dominates = all(e_value <= value for value in neyman_values)
    detail = (
        f"modified E (1,0) == E: {same_e}; modified E (0,1) == V: {same_v}; "
        f"E-model expected trace {e_value:.6g} vs Neyman {', '.join(f'{v:.6g}' for v in neyman_values)}"
    )
    return same_e and same_v and dominates, detail, {"e_expected_trace": e_value}


def matrix_identities(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for G in (1, 2, 3, 4):
        dup = matrix_kit.duplication(G)
        for _ in range(200):
            A = rng.standard_normal((G, G))
            B = A + A.T
            worst = max(worst, _relative_error(dup.D @ matrix_kit.vech(B), matrix_kit.vec(B)))
            worst = max(worst, _relative_error(dup.Dpinv @ matrix_kit.vec(B), matrix_kit.vech(B)))
    commutation_ok = True
    for _ in range(100):
        m, n = rng.integers(1, 6, size=2)
        C = rng.standard_normal((m, n))
        commutation_ok &= bool(np.array_equal(matrix_kit.commutation(m, n) @ matrix_kit.vec(C), matrix_kit.vec(C.T)))
    return worst <= 1e-12 and commutation_ok, f"max relative error {worst:.2e}; commutation exact: {commutation_ok}", {
        "max_relative_error": worst
    }


def brute_force_cov_vech_cov(design, n):
    """Scalar double sum over strata and vech positions."""
    N, k = design.N, design.k
    result = np.zeros((k, k))
    for h, stratum in enumerate(design.strata):
        W = stratum.population_size / N
        a = W * W / n[h] - W / N
        v = matrix_kit.vech(stratum.covariance)
        for alpha in range(k):
            for beta in range(k):
                kernel = stratum.m4_vech[alpha, beta] - v[alpha] * v[beta]
                result[alpha, beta] += a * a * n[h] / (n[h] - 1.0) ** 2 * kernel
    return result


def brute_force_trace_variance(design, n):
    N, G = design.N, design.G
    total = 0.0
    for j in range(G):
        position = matrix_kit.vech_position(j, j, G)
        for h, stratum in enumerate(design.strata):
            W = stratum.population_size / N
            a = W * W / n[h] - W / N
            kernel = stratum.m4_vech[position, position] - stratum.covariance[j, j] ** 2
            total += a * a * n[h] / (n[h] - 1.0) ** 2 * kernel
    return total


def moment_oracle(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        H = int(rng.integers(1, 4))
        sizes = rng.integers(10, 200, size=H)
        design = random_design(rng, sizes)
        n = np.array([rng.integers(2, size + 1) for size in sizes], dtype=float)
        worst = max(worst, _relative_error(moment_formulas.cov_vech_cov(design, n), brute_force_cov_vech_cov(design, n)))
        worst = max(
            worst, _relative_error(moment_formulas.trace_variance(design, n), brute_force_trace_variance(design, n))
        )
    return worst <= 1e-12, f"max relative error {worst:.2e} over 50 designs", {"max_relative_error": worst}


@lru_cache(maxsize=4)
def lemma1_run(seed=0, reps=10_000, workers=1):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    population = synthesize_stratum(np.array([[4.0, 1.5], [1.5, 2.0]]), 2000, "gaussian", rng)
    return verify_lemma1_moments(SimConfig(population=population, n=200, reps=reps, seed=seed, workers=workers))


def solver_oracle(seed=0):
    rng = np.random.default_rng(seed)
    mismatches = []
    for instance in range(50):
        H = int(rng.integers(2, 4))
        sizes = rng.integers(4, 13, size=H)
        total = int(rng.integers(2 * H, min(20, int(sizes.sum())) + 1))
        design = random_design(rng, sizes).with_budget(TotalSampleBudget(total))
        for model in ("deterministic", "E"):
            objective = build_objective(design, ModelSpec(model, "trace"))
            solved = solve_integer(objective)
            oracle = exhaustive_oracle(objective)
            same_value = np.isclose(solved.objective_value, oracle.objective_value, rtol=1e-12, atol=0.0)
            if not same_value or solved.allocation != oracle.allocation:
                mismatches.append(f"instance {instance} ({model}): {solved.allocation.sizes} vs {oracle.allocation.sizes}")
    return not mismatches, "all 100 solves match the oracle" if not mismatches else "; ".join(mismatches), {
        "mismatches": len(mismatches)
    }


def determinant_constants(seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        A = rng.standard_normal((4, 4))
        det_value = float(np.linalg.det(A @ A.T + 0.1 * np.eye(4)))
        worst = max(worst, _relative_error(determinant_model.expectation_from_determinant(det_value), -(det_value**0.25) / 2))
        worst = max(worst, _relative_error(determinant_model.variance_from_determinant(det_value), 1.5 * det_value**0.5))
    density_error = abs(determinant_model.det_density(0.0) - 1.0 / np.sqrt(2.0)) * np.sqrt(2.0)
    mass = determinant_model.density_mass()
    stable = abs(determinant_model.density_mass() - mass) <= 1e-9
    passed = worst <= 1e-12 and density_error <= 1e-12 and stable
    detail = f"constant error {worst:.2e}; g(0) error {density_error:.2e}; density mass on [0, 50] = {mass:.12f}"
    return passed, detail, {"density_mass": mass}


def monotone_damage(seed=0):
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(100):
        H = int(rng.integers(1, 5))
        sizes = rng.integers(4, 60, size=H)
        design = random_design(rng, sizes, G=int(rng.integers(1, 4)))
        for _ in range(100):
            n1 = np.array([rng.integers(2, size + 1) for size in sizes])
            n2 = np.array([rng.integers(low, size + 1) for low, size in zip(n1, sizes)])
            if np.array_equal(n1, n2):
                continue
            difference = moment_formulas.cov_yst_hat(design, n1) - moment_formulas.cov_yst_hat(design, n2)
            eigenvalues = np.linalg.eigvalsh(difference)
            norm = max(np.abs(eigenvalues).max(), np.finfo(float).tiny)
            worst = min(worst, eigenvalues.min() / norm)
    return worst >= -1e-10, f"smallest relative eigenvalue {worst:.2e}", {"min_relative_eigenvalue": float(worst)}


def reproducibility(seed=0):
    from stratalloc.run_pipeline import AllocationPipeline, run_simulation, simulation_population

    reports = {}
    for workers in (1, 2):
        for attempt in range(2):
            config = RunConfig(data=TOY, model="V", value_fn="trace", total_n=8, seed=seed, workers=workers)
            solve_report, _ = AllocationPipeline(config).solve()
            population = simulation_population(N=300, seed=seed)
            simulate_report, _ = run_simulation("lemma1", population, 30, reps=1500, seed=seed, workers=workers)
            reports[(workers, attempt)] = (strip_timestamp(solve_report), strip_timestamp(simulate_report))
    identical = len(set(reports.values())) == 1
    return identical, "solve and simulate reports identical across runs and worker counts" if identical else (
        "reports differ between runs"
    ), {}


def _lemma1_means(seed):
    report = lemma1_run(seed)
    max_z = float(np.max(np.abs(report.mean_z)))
    passed = report.mean_within_limit and report.cov_within_limit
    uncorrected_z = max(report.alternative_max_z.values())
    detail = (
        f"max |z| mean {max_z:.2f}, covariance {float(np.max(np.abs(report.cov_z))):.2f} "
        f"(without finite-population factor {uncorrected_z:.2f})"
    )
    return passed, detail, {"max_mean_z": max_z, "identity_residual": report.identity_residual}


def _decomposition(seed):
    residual = lemma1_run(seed).identity_residual
    return residual <= 1e-12, f"largest residual {residual:.2e} over all draws", {"identity_residual": residual}


CRITERIA = (
    (1, "Published Neyman rows of the forest survey", "allocations", lambda seed: neyman_rows()),
    (2, "Stochastic model consistency on synthesized moments", "allocations", lambda seed: stochastic_rows(seed=seed)),
    (3, "Duplication and commutation identities", "matrix-kit", matrix_identities),
    (4, "Moment formulas against scalar double sums", "moment-formulas", moment_oracle),
    (5, "Sample covariance moments by Monte Carlo", "montecarlo", _lemma1_means),
    (6, "Covariance decomposition identity", "montecarlo", _decomposition),
    (7, "Integer solver against exhaustive enumeration", "solver", solver_oracle),
    (8, "Determinant-model constants and density", "determinant", determinant_constants),
    (9, "Larger allocations never increase the covariance", "moment-formulas", monotone_damage),
    (10, "Byte-identical reports for identical runs", "reproducibility", reproducibility),
)
GROUPS = tuple(sorted({group for _, _, group, _ in CRITERIA}))


def select_criteria(only=None):
    """
    Criteria named by ``only`` (group names or criterion numbers); all when None.

    :raises ValidationError: For unknown selectors.
    """
    if not only:
        return list(CRITERIA)
    selected = []
    for selector in only:
        matches = [c for c in CRITERIA if c[2] == selector or str(c[0]) == str(selector)]
        if not matches:
            raise ValidationError(f"unknown criterion '{selector}'; groups are {', '.join(GROUPS)}.")
        selected.extend(c for c in matches if c not in selected)
    return sorted(selected, key=lambda c: c[0])


def run_acceptance(only=None, seed=0):
    """
    Run the selected acceptance criteria.

    :param only: Group names or criterion numbers; None runs everything.
    :param seed: Seed shared by every randomized criterion.
    :return: List of :class:`CriterionResult`.
    """
    results = []
    for number, name, group, check in select_criteria(only):
        started = time.perf_counter()
        try:
            passed, detail, values = check(seed)
        except Exception as error:
            logger.debug("Criterion %d raised", number, exc_info=True)
            passed, detail, values = False, f"{type(error).__name__}: {error}", {}
        seconds = time.perf_counter() - started
        logger.info("Criterion %d (%s) %s in %.2f s", number, group, "passed" if passed else "failed", seconds)
        results.append(CriterionResult(number, name, group, bool(passed), detail, values, seconds))
    return results
