"""
Synthesis of finite populations whose covariance matches given targets exactly,
used to supply fourth moments for designs that only publish covariances.
"""

import logging

import numpy as np
from scipy import linalg

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import ValidationError
from stratalloc.core.strata import FinitePopulation, StratumSummary, SurveyDesign
from stratalloc.processing.moment_formulas import fourth_moment_vec, fourth_moment_vech

logger = logging.getLogger(__name__)

DISTRIBUTIONS = ("gaussian", "lognormal")
LOGNORMAL_SIGMA = 0.5


def _symmetric_sqrt(target):
    eigenvalues, vectors = linalg.eigh(target)
    root = (vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ vectors.T
    return (root + root.T) / 2.0


def synthesize_stratum(covariance, size, distribution="gaussian", rng=None, mean=None):
    """
    Draw a ``size x G`` population whose divisor-``size`` covariance equals ``covariance``.

    The raw draw is centered, whitened with the Cholesky factor of its own
    covariance and mapped through the symmetric square root of the target.

    :param covariance: Target ``G x G`` positive semidefinite matrix.
    :param size: Number of units (must exceed G).
    :param distribution: ``"gaussian"`` or ``"lognormal"`` (log-scale sigma 0.5).
    :param rng: A ``numpy.random.Generator``.
    :param mean: Optional location of the population; zero by default.
    :raises ValidationError: For a non-PSD target, unknown distribution or too few units.
    """
    target = np.asarray(covariance, dtype=float)
    if target.ndim != 2 or target.shape[0] != target.shape[1]:
        raise ValidationError(f"target covariance must be square, got shape {target.shape}.")
    if not matrix_kit.is_positive_semidefinite(target):
        raise ValidationError("target covariance is not positive semidefinite.")
    if distribution not in DISTRIBUTIONS:
        raise ValidationError(f"unknown distribution '{distribution}'; expected one of {DISTRIBUTIONS}.")
    G = target.shape[0]
    if size <= G:
        raise ValidationError(f"a population of {size} units cannot match a {G}x{G} covariance.")
    rng = rng if rng is not None else np.random.default_rng()

    raw = rng.standard_normal((int(size), G))
    if distribution == "lognormal":
        raw = np.exp(LOGNORMAL_SIGMA * raw)
    centered = raw - raw.mean(axis=0)
    factor = linalg.cholesky(centered.T @ centered / size, lower=True)
    white = linalg.solve_triangular(factor, centered.T, lower=True).T
    population = white @ _symmetric_sqrt(target)
    if mean is not None:
        population = population + np.asarray(mean, dtype=float)
    return population


def synthesize_population(design, distribution="gaussian", seed=0):
    """
    One synthesized population per stratum of ``design``, sized ``N_h`` and matching ``s_h``.

    Each stratum draws from its own child of ``SeedSequence(seed)``.

    :return: :class:`~stratalloc.core.strata.FinitePopulation`.
    """
    children = np.random.SeedSequence(seed).spawn(design.H)
    strata_data = []
    for stratum, child in zip(design.strata, children):
        strata_data.append(
            synthesize_stratum(stratum.covariance, stratum.population_size, distribution, np.random.default_rng(child))
        )
    return FinitePopulation(tuple(strata_data))


def synthesize_design(design, distribution="gaussian", seed=0):
    """
    Copy of ``design`` whose strata carry fourth moments of synthesized populations.

    Covariances stay the published ones; ``m4_vech`` and ``m4_vec`` come from
    the realized populations (divisor ``N_h``).
    """
    population = synthesize_population(design, distribution, seed)
    strata = []
    for stratum, data in zip(design.strata, population.strata_data):
        strata.append(
            StratumSummary(
                stratum_id=stratum.stratum_id,
                population_size=stratum.population_size,
                covariance=stratum.covariance,
                m4_vech=fourth_moment_vech(data),
                m4_vec=fourth_moment_vec(data),
                pilot_size=stratum.pilot_size,
            )
        )
    logger.info("Synthesized %s fourth moments for %d strata (seed %d)", distribution, design.H, seed)
    return SurveyDesign(tuple(strata), design.budget, design.characteristic_names)
