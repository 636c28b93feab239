"""
Determinant value function under the stochastic models.

For two characteristics the centered determinant of the estimated covariance
has moments that depend on the design only through ``|N|``, where

    N = sum_h a_h^2 * n_h / (n_h - 1)^2 * (m4_vec_h - vec(s_h) vec(s_h)')

and ``a_h = W_h^2 / n_h - W_h / N``. The vec-form ``N`` repeats the rows for
``(i, j)`` and ``(j, i)``, so its determinant is zero whenever ``G >= 2``;
``basis="vech"`` evaluates the non-singular ``Dpinv N Dpinv'`` instead.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg, special

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import MissingMomentError, UnsupportedModelError, ValidationError
from stratalloc.processing.moment_formulas import sampling_factors

logger = logging.getLogger(__name__)

DET_BASES = ("vec", "vech")

EXPECTATION_CONSTANT = -(special.gamma(0.5) - special.gamma(1.5)) / np.sqrt(np.pi)
VARIANCE_CONSTANT = (2.0 / np.sqrt(np.pi)) * (
    special.gamma(0.5) - special.gamma(1.5) + special.gamma(2.5) / 2.0
) - (special.gamma(0.5) - special.gamma(1.5)) ** 2 / np.pi

DENSITY_MASS_UPPER = 50.0


def det_model_N(design, n):
    """
    Build the ``G^2 x G^2`` matrix ``N`` driving the determinant moments.

    :param design: Survey design whose strata all carry ``m4_vec``.
    :param n: Allocation (length H).
    :raises MissingMomentError: If a stratum has no vec-form fourth moments.
    """
    missing = [stratum.stratum_id for stratum in design.strata if stratum.m4_vec is None]
    if missing:
        raise MissingMomentError("determinant models need vec-form fourth moments; missing for: " + ", ".join(missing))
    n = design.check_sizes(n)
    a = sampling_factors(design, n)
    scale = a**2 * n / (n - 1.0) ** 2
    G = design.G
    result = np.zeros((G * G, G * G))
    for weight, stratum in zip(scale, design.strata):
        v = matrix_kit.vec(stratum.covariance)
        result += weight * (stratum.m4_vec - np.outer(v, v))
    return (result + result.T) / 2.0


def determinant(N, basis="vec"):
    """
    Determinant of ``N`` in the requested basis.

    :param N: Matrix from :func:`det_model_N`.
    :param basis: ``"vec"`` for ``|N|`` itself, ``"vech"`` for ``|Dpinv N Dpinv'|``.
    """
    if basis not in DET_BASES:
        raise ValidationError(f"unknown determinant basis '{basis}'; expected one of {DET_BASES}.")
    N = np.asarray(N, dtype=float)
    if basis == "vech":
        G = int(round(np.sqrt(N.shape[0])))
        Dpinv = matrix_kit.duplication(G).Dpinv
        N = Dpinv @ N @ Dpinv.T
    return float(linalg.det(N))


def clamp_determinant(det_value, warn=True):
    """Return ``det_value``, or 0 (with a warning unless ``warn`` is False) when rounding made it negative."""
    if det_value < 0.0:
        if warn:
            logger.warning("Negative determinant %.3e clamped to 0.", det_value)
        return 0.0
    return det_value


def expectation_from_determinant(det_value):
    """Expected centered determinant, ``|N|^(1/4)`` times the Gamma constant (which equals -1/2)."""
    return float(EXPECTATION_CONSTANT * clamp_determinant(det_value) ** 0.25)


def variance_from_determinant(det_value):
    """Variance of the centered determinant, ``|N|^(1/2)`` times the Gamma constant (which equals 3/2)."""
    return float(VARIANCE_CONSTANT * clamp_determinant(det_value) ** 0.5)


def _require_two_characteristics(design):
    if design.G != 2:
        raise UnsupportedModelError(
            f"determinant moments have a closed form only for G=2 characteristics, got G={design.G}."
        )


def det_expectation(design, n, basis="vec"):
    """Expected centered determinant for two characteristics."""
    _require_two_characteristics(design)
    return expectation_from_determinant(determinant(det_model_N(design, n), basis))


def det_variance(design, n, basis="vec"):
    """Variance of the centered determinant for two characteristics."""
    _require_two_characteristics(design)
    return variance_from_determinant(determinant(det_model_N(design, n), basis))


def det_density(z):
    """
    Density of the determinant statistic, ``(1/sqrt(2)) exp(z) (1 - erf(sqrt(2 z)))``.

    Evaluated as ``exp(-z) erfcx(sqrt(2 z)) / sqrt(2)`` to stay finite for large z.

    :param z: Non-negative argument.
    :raises ValidationError: If ``z < 0``.
    """
    if z < 0:
        raise ValidationError(f"det_density is defined for z >= 0, got {z}.")
    return float(np.exp(-z) * special.erfcx(np.sqrt(2.0 * z)) / np.sqrt(2.0))


def density_mass(upper=DENSITY_MASS_UPPER):
    """
    Numerically integrated mass of :func:`det_density` on ``[0, upper]``.

    The density is reported as stated and is not renormalized.
    """
    mass, error = integrate.quad(det_density, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=200)
    logger.debug("Density mass on [0, %g]: %.15f (quadrature error %.1e)", upper, mass, error)
    return float(mass)


@dataclass(frozen=True)
class DeterminantDiagnostics:
    """
    Quality indicators of the determinant model at one allocation.

    :param det_vec: ``|N|`` in vec form (structurally zero for G >= 2).
    :param det_vech: ``|Dpinv N Dpinv'|``.
    :param kronecker_residual: Relative Frobenius distance of ``N`` to the nearest ``B kron B``-shaped product.
    :param structural_rank_deficit: Number of duplicated row pairs of the vec form, ``G(G-1)/2``.
    """

    det_vec: float
    det_vech: float
    kronecker_residual: float
    structural_rank_deficit: int


def diagnose(design, n):
    """Compute :class:`DeterminantDiagnostics` for ``design`` at allocation ``n``."""
    N = det_model_N(design, n)
    G = design.G
    return DeterminantDiagnostics(
        det_vec=determinant(N, "vec"),
        det_vech=determinant(N, "vech"),
        kronecker_residual=matrix_kit.nearest_kronecker_residual(N, (G, G), (G, G)),
        structural_rank_deficit=G * (G - 1) // 2,
    )
