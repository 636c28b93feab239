"""
Plug-in moment formulas for the stratified estimator of the mean vector.

Every function takes the survey design and the *decision* allocation ``n``
separately; pilot statistics stay frozen inside the design. Allocations may be
fractional (continuous relaxations) but must satisfy ``2 <= n_h <= N_h``.
"""

import logging

import numpy as np

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import MissingMomentError, ValidationError

logger = logging.getLogger(__name__)

# relative slack allowed when checking m4 >= s^4 for the scalar kernels
KERNEL_TOLERANCE = 1e-12


def weights(design):
    """
    Relative stratum sizes ``W_h = N_h / N``.

    :param design: A :class:`~stratalloc.core.strata.SurveyDesign`.
    :return: Vector of length H summing to one.
    """
    return design.sizes / design.N


def sampling_factors(design, n):
    """
    Per-stratum coefficients ``a_h = W_h^2 / n_h - W_h / N`` of the estimated covariance.

    :raises InfeasibleProblemError: If ``n`` violates ``2 <= n_h <= N_h``.
    """
    n = design.check_sizes(n)
    W = weights(design)
    return W**2 / n - W / design.N


def cov_yst_hat(design, n):
    """
    Estimated covariance matrix of the stratified mean,
    ``sum_h (W_h^2 / n_h) s_h - sum_h (W_h / N) s_h``.

    :param design: Survey design carrying the pilot covariances.
    :param n: Allocation (length H).
    :return: Symmetric ``G x G`` array.
    """
    a = sampling_factors(design, n)
    result = np.einsum("h,hij->ij", a, design.covariances)
    return (result + result.T) / 2.0


def variance_vector(design, n):
    """Diagonal of :func:`cov_yst_hat`, one estimated variance per characteristic."""
    a = sampling_factors(design, n)
    diagonals = np.stack([np.diag(stratum.covariance) for stratum in design.strata])
    return a @ diagonals


def expected_vech_cov(design, n):
    """
    Plug-in expectation of ``vech Cov_hat(y_ST)``:
    ``sum_h a_h * n_h / (n_h - 1) * vech(s_h)``.

    :return: Vector of length ``G(G+1)/2``.
    """
    n = design.check_sizes(n)
    a = sampling_factors(design, n)
    scale = a * n / (n - 1.0)
    stacked = np.stack([matrix_kit.vech(stratum.covariance) for stratum in design.strata])
    return scale @ stacked


def _require_fourth_moments(design):
    missing = [stratum.stratum_id for stratum in design.strata if stratum.m4_vech is None]
    if missing:
        raise MissingMomentError(
            "stochastic models need fourth moments for every stratum; missing for: " + ", ".join(missing)
        )


def cov_vech_cov(design, n):
    """
    Plug-in covariance of ``vech Cov_hat(y_ST)``:
    ``sum_h a_h^2 * n_h / (n_h - 1)^2 * (m4_vech_h - vech(s_h) vech(s_h)')``.

    :return: Symmetric ``k x k`` array.
    :raises MissingMomentError: If a stratum has no ``m4_vech``.
    """
    _require_fourth_moments(design)
    n = design.check_sizes(n)
    a = sampling_factors(design, n)
    scale = a**2 * n / (n - 1.0) ** 2
    k = design.k
    result = np.zeros((k, k))
    for weight, stratum in zip(scale, design.strata):
        v = matrix_kit.vech(stratum.covariance)
        result += weight * (stratum.m4_vech - np.outer(v, v))
    return (result + result.T) / 2.0


def _selected(design, characteristics):
    if characteristics is None:
        return list(range(design.G))
    selected = sorted({int(j) for j in characteristics})
    if not selected or selected[0] < 0 or selected[-1] >= design.G:
        raise ValidationError(f"characteristic selection {characteristics} outside 0..{design.G - 1}.")
    return selected


def trace_terms(design, characteristics=None):
    """
    Per-stratum sums over the selected characteristics of the pilot variances.

    :param characteristics: 0-based indices; None selects all G.
    :return: Vector ``t_h = sum_j s_hjj``.
    """
    selected = _selected(design, characteristics)
    return np.array([stratum.covariance[selected, selected].sum() for stratum in design.strata])


def trace_kernel_terms(design, characteristics=None):
    """
    Per-stratum sums ``q_h = sum_j (m4_hjj - s_hjj^2)`` of the scalar fourth-moment kernels.

    :raises MissingMomentError: If a stratum has no fourth moments.
    :raises ValidationError: If some ``m4_hjj < s_hjj^2`` (invalid moment input).
    """
    _require_fourth_moments(design)
    selected = _selected(design, characteristics)
    G = design.G
    positions = [matrix_kit.vech_position(j, j, G) for j in selected]
    terms = []
    problems = []
    for stratum in design.strata:
        m4 = stratum.m4_vech[positions, positions]
        s2 = stratum.covariance[selected, selected]
        kernel = m4 - s2**2
        for j, value, square in zip(selected, kernel, s2**2):
            if value < -KERNEL_TOLERANCE * max(square, np.finfo(float).tiny):
                problems.append(
                    f"stratum '{stratum.stratum_id}', characteristic {j + 1}: fourth moment below squared variance"
                )
        terms.append(np.clip(kernel, 0.0, None).sum())
    if problems:
        raise ValidationError("invalid fourth-moment input.", problems)
    return np.array(terms)


def trace_expectation(design, n, characteristics=None):
    """
    Expected trace of the estimated covariance (modified E-model expectation):
    ``sum_j sum_h a_h * n_h / (n_h - 1) * s_hjj``.
    """
    n = design.check_sizes(n)
    a = sampling_factors(design, n)
    return float(np.sum(a * n / (n - 1.0) * trace_terms(design, characteristics)))


def trace_variance(design, n, characteristics=None):
    """
    Variance of the trace of the estimated covariance:
    ``sum_j sum_h a_h^2 * n_h / (n_h - 1)^2 * (m4_hjj - s_hjj^2)``.

    :raises ValidationError: If ``m4_hjj < s_hjj^2`` for some stratum and characteristic.
    """
    n = design.check_sizes(n)
    a = sampling_factors(design, n)
    return float(np.sum(a**2 * n / (n - 1.0) ** 2 * trace_kernel_terms(design, characteristics)))


def _centered(Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ValidationError(f"moment computations need at least 2 rows, got shape {Y.shape}.")
    return Y - Y.mean(axis=0)


def fourth_moment_vec(Y):
    """
    Fourth central moment matrix in vec form,
    ``(1/rows) sum_i (d_i d_i') kron (d_i d_i')`` with ``d_i = y_i - mean``.

    :param Y: Data matrix with one unit per row (population or pilot sample).
    :return: ``G^2 x G^2`` array.
    """
    d = _centered(Y)
    rows, G = d.shape
    products = np.einsum("ia,ib->iab", d, d).reshape(rows, G * G, order="F")
    result = products.T @ products / rows
    return (result + result.T) / 2.0


def fourth_moment_vech(Y):
    """
    Fourth central moment matrix in vech form, ``Dpinv M4_vec Dpinv'``.

    :param Y: Data matrix with one unit per row.
    :return: Symmetric ``k x k`` array.
    """
    d = _centered(Y)
    Dpinv = matrix_kit.duplication(d.shape[1]).Dpinv
    result = Dpinv @ fourth_moment_vec(d) @ Dpinv.T
    return (result + result.T) / 2.0


def population_covariance(Y):
    """Covariance with divisor equal to the number of rows."""
    d = _centered(Y)
    result = d.T @ d / d.shape[0]
    return (result + result.T) / 2.0


def sample_covariance(Y):
    """Covariance with divisor ``rows - 1``."""
    d = _centered(Y)
    result = d.T @ d / (d.shape[0] - 1.0)
    return (result + result.T) / 2.0
