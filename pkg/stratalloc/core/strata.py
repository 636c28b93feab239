"""
Survey data types: per-stratum pilot summaries, the survey design with its
budget, integer allocations and raw finite populations.

Divisor conventions:
    * ``StratumSummary.covariance`` is the pilot sample covariance ``s_h``
      (divisor ``pilot_size - 1``), or the population covariance used directly
      as a pilot value when ``pilot_size`` is None.
    * ``m4_vech`` / ``m4_vec`` are plug-in fourth central moments (divisor
      ``pilot_size``, or ``N_h`` for population values).
The pilot sizes are frozen constants; every moment formula takes the decision
allocation separately.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import InfeasibleProblemError, MissingMomentError, ValidationError

logger = logging.getLogger(__name__)

POPULATION_AS_PILOT = "population-values-as-pilot"
PILOT_SAMPLE = "pilot-sample"


def _frozen_array(values, name):
    array = np.array(values, dtype=float)
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite entries.")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StratumSummary:
    """
    Pilot statistics of one stratum.

    :param stratum_id: Identifier as it appears in the source file.
    :param population_size: Number of units ``N_h`` in the stratum (>= 2).
    :param covariance: ``G x G`` pilot covariance matrix ``s_h``.
    :param m4_vech: Optional ``k x k`` plug-in fourth moment in vech form.
    :param m4_vec: Optional ``G^2 x G^2`` plug-in fourth moment in vec form.
    :param pilot_size: Size of the pilot sample, or None when population values
                       are used as pilot values.
    """

    stratum_id: str
    population_size: int
    covariance: np.ndarray
    m4_vech: Optional[np.ndarray] = None
    m4_vec: Optional[np.ndarray] = None
    pilot_size: Optional[int] = None

    def __post_init__(self):
        label = f"stratum '{self.stratum_id}'"
        if int(self.population_size) != self.population_size or self.population_size < 2:
            raise ValidationError(f"{label}: N_h must be an integer >= 2, got {self.population_size}.")
        object.__setattr__(self, "population_size", int(self.population_size))

        covariance = _frozen_array(self.covariance, f"{label} covariance")
        if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
            raise ValidationError(f"{label}: covariance must be square, got shape {covariance.shape}.")
        if not np.array_equal(covariance, covariance.T):
            raise ValidationError(f"{label}: covariance matrix is not symmetric.")
        G = covariance.shape[0]
        if G > matrix_kit.MAX_CHARACTERISTICS:
            raise ValidationError(f"{label}: at most {matrix_kit.MAX_CHARACTERISTICS} characteristics are supported.")
        if not matrix_kit.is_positive_semidefinite(covariance):
            raise ValidationError(f"{label}: covariance matrix is not positive semidefinite.")
        object.__setattr__(self, "covariance", covariance)

        if self.pilot_size is not None:
            if int(self.pilot_size) != self.pilot_size or self.pilot_size < 2:
                raise ValidationError(f"{label}: pilot sample size must be an integer >= 2, got {self.pilot_size}.")
            if self.pilot_size > self.population_size:
                raise ValidationError(f"{label}: pilot sample size {self.pilot_size} exceeds N_h={self.population_size}.")
            object.__setattr__(self, "pilot_size", int(self.pilot_size))

        k = matrix_kit.vech_length(G)
        if self.m4_vech is not None:
            m4_vech = _frozen_array(self.m4_vech, f"{label} m4_vech")
            if m4_vech.shape != (k, k):
                raise ValidationError(f"{label}: m4_vech must have shape ({k}, {k}), got {m4_vech.shape}.")
            if not np.allclose(m4_vech, m4_vech.T, rtol=1e-10, atol=0.0):
                raise ValidationError(f"{label}: m4_vech is not symmetric.")
            object.__setattr__(self, "m4_vech", m4_vech)
        if self.m4_vec is not None:
            m4_vec = _frozen_array(self.m4_vec, f"{label} m4_vec")
            if m4_vec.shape != (G * G, G * G):
                raise ValidationError(f"{label}: m4_vec must have shape ({G * G}, {G * G}), got {m4_vec.shape}.")
            object.__setattr__(self, "m4_vec", m4_vec)
            if self.m4_vech is None:
                Dpinv = matrix_kit.duplication(G).Dpinv
                object.__setattr__(self, "m4_vech", _frozen_array(Dpinv @ m4_vec @ Dpinv.T, f"{label} m4_vech"))
            elif not self._fourth_moments_consistent():
                raise ValidationError(f"{label}: m4_vec and m4_vech disagree (Dpinv m4_vec Dpinv' != m4_vech).")

    def _fourth_moments_consistent(self):
        Dpinv = matrix_kit.duplication(self.G).Dpinv
        sandwich = Dpinv @ self.m4_vec @ Dpinv.T
        scale = max(np.abs(self.m4_vech).max(), np.finfo(float).tiny)
        return bool(np.abs(sandwich - self.m4_vech).max() <= 1e-8 * scale)

    @property
    def G(self):
        return self.covariance.shape[0]

    @property
    def pilot_source(self):
        return POPULATION_AS_PILOT if self.pilot_size is None else PILOT_SAMPLE

    @property
    def has_fourth_moments(self):
        return self.m4_vech is not None

    def moment_kernel(self):
        """
        Plug-in covariance kernel ``m4_vech - vech(s) vech(s)'``.

        :raises MissingMomentError: If the stratum carries no fourth moments.
        """
        if self.m4_vech is None:
            raise MissingMomentError(f"stratum '{self.stratum_id}' has no fourth-moment inputs.")
        v = matrix_kit.vech(self.covariance)
        return self.m4_vech - np.outer(v, v)

    def kernel_is_psd(self, rel_tol=1e-8):
        """True when the plug-in kernel ``m4_vech - vech(s) vech(s)'`` is positive semidefinite."""
        return matrix_kit.is_positive_semidefinite(self.moment_kernel(), rel_tol=rel_tol)


@dataclass(frozen=True)
class TotalSampleBudget:
    """Budget given as a fixed total sample size ``sum(n_h) == total_n``."""

    total_n: int

    def validate(self, design):
        if int(self.total_n) != self.total_n:
            raise ValidationError(f"total_n must be an integer, got {self.total_n}.")
        if self.total_n < 2 * design.H:
            raise ValidationError(f"total_n={self.total_n} is below the minimum 2H={2 * design.H}.")
        if self.total_n > design.N:
            raise ValidationError(f"total_n={self.total_n} exceeds the population size N={design.N}.")


@dataclass(frozen=True)
class CostBudget:
    """Budget given as a linear cost ``c'n + c0 == C``."""

    costs: Tuple[float, ...]
    c0: float
    C: float

    def validate(self, design):
        costs = np.asarray(self.costs, dtype=float)
        if costs.shape != (design.H,):
            raise ValidationError(f"cost vector has {costs.size} entries, expected H={design.H}.")
        if np.any(costs <= 0):
            raise ValidationError("all per-unit costs c_h must be positive.")
        if self.C <= self.c0 + 2.0 * costs.sum():
            raise ValidationError(
                f"budget C={self.C} cannot pay for the minimum sample (c0 + 2*sum(c) = {self.c0 + 2.0 * costs.sum()})."
            )


@dataclass(frozen=True, eq=False)
class SurveyDesign:
    """
    Ordered strata of a survey together with an optional budget.

    :param strata: Tuple of :class:`StratumSummary`, all with the same G.
    :param budget: A :class:`TotalSampleBudget`, a :class:`CostBudget` or None.
    :param characteristic_names: Names of the G characteristics (defaults y1..yG).
    """

    strata: Tuple[StratumSummary, ...]
    budget: Optional[object] = None
    characteristic_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        strata = tuple(self.strata)
        if not strata:
            raise ValidationError("a survey design needs at least one stratum.")
        object.__setattr__(self, "strata", strata)
        dimensions = {stratum.G for stratum in strata}
        if len(dimensions) != 1:
            problems = [f"stratum '{s.stratum_id}' has G={s.G}" for s in strata]
            raise ValidationError("strata disagree on the number of characteristics.", problems)
        ids = [stratum.stratum_id for stratum in strata]
        duplicates = sorted({sid for sid in ids if ids.count(sid) > 1})
        if duplicates:
            raise ValidationError("duplicate stratum ids.", [f"stratum '{sid}' appears more than once" for sid in duplicates])
        G = strata[0].G
        names = tuple(self.characteristic_names) or tuple(f"y{j + 1}" for j in range(G))
        if len(names) != G:
            raise ValidationError(f"{len(names)} characteristic names given for G={G}.")
        object.__setattr__(self, "characteristic_names", names)
        if self.budget is not None:
            self.budget.validate(self)

    @property
    def H(self):
        return len(self.strata)

    @property
    def G(self):
        return self.strata[0].G

    @property
    def k(self):
        return matrix_kit.vech_length(self.G)

    @property
    def sizes(self):
        return np.array([stratum.population_size for stratum in self.strata], dtype=float)

    @property
    def N(self):
        return int(sum(stratum.population_size for stratum in self.strata))

    @property
    def covariances(self):
        """Stacked pilot covariances, shape (H, G, G)."""
        return np.stack([stratum.covariance for stratum in self.strata])

    @property
    def has_fourth_moments(self):
        return all(stratum.m4_vech is not None for stratum in self.strata)

    @property
    def has_vec_fourth_moments(self):
        return all(stratum.m4_vec is not None for stratum in self.strata)

    def with_budget(self, budget):
        """Return a copy of the design with ``budget`` attached and validated."""
        return replace(self, budget=budget)

    def characteristic_index(self, key):
        """
        Resolve a characteristic given by name or 1-based position.

        :param key: Name (e.g. ``"BA"``) or 1-based index as int or string.
        :return: 0-based index.
        """
        if isinstance(key, str) and key in self.characteristic_names:
            return self.characteristic_names.index(key)
        try:
            position = int(key)
        except (TypeError, ValueError):
            raise ValidationError(
                f"unknown characteristic '{key}'; available: {', '.join(self.characteristic_names)}."
            ) from None
        if not 1 <= position <= self.G:
            raise ValidationError(f"characteristic index {position} outside 1..{self.G}.")
        return position - 1

    def check_sizes(self, n, integral=False):
        """
        Validate a (possibly fractional) allocation vector against ``2 <= n_h <= N_h``.

        :param n: Allocation, sequence or :class:`Allocation`.
        :param integral: Require integer entries.
        :return: The allocation as a float array.
        :raises InfeasibleProblemError: If a bound is violated.
        """
        if isinstance(n, Allocation):
            n = n.sizes
        sizes = np.asarray(n, dtype=float).ravel()
        if sizes.shape != (self.H,):
            raise InfeasibleProblemError(f"allocation has {sizes.size} entries, expected H={self.H}.")
        if not np.all(np.isfinite(sizes)):
            raise InfeasibleProblemError("allocation contains non-finite entries.")
        if integral and not np.array_equal(sizes, np.round(sizes)):
            raise InfeasibleProblemError("allocation entries must be integers.")
        bad = [
            f"stratum '{stratum.stratum_id}': n_h={value:g} outside [2, {stratum.population_size}]"
            for stratum, value in zip(self.strata, sizes)
            if value < 2 or value > stratum.population_size
        ]
        if bad:
            raise InfeasibleProblemError("allocation violates 2 <= n_h <= N_h:\n  " + "\n  ".join(bad))
        return sizes


@dataclass(frozen=True)
class Allocation:
    """Integer sample sizes ``(n_1, ..., n_H)``."""

    sizes: Tuple[int, ...]

    def __post_init__(self):
        values = tuple(int(v) for v in self.sizes)
        if any(int(v) != v for v in self.sizes):
            raise ValidationError(f"allocation entries must be integers, got {self.sizes}.")
        object.__setattr__(self, "sizes", values)

    def as_array(self):
        return np.array(self.sizes, dtype=float)

    @property
    def total(self):
        return sum(self.sizes)

    def __iter__(self):
        return iter(self.sizes)

    def __len__(self):
        return len(self.sizes)


@dataclass(frozen=True, eq=False)
class FinitePopulation:
    """
    Raw population data: one ``N_h x G`` matrix per stratum, one row per unit.
    """

    strata_data: Tuple[np.ndarray, ...]

    def __post_init__(self):
        arrays = []
        for index, data in enumerate(self.strata_data):
            values = np.asarray(data, dtype=float)
            # a 1-D stratum is a single characteristic, one unit per entry
            if values.ndim == 1:
                values = values.reshape(-1, 1)
            array = _frozen_array(values, f"population stratum {index + 1}")
            if array.ndim != 2:
                raise ValidationError(f"population stratum {index + 1} must be a units x characteristics matrix.")
            if array.shape[0] < 2:
                raise ValidationError(f"population stratum {index + 1} has fewer than 2 units.")
            arrays.append(array)
        if len({array.shape[1] for array in arrays}) > 1:
            raise ValidationError("population strata disagree on the number of characteristics.")
        object.__setattr__(self, "strata_data", tuple(arrays))

    @property
    def H(self):
        return len(self.strata_data)

    @property
    def sizes(self):
        return np.array([data.shape[0] for data in self.strata_data], dtype=float)
