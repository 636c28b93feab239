"""
Feasible set of the allocation problem: box bounds ``2 <= n_h <= N_h`` and one
linear budget row ``a'n (relation) b``.

A total-sample budget gives unit coefficients and an exact equality. A cost
budget ``c'n + c0 = C`` is generally unattainable on the integer lattice, so a
lattice point is accepted when ``0 <= b - a'n < min(a)``: no further unit of
the cheapest stratum fits.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from stratalloc.core.exceptions import InfeasibleProblemError, ValidationError
from stratalloc.core.strata import CostBudget, TotalSampleBudget

logger = logging.getLogger(__name__)

EQUALITY = "equality"
AT_MOST = "at-most"
RELATIONS = (EQUALITY, AT_MOST)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """
    :param a: Budget coefficients, one per stratum (all positive).
    :param b: Right-hand side.
    :param relation: ``"equality"`` or ``"at-most"``.
    :param lower: Lower bounds (2 per stratum by default).
    :param upper: Upper bounds (``N_h``).
    """

    a: np.ndarray
    b: float
    relation: str
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if not (a.shape == lower.shape == upper.shape) or a.ndim != 1:
            raise ValidationError("constraint vectors must share one length H.")
        if np.any(a <= 0):
            raise ValidationError("budget coefficients must be positive.")
        if np.any(lower > upper):
            raise InfeasibleProblemError("some lower bound exceeds its upper bound.")
        if self.relation not in RELATIONS:
            raise ValidationError(f"relation must be one of {RELATIONS}, got '{self.relation}'.")
        for name, value in (("a", a), ("lower", lower), ("upper", upper)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "b", float(self.b))
        self.validate()

    @classmethod
    def from_design(cls, design, budget=None):
        """
        Build the constraint set of ``design`` (or of an explicit ``budget``).

        :raises ValidationError: If no budget is available.
        """
        budget = budget if budget is not None else design.budget
        lower = np.full(design.H, 2.0)
        upper = design.sizes
        if isinstance(budget, TotalSampleBudget):
            return cls(np.ones(design.H), float(budget.total_n), EQUALITY, lower, upper)
        if isinstance(budget, CostBudget):
            return cls(np.asarray(budget.costs, dtype=float), budget.C - budget.c0, EQUALITY, lower, upper)
        raise ValidationError("the design has no budget; give a total sample size or a cost budget.")

    @property
    def H(self):
        return self.a.shape[0]

    @property
    def unit_costs(self):
        """True for a total-sample-size row with integral right-hand side (exact lattice equality)."""
        return bool(np.all(self.a == 1.0) and float(self.b).is_integer())

    @property
    def tolerance(self):
        return 1e-9 * max(abs(self.b), 1.0)

    @property
    def relaxation_relation(self):
        """Relation used by continuous relaxations; it contains every feasible lattice point."""
        return EQUALITY if self.relation == EQUALITY and self.unit_costs else AT_MOST

    def validate(self):
        minimum = float(self.a @ self.lower)
        maximum = float(self.a @ self.upper)
        if minimum > self.b + self.tolerance:
            raise InfeasibleProblemError(
                f"budget {self.b:g} cannot pay for the lower bounds (a'lower = {minimum:g})."
            )
        if self.relation == EQUALITY and self.b > maximum + self.tolerance:
            raise InfeasibleProblemError(f"budget {self.b:g} exceeds the census cost a'upper = {maximum:g}.")

    def with_bounds(self, lower, upper):
        """Copy with tightened bounds (used for branch-and-bound nodes); may raise InfeasibleProblemError."""
        return ConstraintSet(self.a, self.b, self.relation, lower, upper)

    def slack(self, n):
        return float(self.b - self.a @ np.asarray(n, dtype=float))

    def is_feasible(self, n):
        """
        Check an integer allocation against bounds and the budget row.

        :return: True iff every ``lower <= n_h <= upper`` and the budget relation holds.
        """
        n = np.asarray(n, dtype=float)
        if n.shape != self.a.shape or not np.array_equal(n, np.round(n)):
            return False
        if np.any(n < self.lower) or np.any(n > self.upper):
            return False
        if self.unit_costs and self.relation == EQUALITY:
            return int(round(n.sum())) == int(self.b)
        slack = self.slack(n)
        if slack < -self.tolerance:
            return False
        if self.relation == AT_MOST:
            return True
        return slack < self.a.min()

    def is_single_point(self):
        """True when the lower bounds exhaust the budget, leaving ``lower`` as the only feasible point."""
        return self.relation == EQUALITY and self.slack(self.lower) < self.a.min() and self.is_feasible(self.lower)

    def project_relaxation_target(self):
        """Budget level a continuous relaxation should reach."""
        return min(self.b, float(self.a @ self.upper))

    def random_point(self, rng):
        """
        Random continuous point on the relaxation's budget level.

        Draws ``u ~ U(0,1)^H`` and solves ``a'(lower + min(t u, 1)(upper - lower)) = target`` for ``t``.
        """
        target = self.project_relaxation_target()
        span = self.upper - self.lower
        u = rng.uniform(0.05, 1.0, size=self.H)
        base = float(self.a @ self.lower)
        if target <= base + self.tolerance:
            return self.lower.astype(float)

        def excess(t):
            return base + float(self.a @ (np.minimum(t * u, 1.0) * span)) - target

        upper_t = 1.0 / u.min()
        t = optimize.brentq(excess, 0.0, upper_t, xtol=1e-14)
        return self.lower + np.minimum(t * u, 1.0) * span

    def round_to_lattice(self, x):
        """
        Integer feasible point near the continuous point ``x``.

        Floors ``x`` into the box, then adds units by largest fractional part
        (lowest index on ties) until the budget row holds; units are removed by
        smallest fractional part when flooring already overspends.

        :raises InfeasibleProblemError: If no feasible point is reached.
        """
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        n = np.clip(np.floor(x + 1e-9), self.lower, self.upper)
        fractions = x - n
        add_order = sorted(range(self.H), key=lambda h: (-fractions[h], h))
        remove_order = sorted(range(self.H), key=lambda h: (fractions[h], h))

        while self.slack(n) < -self.tolerance:
            for h in remove_order:
                if n[h] > self.lower[h]:
                    n[h] -= 1
                    break
            else:
                raise InfeasibleProblemError("cannot reduce the allocation below its lower bounds.")

        need_fill = self.relation == EQUALITY
        while need_fill and not self.is_feasible(n):
            for h in add_order:
                if n[h] < self.upper[h] and self.slack(n) - self.a[h] >= -self.tolerance:
                    n[h] += 1
                    break
            else:
                break
        if not self.is_feasible(n):
            raise InfeasibleProblemError(f"no feasible lattice point found near {np.round(x, 3).tolist()}.")
        return n.astype(int)


def apportion(quotas, total, lower, upper):
    """
    Largest-remainder integerization of continuous quotas under box bounds.

    Quotas below ``lower`` or above ``upper`` are pinned there and the rest are
    rescaled to the remaining total, repeatedly. The result is floored and the
    leftover units go to the largest fractional parts, lowest index first.

    :param quotas: Non-negative continuous target sizes.
    :param total: Integer sum the result must reach.
    :param lower: Per-stratum lower bounds.
    :param upper: Per-stratum upper bounds.
    :return: Integer array summing to ``total``.
    :raises InfeasibleProblemError: If ``sum(lower) <= total <= sum(upper)`` fails.
    """
    quotas = np.asarray(quotas, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    total = int(total)
    if total < lower.sum() or total > upper.sum():
        raise InfeasibleProblemError(f"total {total} outside [{lower.sum():g}, {upper.sum():g}].")
    H = quotas.shape[0]
    pinned = np.full(H, np.nan)
    for _ in range(H + 1):
        free = np.isnan(pinned)
        remaining = total - np.nansum(pinned)
        weights = quotas[free]
        if weights.sum() > 0:
            scaled = weights / weights.sum() * remaining
        else:
            scaled = np.full(weights.shape, remaining / max(free.sum(), 1))
        targets = np.where(free, 0.0, pinned)
        targets[free] = scaled
        low = free & (targets < lower)
        high = free & (targets > upper)
        if not low.any() and not high.any():
            break
        pinned[low] = lower[low]
        pinned[high] = upper[high]
    sizes = np.clip(np.floor(targets + 1e-9), lower, upper)
    fractions = targets - sizes
    order = sorted(range(H), key=lambda h: (-fractions[h], h))
    leftover = total - int(sizes.sum())
    while leftover > 0:
        for h in order:
            if sizes[h] < upper[h]:
                sizes[h] += 1
                leftover -= 1
                if leftover == 0:
                    break
    while leftover < 0:
        for h in reversed(order):
            if sizes[h] > lower[h]:
                sizes[h] -= 1
                leftover += 1
                if leftover == 0:
                    break
    return sizes.astype(int)
