import unittest

import numpy as np
from numpy.testing import assert_array_equal

from stratalloc.core.exceptions import InfeasibleProblemError, ValidationError
from stratalloc.core.strata import CostBudget, StratumSummary, SurveyDesign, TotalSampleBudget
from stratalloc.optimization.constraints import AT_MOST, EQUALITY, ConstraintSet, apportion


def two_strata(budget=None):
    return SurveyDesign(
        (StratumSummary("1", 100, np.array([[4.0]])), StratumSummary("2", 300, np.array([[1.0]]))), budget
    )


class TestConstraintSet(unittest.TestCase):

    def test_total_sample_budget(self):
        """A total sample size gives a unit-cost equality row"""
        cons = ConstraintSet.from_design(two_strata(TotalSampleBudget(8)))
        self.assertTrue(cons.unit_costs)
        self.assertEqual(cons.relation, EQUALITY)
        self.assertEqual(cons.relaxation_relation, EQUALITY)
        self.assertTrue(cons.is_feasible([3, 5]))
        self.assertFalse(cons.is_feasible([3, 4]))
        self.assertFalse(cons.is_feasible([1, 7]))
        self.assertFalse(cons.is_feasible([2.5, 5.5]))

    def test_cost_budget(self):
        """A cost budget accepts lattice points that leave less than one cheapest unit unspent"""
        cons = ConstraintSet.from_design(two_strata(CostBudget((1.0, 2.0), 10.0, 100.0)))
        self.assertEqual(cons.b, 90.0)
        self.assertFalse(cons.unit_costs)
        self.assertEqual(cons.relaxation_relation, AT_MOST)
        self.assertTrue(cons.is_feasible([10, 40]))
        self.assertFalse(cons.is_feasible([9, 40]))
        self.assertFalse(cons.is_feasible([12, 40]))
        self.assertEqual(cons.slack([10, 40]), 0.0)

    def test_missing_budget(self):
        """A design without a budget has no constraint set"""
        with self.assertRaises(ValidationError):
            ConstraintSet.from_design(two_strata())

    def test_invalid_rows(self):
        """Non-positive coefficients and unpayable bounds are refused"""
        with self.assertRaises(ValidationError):
            ConstraintSet(np.array([1.0, 0.0]), 10.0, EQUALITY, np.full(2, 2.0), np.full(2, 10.0))
        with self.assertRaises(InfeasibleProblemError):
            ConstraintSet(np.ones(2), 3.0, EQUALITY, np.full(2, 2.0), np.full(2, 10.0))
        with self.assertRaises(InfeasibleProblemError):
            ConstraintSet(np.ones(2), 21.0, EQUALITY, np.full(2, 2.0), np.full(2, 10.0))
        with self.assertRaises(ValidationError):
            ConstraintSet(np.ones(2), 8.0, "at-least", np.full(2, 2.0), np.full(2, 10.0))

    def test_single_point(self):
        """total_n = 2H leaves only the lower bounds"""
        cons = ConstraintSet.from_design(two_strata(TotalSampleBudget(4)))
        self.assertTrue(cons.is_single_point())
        self.assertFalse(ConstraintSet.from_design(two_strata(TotalSampleBudget(5))).is_single_point())

    def test_with_bounds(self):
        """Tightened bounds that cannot meet the budget raise"""
        cons = ConstraintSet.from_design(two_strata(TotalSampleBudget(8)))
        node = cons.with_bounds(np.array([3.0, 2.0]), np.array([3.0, 300.0]))
        self.assertTrue(node.is_feasible([3, 5]))
        with self.assertRaises(InfeasibleProblemError):
            cons.with_bounds(np.array([2.0, 2.0]), np.array([2.0, 3.0]))

    def test_round_to_lattice(self):
        """Floors, then adds units by largest fractional part"""
        cons = ConstraintSet.from_design(two_strata(TotalSampleBudget(8)))
        assert_array_equal(cons.round_to_lattice([2.6, 5.4]), [3, 5])
        assert_array_equal(cons.round_to_lattice([2.5, 5.5]), [3, 5])
        assert_array_equal(cons.round_to_lattice([4.0, 6.0]), [2, 6])

    def test_round_cost_budget(self):
        """Rounded cost allocations satisfy the lattice acceptance rule"""
        cons = ConstraintSet.from_design(two_strata(CostBudget((1.0, 2.0), 10.0, 100.0)))
        n = cons.round_to_lattice([20.3, 34.85])
        self.assertTrue(cons.is_feasible(n))

    def test_random_point(self):
        """Random starts lie on the budget level inside the box"""
        cons = ConstraintSet.from_design(two_strata(TotalSampleBudget(50)))
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = cons.random_point(rng)
            self.assertAlmostEqual(float(x.sum()), 50.0, places=8)
            self.assertTrue(np.all(x >= cons.lower) and np.all(x <= cons.upper))


class TestApportion(unittest.TestCase):

    def test_largest_remainder(self):
        """Leftover units go to the largest fractional parts"""
        assert_array_equal(apportion([2.2, 3.5, 4.3], 10, np.full(3, 2), np.full(3, 10)), [2, 4, 4])

    def test_ties_favour_lower_index(self):
        """Equal remainders resolve to the first stratum"""
        assert_array_equal(apportion([2.5, 2.5], 5, np.full(2, 2), np.full(2, 10)), [3, 2])

    def test_bounds_pinned(self):
        """Quotas outside the box are pinned and the rest rescaled"""
        assert_array_equal(apportion([0.0, 50.0, 50.0], 20, np.full(3, 2), np.array([10, 8, 100])), [2, 8, 10])

    def test_total_out_of_range(self):
        """The total must fit between the bound sums"""
        with self.assertRaises(InfeasibleProblemError):
            apportion([1.0, 1.0], 3, np.full(2, 2), np.full(2, 10))


if __name__ == '__main__':
    unittest.main()
