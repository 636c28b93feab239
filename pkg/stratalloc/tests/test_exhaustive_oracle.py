import itertools
import unittest

import numpy as np

from stratalloc.core.data_loader import DesignLoader
from stratalloc.core.exceptions import LatticeTooLargeError
from stratalloc.core.strata import CostBudget, TotalSampleBudget
from stratalloc.models.objective_builder import ModelSpec, build_objective
from stratalloc.optimization.constraints import AT_MOST, ConstraintSet
from stratalloc.optimization.exhaustive_oracle import count_lattice, exhaustive_oracle, iter_lattice


class TestLatticeEnumeration(unittest.TestCase):

    def test_two_strata_count(self):
        """With H = 2 and loose upper bounds there are total_n - 3 allocations"""
        cons = ConstraintSet(np.ones(2), 12.0, "equality", np.full(2, 2.0), np.full(2, 50.0))
        points = [tuple(n) for n in iter_lattice(cons)]
        self.assertEqual(len(points), 9)
        self.assertEqual(count_lattice(cons), 9)
        self.assertEqual(points[0], (2, 10))
        self.assertEqual(points[-1], (10, 2))
        self.assertEqual(points, sorted(points))

    def test_unit_count_matches_enumeration(self):
        """The convolution count agrees with listing every point"""
        cons = ConstraintSet(np.ones(3), 15.0, "equality", np.full(3, 2.0), np.array([4.0, 9.0, 6.0]))
        expected = sum(
            1 for n in itertools.product(range(2, 5), range(2, 10), range(2, 7)) if sum(n) == 15
        )
        self.assertEqual(count_lattice(cons), expected)
        self.assertEqual(len(list(iter_lattice(cons))), expected)

    def test_cost_lattice_matches_filter(self):
        """Cost-budget enumeration lists exactly the feasible product points"""
        cons = ConstraintSet(np.array([1.0, 2.5, 4.0]), 30.0, "equality", np.full(3, 2.0), np.array([12.0, 8.0, 5.0]))
        listed = [tuple(n) for n in iter_lattice(cons)]
        expected = [
            n for n in itertools.product(range(2, 13), range(2, 9), range(2, 6)) if cons.is_feasible(np.array(n))
        ]
        self.assertEqual(listed, expected)
        self.assertEqual(count_lattice(cons), len(expected))

    def test_at_most_relation(self):
        """Inequality rows keep every point within the budget"""
        cons = ConstraintSet(np.ones(2), 6.0, AT_MOST, np.full(2, 2.0), np.full(2, 5.0))
        self.assertEqual(sorted(tuple(n) for n in iter_lattice(cons)), [(2, 2), (2, 3), (2, 4), (3, 2), (3, 3), (4, 2)])

    def test_count_stops_at_limit(self):
        """Counting is capped just above the limit"""
        cons = ConstraintSet(np.ones(3), 300.0, "equality", np.full(3, 2.0), np.full(3, 200.0))
        self.assertEqual(count_lattice(cons, limit=100), 101)


class TestExhaustiveOracle(unittest.TestCase):

    def setUp(self):
        self.toy = DesignLoader("toy_h2").load_design()

    def test_minimum_over_lattice(self):
        """The oracle value is the smallest objective over all allocations"""
        design = self.toy.with_budget(TotalSampleBudget(12))
        objective = build_objective(design, ModelSpec("V"))
        report = exhaustive_oracle(objective)
        cons = ConstraintSet.from_design(design)
        values = [objective(n.astype(float)) for n in iter_lattice(cons)]
        self.assertEqual(report.objective_value, min(values))
        self.assertEqual(report.nodes_explored, len(values))
        self.assertEqual(report.bound_gap, 0.0)
        self.assertEqual(report.method_trace, ("exhaustive",))

    def test_cost_budget(self):
        """Cost budgets are enumerated with the lattice acceptance rule"""
        design = self.toy.with_budget(CostBudget((1.0, 2.0), 1.0, 21.0))
        report = exhaustive_oracle(build_objective(design, ModelSpec("E")))
        self.assertGreaterEqual(report.slack, 0.0)
        self.assertLess(report.slack, 1.0)

    def test_lattice_too_large(self):
        """Enumeration beyond the limit is refused"""
        design = self.toy.with_budget(TotalSampleBudget(12))
        with self.assertRaises(LatticeTooLargeError):
            exhaustive_oracle(build_objective(design, ModelSpec("E")), limit=3)


if __name__ == '__main__':
    unittest.main()
