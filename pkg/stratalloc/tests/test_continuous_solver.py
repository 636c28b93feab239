import dataclasses
import unittest

import numpy as np
from numpy.testing import assert_allclose

from stratalloc.core.data_loader import DesignLoader
from stratalloc.core.exceptions import SolverError
from stratalloc.core.strata import CostBudget, StratumSummary, SurveyDesign, TotalSampleBudget
from stratalloc.models.objective_builder import ModelSpec, ObjectiveHandle, build_objective
from stratalloc.optimization.constraints import ConstraintSet
from stratalloc.optimization.continuous_solver import ContinuousOptions, solve_continuous, solve_separable


def two_strata(first_size, first_variance, budget):
    return SurveyDesign(
        (
            StratumSummary("1", first_size, np.array([[first_variance]])),
            StratumSummary("2", 300, np.array([[1.0]])),
        ),
        budget,
    )


class TestSeparableRelaxation(unittest.TestCase):

    def test_interior_optimum(self):
        """Without active bounds the optimum is proportional to W_h sqrt(t_h)"""
        design = two_strata(100, 4.0, TotalSampleBudget(40))
        objective = build_objective(design, ModelSpec("deterministic"))
        result = solve_continuous(objective, ConstraintSet.from_design(design))
        self.assertTrue(result.exact)
        self.assertEqual(result.method, "lagrangian")
        assert_allclose(result.x, [16.0, 24.0], rtol=1e-12)

    def test_upper_bound_active(self):
        """A stratum whose share exceeds N_h is censused and the rest moves on"""
        design = two_strata(10, 10000.0, TotalSampleBudget(100))
        objective = build_objective(design, ModelSpec("deterministic"))
        result = solve_separable(objective.separable, ConstraintSet.from_design(design))
        assert_allclose(result.x, [10.0, 90.0], rtol=1e-12)

    def test_cost_budget_level(self):
        """The relaxation spends the whole cost budget"""
        design = two_strata(100, 4.0, CostBudget((1.0, 3.0), 0.0, 120.0))
        cons = ConstraintSet.from_design(design)
        result = solve_continuous(build_objective(design, ModelSpec("deterministic")), cons)
        self.assertAlmostEqual(float(cons.a @ result.x), 120.0, places=9)

    def test_zero_variance_stratum(self):
        """Strata without variance stay at the lower bound"""
        design = two_strata(100, 0.0, TotalSampleBudget(40))
        result = solve_continuous(build_objective(design, ModelSpec("deterministic")), ConstraintSet.from_design(design))
        assert_allclose(result.x, [2.0, 38.0], rtol=1e-12)


class TestMultistartRelaxation(unittest.TestCase):

    def setUp(self):
        """E-model on the forest survey, also wrapped without its separable form"""
        self.design = DesignLoader("table1").load_design().with_budget(TotalSampleBudget(1000))
        self.cons = ConstraintSet.from_design(self.design)
        self.objective = build_objective(self.design, ModelSpec("E"))
        self.opaque = dataclasses.replace(self.objective, separable=None)

    def test_slsqp_agrees_with_exact_solution(self):
        """SLSQP multistart reaches the closed-form relaxation value"""
        exact = solve_continuous(self.objective, self.cons)
        approximate = solve_continuous(self.opaque, self.cons, ContinuousOptions(restarts=2, seed=1))
        self.assertFalse(approximate.exact)
        self.assertEqual(approximate.method, "slsqp-multistart")
        self.assertEqual(len(approximate.local_optima), 3)
        self.assertLess(abs(approximate.value / exact.value - 1.0), 1e-6)
        self.assertAlmostEqual(float(approximate.x.sum()), 1000.0, places=4)

    def test_threads_give_same_result(self):
        """Parallel start points do not change the answer"""
        serial = solve_continuous(self.opaque, self.cons, ContinuousOptions(restarts=2, seed=3))
        threaded = solve_continuous(self.opaque, self.cons, ContinuousOptions(restarts=2, seed=3, workers=2))
        assert_allclose(serial.x, threaded.x)

    def test_no_finite_start(self):
        """An objective that is never finite raises SolverError"""
        broken = ObjectiveHandle(self.design, ModelSpec("deterministic"), lambda n: np.inf)
        with self.assertRaises(SolverError):
            solve_continuous(broken, self.cons, ContinuousOptions(restarts=1))


if __name__ == '__main__':
    unittest.main()
