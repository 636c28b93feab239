import unittest

import numpy as np
from numpy.testing import assert_allclose

from stratalloc.core.data_loader import DesignLoader
from stratalloc.core.exceptions import InfeasibleProblemError
from stratalloc.core.strata import Allocation, StratumSummary, SurveyDesign, TotalSampleBudget
from stratalloc.models.neyman_allocation import neyman_allocation, neyman_quotas, variance_report

TABLE2_BA = (10, 94, 144, 136, 191, 113, 81, 109, 122)
TABLE2_VOL = (7, 62, 119, 136, 200, 161, 98, 134, 83)


class TestNeymanAllocation(unittest.TestCase):

    def setUp(self):
        """Table-1 design with a total sample size of 1000"""
        self.design = DesignLoader("table1").load_design().with_budget(TotalSampleBudget(1000))

    def test_published_rows(self):
        """Single-characteristic optima reproduce the published rows within one unit"""
        for j, row in ((0, TABLE2_BA), (1, TABLE2_VOL)):
            allocation = neyman_allocation(self.design, j)
            self.assertEqual(allocation.total, 1000)
            self.assertLessEqual(int(np.abs(np.array(allocation.sizes) - row).max()), 1)

    def test_characteristic_by_name(self):
        """Names resolve to the same allocation as indices"""
        self.assertEqual(neyman_allocation(self.design, "Vol"), neyman_allocation(self.design, 1))

    def test_published_variances(self):
        """Variances at the published rows match within 0.5%"""
        assert_allclose(variance_report(self.design, np.array(TABLE2_BA, dtype=float)), [5.591, 5441.105], rtol=5e-3)
        assert_allclose(variance_report(self.design, Allocation(TABLE2_VOL)), [5.953, 5139.531], rtol=5e-3)

    def test_quotas_are_proportional(self):
        """Continuous quotas are proportional to N_h s_hj and sum to the total"""
        quotas = neyman_quotas(self.design, 0, 1000)
        self.assertAlmostEqual(quotas.sum(), 1000.0)
        mass = self.design.sizes * np.sqrt([stratum.covariance[0, 0] for stratum in self.design.strata])
        assert_allclose(quotas / quotas.sum(), mass / mass.sum())

    def test_lower_bound_pinned(self):
        """A stratum with zero variance still receives two units"""
        design = SurveyDesign(
            (StratumSummary("1", 100, np.zeros((1, 1))), StratumSummary("2", 100, np.ones((1, 1)))),
            TotalSampleBudget(20),
        )
        self.assertEqual(neyman_allocation(design, 0).sizes, (2, 18))

    def test_total_out_of_range(self):
        """total_n must lie in [2H, N]"""
        with self.assertRaises(InfeasibleProblemError):
            neyman_allocation(self.design, 0, total_n=17)
        with self.assertRaises(InfeasibleProblemError):
            neyman_allocation(self.design, 0, total_n=self.design.N + 1)

    def test_needs_total_sample_size(self):
        """Without a total-sample budget the caller must pass total_n"""
        design = DesignLoader("table1").load_design()
        with self.assertRaises(InfeasibleProblemError):
            neyman_allocation(design, 0)
        self.assertEqual(neyman_allocation(design, 0, total_n=500).total, 500)


if __name__ == '__main__':
    unittest.main()
