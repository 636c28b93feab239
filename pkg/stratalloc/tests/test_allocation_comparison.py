import unittest

from stratalloc.core.data_loader import DesignLoader
from stratalloc.core.strata import Allocation, TotalSampleBudget
from stratalloc.models.allocation_comparison import AllocationComparator


class TestAllocationComparator(unittest.TestCase):

    def test_summary_design_comparison(self):
        """Comparing Neyman rows and the deterministic optimum on the forest survey."""
        design = DesignLoader("table1").load_design().with_budget(TotalSampleBudget(1000))
        comparator = AllocationComparator(design)

        # Without fourth moments only the deterministic model is solved
        with self.assertLogs("stratalloc.models.allocation_comparison", level="WARNING"):
            specs = comparator.default_specs()
        self.assertEqual([name for name, _ in specs], ["Deterministic"])

        candidates = comparator.candidate_allocations(specs)
        self.assertEqual([name for name, _, _ in candidates], ["Neyman BA", "Neyman Vol", "Deterministic"])
        for _, allocation, _ in candidates:
            self.assertEqual(allocation.total, 1000)

        best_name, best_allocation, allocation_variances, total_ranks = comparator.compare_allocations(candidates)

        # Each characteristic ranks the three candidates 1..3
        self.assertIn(best_name, total_ranks)
        self.assertIsInstance(best_allocation, Allocation)
        for characteristic in ("BA", "Vol"):
            ranks = sorted(total_ranks[name][characteristic] for name in total_ranks)
            self.assertEqual(ranks, [1, 2, 3])
        self.assertEqual(total_ranks["Neyman BA"]["BA"], 1)
        self.assertAlmostEqual(allocation_variances["Neyman BA"]["BA"], 5.591, delta=0.03)
        best_average = total_ranks[best_name]["average_rank"]
        self.assertTrue(all(best_average <= ranks["average_rank"] for ranks in total_ranks.values()))

    def test_stochastic_models_included(self):
        """Designs with fourth moments add the stochastic models."""
        design = DesignLoader("toy_h2").load_design().with_budget(TotalSampleBudget(8))
        comparator = AllocationComparator(design)
        names = [name for name, _ in comparator.default_specs()]
        self.assertEqual(names, ["Deterministic", "Modified E (k=0.5)", "E-model", "V-model"])
        names = [name for name, _ in comparator.default_specs(tau=1.0)]
        self.assertEqual(names[-1], "P-model (tau=1)")

        candidates = comparator.candidate_allocations(comparator.default_specs())
        self.assertEqual(len(candidates), 6)
        for _, allocation, report in candidates:
            self.assertEqual(allocation.total, 8)
            if report is not None:
                self.assertEqual(report.allocation, allocation)
        best_name, _, allocation_variances, _ = comparator.compare_allocations(candidates)
        self.assertIn(best_name, allocation_variances)
        self.assertEqual(set(allocation_variances[best_name]), {"y1", "y2"})


if __name__ == '__main__':
    unittest.main()
