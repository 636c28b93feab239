import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from stratalloc.core.exceptions import ValidationError
from stratalloc.simulation.sampler import decomposition_residual, srswor, srswor_indices, xi_statistic


class TestSrswor(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(2)

    def test_distinct_indices(self):
        """Samples hold n distinct units of the population"""
        for _ in range(50):
            indices = srswor_indices(20, 7, self.rng)
            self.assertEqual(len(indices), 7)
            self.assertEqual(len(set(indices.tolist())), 7)
            self.assertTrue(np.all((indices >= 0) & (indices < 20)))

    def test_census(self):
        """n = N returns every unit"""
        assert_array_equal(np.sort(srswor_indices(6, 6, self.rng)), np.arange(6))

    def test_inclusion_probabilities(self):
        """Every unit is drawn with probability n/N"""
        counts = np.zeros(5)
        draws = 20000
        for _ in range(draws):
            counts[srswor_indices(5, 2, self.rng)] += 1
        assert_allclose(counts / draws, np.full(5, 0.4), atol=0.02)

    def test_sample_size_bounds(self):
        """n must lie in [2, N]"""
        with self.assertRaises(ValidationError):
            srswor_indices(10, 1, self.rng)
        with self.assertRaises(ValidationError):
            srswor_indices(10, 11, self.rng)

    def test_seeded_draws_repeat(self):
        """Equal seeds give equal samples"""
        population = np.arange(40.0).reshape(20, 2)
        first = srswor(population, 5, np.random.default_rng(4))
        second = srswor(population, 5, np.random.default_rng(4))
        assert_array_equal(first, second)
        self.assertEqual(first.shape, (5, 2))


class TestSampleStatistics(unittest.TestCase):

    def test_xi_statistic(self):
        """Values 1 and 3 around a population mean of 0 give (1 + 9) / 1"""
        assert_allclose(xi_statistic(np.array([[1.0], [3.0]]), [0.0]), [10.0])

    def test_xi_needs_two_units(self):
        """A single unit has no Xi statistic"""
        with self.assertRaises(ValidationError):
            xi_statistic(np.array([[1.0, 2.0]]), [0.0, 0.0])

    def test_decomposition_identity(self):
        """s = Xi - n/(n-1) (ybar - Ybar)(ybar - Ybar)' holds to rounding"""
        rng = np.random.default_rng(8)
        for _ in range(20):
            sample = rng.standard_normal((12, 3)) * 5.0 + 2.0
            self.assertLess(decomposition_residual(sample, rng.standard_normal(3)), 1e-12)


if __name__ == '__main__':
    unittest.main()
