import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from stratalloc.core.data_loader import DesignLoader
from stratalloc.core.exceptions import ValidationError
from stratalloc.processing.moment_formulas import population_covariance
from stratalloc.simulation.population import synthesize_design, synthesize_population, synthesize_stratum


class TestSynthesizeStratum(unittest.TestCase):

    def setUp(self):
        self.target = np.array([[4.0, 1.5], [1.5, 2.0]])
        self.rng = np.random.default_rng(12)

    def test_covariance_matches_target(self):
        """The divisor-N covariance of the synthesized population equals the target"""
        for distribution in ("gaussian", "lognormal"):
            population = synthesize_stratum(self.target, 300, distribution, self.rng)
            self.assertEqual(population.shape, (300, 2))
            assert_allclose(population_covariance(population), self.target, rtol=1e-10, atol=1e-12)
            assert_allclose(population.mean(axis=0), [0.0, 0.0], atol=1e-10)

    def test_mean_offset(self):
        """An explicit mean moves the population"""
        population = synthesize_stratum(self.target, 50, rng=self.rng, mean=[10.0, -1.0])
        assert_allclose(population.mean(axis=0), [10.0, -1.0], atol=1e-10)

    def test_singular_target(self):
        """A rank-deficient target is matched on a line"""
        target = np.array([[1.0, 2.0], [2.0, 4.0]])
        population = synthesize_stratum(target, 40, rng=self.rng)
        assert_allclose(population_covariance(population), target, rtol=1e-10, atol=1e-10)

    def test_invalid_requests(self):
        """Non-PSD targets, unknown distributions and tiny populations are refused"""
        with self.assertRaises(ValidationError):
            synthesize_stratum(np.array([[1.0, 2.0], [2.0, 1.0]]), 50, rng=self.rng)
        with self.assertRaises(ValidationError):
            synthesize_stratum(self.target, 50, "uniform", self.rng)
        with self.assertRaises(ValidationError):
            synthesize_stratum(self.target, 2, rng=self.rng)


class TestSynthesizeDesign(unittest.TestCase):

    def setUp(self):
        """Toy pilot design, small enough to synthesize quickly"""
        self.design = DesignLoader("toy_h2").load_design()

    def test_population_sizes(self):
        """One population per stratum sized N_h"""
        population = synthesize_population(self.design, seed=3)
        assert_array_equal(population.sizes, self.design.sizes)

    def test_seeded_populations_repeat(self):
        """Equal seeds give equal populations; different seeds do not"""
        first = synthesize_population(self.design, seed=3)
        second = synthesize_population(self.design, seed=3)
        other = synthesize_population(self.design, seed=4)
        for a, b, c in zip(first.strata_data, second.strata_data, other.strata_data):
            assert_array_equal(a, b)
            self.assertFalse(np.array_equal(a, c))

    def test_fourth_moments_added(self):
        """Covariances are kept and the kernels are positive semidefinite"""
        synthesized = synthesize_design(self.design, "lognormal", seed=1)
        self.assertTrue(synthesized.has_fourth_moments)
        self.assertTrue(synthesized.has_vec_fourth_moments)
        self.assertEqual(synthesized.characteristic_names, self.design.characteristic_names)
        for original, stratum in zip(self.design.strata, synthesized.strata):
            assert_array_equal(stratum.covariance, original.covariance)
            self.assertEqual(stratum.pilot_size, original.pilot_size)
            self.assertTrue(stratum.kernel_is_psd())


if __name__ == '__main__':
    unittest.main()
