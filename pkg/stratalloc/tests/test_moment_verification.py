import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from stratalloc.core.exceptions import ValidationError
from stratalloc.simulation.moment_verification import UNCORRECTED, SimConfig, verify_lemma1_moments, verify_mean_clt
from stratalloc.simulation.population import synthesize_stratum


def gaussian_population(size, seed=0):
    rng = np.random.default_rng(seed)
    return synthesize_stratum(np.array([[4.0, 1.5], [1.5, 2.0]]), size, "gaussian", rng)


class TestSimConfig(unittest.TestCase):

    def test_validation(self):
        """Sample size, replications and workers are checked"""
        population = gaussian_population(20)
        self.assertEqual(SimConfig(population, 5).N, 20)
        self.assertEqual(SimConfig(population, 5).G, 2)
        with self.assertRaises(ValidationError):
            SimConfig(population, 21)
        with self.assertRaises(ValidationError):
            SimConfig(population, 1)
        with self.assertRaises(ValidationError):
            SimConfig(population, 5, reps=0)
        with self.assertRaises(ValidationError):
            SimConfig(population, 5, workers=0)


class TestCovarianceMoments(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        """One simulation shared by the assertions below"""
        cls.population = gaussian_population(500, seed=1)
        cls.report = verify_lemma1_moments(SimConfig(cls.population, 10, reps=2000, seed=3))

    def test_moments_agree(self):
        """Empirical mean and covariance of vech Xi match the theory"""
        self.assertTrue(self.report.mean_within_limit)
        self.assertTrue(self.report.cov_within_limit)
        self.assertEqual(self.report.statistic, "vech Xi")
        self.assertEqual(self.report.empirical_mean.shape, (3,))
        self.assertEqual(self.report.empirical_cov.shape, (3, 3))

    def test_theoretical_mean(self):
        """E vech Xi = n/(n-1) vech S"""
        assert_allclose(self.report.theoretical_mean, 10.0 / 9.0 * np.array([4.0, 1.5, 2.0]), rtol=1e-10)

    def test_uncorrected_alternative(self):
        """The form without the finite-population factor is larger by (N - 1)/(N - n)"""
        uncorrected = self.report.alternatives[UNCORRECTED]
        assert_allclose(uncorrected, self.report.theoretical_cov * 499.0 / 490.0)
        self.assertIn(UNCORRECTED, self.report.alternative_max_z)

    def test_decomposition_identity(self):
        """Every draw satisfies s = Xi - n/(n-1) (ybar - Ybar)(ybar - Ybar)'"""
        self.assertLessEqual(self.report.identity_residual, 1e-12)

    def test_shape_statistics(self):
        """Skewness and kurtosis come with their large-sample standard errors"""
        self.assertEqual(self.report.skewness.shape, (3,))
        self.assertAlmostEqual(self.report.skewness_se, np.sqrt(6.0 / 2000))
        self.assertAlmostEqual(self.report.kurtosis_se, np.sqrt(24.0 / 2000))


class TestLargeSamplingFraction(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        """Half of the population is sampled, so the finite-population factor is 199/399"""
        cls.report = verify_lemma1_moments(SimConfig(gaussian_population(400, seed=8), 200, reps=2000, seed=9))

    def test_finite_population_form_is_asserted(self):
        """The simulated covariance matches the corrected form within the limit"""
        self.assertTrue(self.report.mean_within_limit)
        self.assertTrue(self.report.cov_within_limit)
        self.assertLess(float(np.max(np.abs(self.report.cov_z))), 10.0)

    def test_uncorrected_form_is_rejected(self):
        """Dropping the factor doubles the covariance, far outside the limit"""
        assert_allclose(self.report.alternatives[UNCORRECTED], self.report.theoretical_cov * 399.0 / 199.0)
        self.assertGreater(self.report.alternative_max_z[UNCORRECTED], 10.0)


class TestMeanMoments(unittest.TestCase):

    def test_finite_population_form_matches(self):
        """The sample mean follows (1/n - 1/N) N/(N-1) S"""
        report = verify_mean_clt(SimConfig(gaussian_population(50, seed=2), 10, reps=3000, seed=5))
        self.assertEqual(report.matched, "finite-population")
        self.assertTrue(report.mean_within_limit)
        self.assertTrue(report.cov_within_limit)

    def test_census_has_no_spread(self):
        """Sampling every unit reproduces the population mean exactly"""
        population = gaussian_population(12, seed=4)
        report = verify_mean_clt(SimConfig(population, 12, reps=50, seed=0))
        assert_allclose(report.empirical_cov, np.zeros((2, 2)), atol=1e-24)
        assert_array_equal(report.cov_z, np.zeros((2, 2)))
        self.assertEqual(report.matched, "finite-population")


class TestReproducibility(unittest.TestCase):

    def test_worker_count_does_not_matter(self):
        """Chunked seeding makes serial and parallel runs identical"""
        population = gaussian_population(100, seed=7)
        serial = verify_lemma1_moments(SimConfig(population, 8, reps=1200, seed=11, workers=1))
        again = verify_lemma1_moments(SimConfig(population, 8, reps=1200, seed=11, workers=1))
        parallel = verify_lemma1_moments(SimConfig(population, 8, reps=1200, seed=11, workers=2))
        assert_array_equal(serial.empirical_mean, again.empirical_mean)
        assert_array_equal(serial.empirical_mean, parallel.empirical_mean)
        assert_array_equal(serial.empirical_cov, parallel.empirical_cov)


if __name__ == '__main__':
    unittest.main()
