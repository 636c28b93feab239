import unittest

import numpy as np
from numpy.testing import assert_allclose

from stratalloc.acceptance.acceptance_suite import random_design
from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import MissingMomentError, UnsupportedModelError, ValidationError
from stratalloc.core.strata import StratumSummary, SurveyDesign
from stratalloc.processing import determinant_model
from stratalloc.processing.moment_formulas import cov_vech_cov


class TestDeterminantConstants(unittest.TestCase):

    def test_constants(self):
        """The Gamma-function constants reduce to -1/2 and 3/2"""
        self.assertAlmostEqual(determinant_model.EXPECTATION_CONSTANT, -0.5, places=14)
        self.assertAlmostEqual(determinant_model.VARIANCE_CONSTANT, 1.5, places=14)

    def test_moments_from_determinant(self):
        """|N| = 16 gives -1 and 6; |N| = 1 gives -1/2 and 3/2; |N| = 0 gives zeros"""
        self.assertAlmostEqual(determinant_model.expectation_from_determinant(16.0), -1.0, places=12)
        self.assertAlmostEqual(determinant_model.variance_from_determinant(16.0), 6.0, places=12)
        self.assertAlmostEqual(determinant_model.expectation_from_determinant(1.0), -0.5, places=12)
        self.assertAlmostEqual(determinant_model.variance_from_determinant(1.0), 1.5, places=12)
        self.assertEqual(determinant_model.expectation_from_determinant(0.0), 0.0)
        self.assertEqual(determinant_model.variance_from_determinant(0.0), 0.0)

    def test_negative_determinant_clamped(self):
        """Round-off negatives are clamped to zero with a warning"""
        with self.assertLogs("stratalloc.processing.determinant_model", level="WARNING"):
            self.assertEqual(determinant_model.clamp_determinant(-1e-20), 0.0)
        self.assertEqual(determinant_model.clamp_determinant(2.0), 2.0)

    def test_density_at_zero(self):
        """g(0) = 1/sqrt(2)"""
        self.assertAlmostEqual(determinant_model.det_density(0.0), 1.0 / np.sqrt(2.0), places=14)

    def test_density_rejects_negative_argument(self):
        """g is defined for z >= 0 only"""
        with self.assertRaises(ValidationError):
            determinant_model.det_density(-1.0)

    def test_density_is_finite_for_large_arguments(self):
        """The scaled complementary error function avoids overflow"""
        value = determinant_model.det_density(700.0)
        self.assertTrue(np.isfinite(value))
        self.assertGreaterEqual(value, 0.0)

    def test_density_mass(self):
        """The stated density integrates to 1 - 1/sqrt(2), and it is not renormalized"""
        self.assertAlmostEqual(determinant_model.density_mass(), 1.0 - 1.0 / np.sqrt(2.0), places=8)


class TestDeterminantModel(unittest.TestCase):

    def setUp(self):
        """Two-characteristic design with consistent vec and vech fourth moments"""
        self.rng = np.random.default_rng(5)
        self.design = random_design(self.rng, [40, 60, 80])
        self.n = np.array([6.0, 10.0, 12.0])

    def test_vech_sandwich_matches_cov_vech_cov(self):
        """Dpinv N Dpinv' equals the covariance of vech Cov_hat"""
        N = determinant_model.det_model_N(self.design, self.n)
        Dpinv = matrix_kit.duplication(2).Dpinv
        expected = cov_vech_cov(self.design, self.n)
        assert_allclose(Dpinv @ N @ Dpinv.T, expected, rtol=1e-10, atol=1e-12 * np.abs(expected).max())

    def test_basis_choice(self):
        """The vech basis feeds the determinant of the reduced matrix"""
        N = determinant_model.det_model_N(self.design, self.n)
        det_vech = determinant_model.determinant(N, "vech")
        self.assertGreater(det_vech, 0.0)
        self.assertAlmostEqual(
            determinant_model.det_expectation(self.design, self.n, "vech") / (-0.5 * det_vech**0.25), 1.0, places=10
        )
        self.assertAlmostEqual(
            determinant_model.det_variance(self.design, self.n, "vech") / (1.5 * det_vech**0.5), 1.0, places=10
        )
        with self.assertRaises(ValidationError):
            determinant_model.determinant(N, "diag")

    def test_vec_basis_is_singular(self):
        """Repeated (i, j) and (j, i) rows make the vec-form determinant vanish"""
        N = determinant_model.det_model_N(self.design, self.n)
        assert_allclose(N[1], N[2])
        diagnostics = determinant_model.diagnose(self.design, self.n)
        self.assertEqual(diagnostics.structural_rank_deficit, 1)
        self.assertGreaterEqual(diagnostics.kronecker_residual, 0.0)
        self.assertGreater(diagnostics.det_vech, 0.0)

    def test_requires_two_characteristics(self):
        """G other than 2 is unsupported"""
        design = random_design(self.rng, [20, 30], G=3)
        with self.assertRaises(UnsupportedModelError):
            determinant_model.det_expectation(design, [5, 5])
        with self.assertRaises(UnsupportedModelError):
            determinant_model.det_variance(design, [5, 5])

    def test_requires_vec_fourth_moments(self):
        """Without m4_vec the matrix N cannot be formed"""
        design = SurveyDesign((StratumSummary("1", 50, np.eye(2)), StratumSummary("2", 50, np.eye(2))))
        with self.assertRaises(MissingMomentError):
            determinant_model.det_model_N(design, [5, 5])


if __name__ == '__main__':
    unittest.main()
