import unittest

import numpy as np
import pytest

from crpmnet.engine.gradcheck import (
    GRADIENT_CHECKS,
    CheckResult,
    check_cconv2d,
    check_cs_cnn,
    check_riap_head,
    numeric_gradient,
    relative_error,
    run_gradient_checks,
)
from crpmnet.shared.constants import GRADCHECK_INSTANCES


class RelativeErrorTestCase(unittest.TestCase):
    def test_identical_arrays(self):
        self.assertEqual(relative_error(np.array([1.0, -2.0]), np.array([1.0, -2.0])), 0.0)

    def test_scaled_by_largest_magnitude(self):
        self.assertAlmostEqual(relative_error(np.array([1.0, 4.0]), np.array([1.0, 3.0])), 0.25)

    def test_zero_gradients(self):
        self.assertEqual(relative_error(np.zeros(3), np.zeros(3)), 0.0)

    def test_check_result_passes_below_tolerance(self):
        self.assertTrue(CheckResult("crelu", 1e-9, 3, 1e-5).passed)
        self.assertFalse(CheckResult("crelu", 1e-5, 3, 1e-5).passed)


class NumericGradientTestCase(unittest.TestCase):
    def test_quadratic(self):
        values = np.array([1.0, -2.0, 0.5])
        grad = numeric_gradient(lambda: float(np.sum(values**2)), values)
        np.testing.assert_allclose(grad, 2 * np.array([1.0, -2.0, 0.5]), rtol=1e-8)
        np.testing.assert_array_equal(values, [1.0, -2.0, 0.5])

    def test_selected_coordinates(self):
        values = np.array([[1.0, 2.0], [3.0, 4.0]])
        grad = numeric_gradient(lambda: float(np.sum(values**3)), values, coordinates=[3])
        self.assertEqual(grad[0, 0], 0.0)
        self.assertAlmostEqual(grad[1, 1], 48.0, places=5)


class GradientCheckTestCase(unittest.TestCase):
    def test_every_check_passes(self):
        results = run_gradient_checks(seed=0, tolerance=1e-5, instances=2)
        self.assertEqual([result.name for result in results], list(GRADIENT_CHECKS))
        for result in results:
            self.assertTrue(result.passed, f"{result.name}: {result.max_error:.3e}")
            self.assertEqual(result.instances, 2)

    def test_corrupted_check_alone_fails(self):
        results = run_gradient_checks(seed=1, tolerance=1e-5, instances=1, corrupt="riap_head")
        failed = [result.name for result in results if not result.passed]
        self.assertEqual(failed, ["riap_head"])

    def test_same_seed_same_errors(self):
        first = check_cconv2d(np.random.default_rng(4))
        second = check_cconv2d(np.random.default_rng(4))
        self.assertEqual(first, second)

    def test_corruption_is_detected(self):
        self.assertGreater(check_riap_head(np.random.default_rng(2), corrupt=True), 1e-2)

    def test_unknown_check(self):
        with self.assertRaises(KeyError):
            run_gradient_checks(instances=1, corrupt="dropout")

    def test_patch_classifier_every_coordinate(self):
        error = check_cs_cnn(np.random.default_rng(6), coordinates=None)
        self.assertLess(error, 1e-4)


@pytest.mark.slow
class FullGradientCheckTestCase(unittest.TestCase):
    def test_default_instances_pass(self):
        results = run_gradient_checks(instances=GRADCHECK_INSTANCES)
        self.assertEqual(len(results), len(GRADIENT_CHECKS))
        for result in results:
            self.assertEqual(result.instances, GRADCHECK_INSTANCES)
            self.assertTrue(result.passed, f"{result.name}: {result.max_error:.3e}")
