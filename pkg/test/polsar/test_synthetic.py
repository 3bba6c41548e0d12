import unittest

import numpy as np
from numpy.testing import assert_array_equal

from crpmnet.polsar.synthetic import SyntheticSceneSpec, auto_covariances, synth_wishart_scene
from crpmnet.shared.exceptions import ConfigError


class SyntheticSceneTestCase(unittest.TestCase):
    def test_same_seed_same_scene(self):
        spec = SyntheticSceneSpec(classes=3, height=12, width=15, looks=4, seed=5)
        first, second = synth_wishart_scene(spec), synth_wishart_scene(spec)
        assert_array_equal(first.planes, second.planes)
        assert_array_equal(first.labels, second.labels)

    def test_other_seed_other_scene(self):
        first = synth_wishart_scene(SyntheticSceneSpec(height=8, width=8, seed=1))
        second = synth_wishart_scene(SyntheticSceneSpec(height=8, width=8, seed=2))
        self.assertFalse(np.array_equal(first.planes, second.planes))

    def test_too_few_looks(self):
        with self.assertRaises(ConfigError):
            SyntheticSceneSpec(looks=2)

    def test_unknown_layout(self):
        with self.assertRaises(ConfigError):
            SyntheticSceneSpec(layout="stripes")

    def test_covariance_count_must_match_classes(self):
        with self.assertRaises(ConfigError):
            SyntheticSceneSpec(classes=3, covariances=auto_covariances(2))

    def test_covariance_must_be_positive_definite(self):
        bad = [np.eye(3, dtype=np.complex128), -np.eye(3, dtype=np.complex128)]
        with self.assertRaises(ConfigError):
            synth_wishart_scene(SyntheticSceneSpec(classes=2, height=4, width=4, covariances=bad))

    def test_checkerboard_labels(self):
        scene = synth_wishart_scene(SyntheticSceneSpec(classes=3, height=9, width=9, seed=1))
        self.assertEqual(scene.class_count, 3)
        self.assertEqual(scene.class_pixel_counts, {1: 27, 2: 27, 3: 27})
        self.assertEqual(scene.labels[0, 0], 1)
        self.assertEqual(scene.labels[0, 3], 2)
        self.assertEqual(scene.labels[3, 3], 3)

    def test_voronoi_labels_every_pixel(self):
        scene = synth_wishart_scene(SyntheticSceneSpec(classes=4, height=20, width=30, layout="voronoi", seed=2))
        self.assertTrue((scene.labels >= 1).all())
        self.assertTrue((scene.labels <= 4).all())

    def test_sample_mean_approaches_class_covariance(self):
        scene = synth_wishart_scene(SyntheticSceneSpec(classes=2, height=64, width=64, looks=4, seed=3))
        sigma = auto_covariances(2)
        for klass in (1, 2):
            mask = scene.labels == klass
            mean = scene.matrices[mask].mean(axis=0)
            np.testing.assert_allclose(mean, sigma[klass - 1], atol=0.06)

    def test_diagonals_are_non_negative(self):
        scene = synth_wishart_scene(SyntheticSceneSpec(classes=3, height=10, width=10, looks=3, seed=4))
        for name in ("C11", "C22", "C33"):
            self.assertTrue((scene.entry(name).real >= 0).all())
            assert_array_equal(scene.entry(name).imag, 0.0)

    def test_pixel_matrices_are_positive_semi_definite(self):
        for looks in (3, 4, 9):
            scene = synth_wishart_scene(SyntheticSceneSpec(classes=3, height=12, width=12, looks=looks, seed=looks))
            matrices = scene.matrices
            assert_array_equal(matrices, np.conj(np.swapaxes(matrices, -1, -2)))
            eigenvalues = np.linalg.eigvalsh(matrices)
            scale = np.trace(matrices, axis1=-2, axis2=-1).real
            self.assertTrue((eigenvalues[..., 0] >= -1e-10 * (1 + scale)).all())
