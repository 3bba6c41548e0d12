import os
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from crpmnet.engine.ctensor import CTensor
from crpmnet.polsar.features import (
    FeatureScene,
    NormalizationStats,
    build_band_features,
    build_features,
    features_complex,
    features_real,
    stack_bands,
    zscore_normalize,
)
from crpmnet.polsar.scene import CovarianceScene
from crpmnet.shared.exceptions import ConfigError, IncompatibleDataError


def identity_scene(height=2, width=3):
    planes = np.zeros((6, height, width), dtype=np.complex128)
    planes[[0, 3, 5]] = 1.0
    return CovarianceScene(planes)


class FeatureVectorTestCase(unittest.TestCase):
    def test_identity_covariance_complex(self):
        features = features_complex(identity_scene()).features
        self.assertEqual(features.shape, (6, 2, 3))
        assert_array_equal(features.real[:3], 1.0)
        assert_array_equal(features.real[3:], 0.0)
        assert_array_equal(features.imag[:3], 1e-8)
        assert_array_equal(features.imag[3:], 0.0)

    def test_complex_channel_order(self):
        planes = np.zeros((6, 1, 1), dtype=np.complex128)
        # stored order C11, C12, C13, C22, C23, C33
        planes[:, 0, 0] = [1, 2 + 3j, 4 + 5j, 6, 7 + 8j, 9]
        features = features_complex(CovarianceScene(planes))
        self.assertEqual(features.channels, ["C11", "C22", "C33", "C12", "C13", "C23"])
        assert_array_equal(features.features.to_complex()[3:, 0, 0], [2 + 3j, 4 + 5j, 7 + 8j])
        assert_array_equal(features.features.real[:3, 0, 0], [1, 6, 9])

    def test_real_channel_order(self):
        planes = np.zeros((6, 1, 1), dtype=np.complex128)
        planes[:, 0, 0] = [1, 2 + 3j, 4 + 5j, 6, 7 + 8j, 9]
        features = features_real(CovarianceScene(planes))
        self.assertEqual(features.channels[:3], ["C11", "Re(C12)", "Im(C12)"])
        assert_array_equal(features.features.real[:, 0, 0], [1, 2, 3, 6, 4, 5, 9, 7, 8])
        assert_array_equal(features.features.imag, 0.0)

    def test_unknown_mode(self):
        with self.assertRaises(IncompatibleDataError):
            build_features(identity_scene(), "quaternion")


class StackBandsTestCase(unittest.TestCase):
    def test_single_band_is_unchanged(self):
        band = features_complex(identity_scene())
        self.assertIs(stack_bands([band]), band)

    def test_channels_follow_band_order(self):
        planes = np.zeros((6, 2, 3), dtype=np.complex128)
        planes[0] = 3.0
        planes[[3, 5]] = 1.0
        first, second = identity_scene(), CovarianceScene(planes)
        stacked = build_band_features([first, second], "real")
        self.assertEqual(stacked.features.shape, (18, 2, 3))
        self.assertEqual(stacked.channels[0], "b1:C11")
        self.assertEqual(stacked.channels[9], "b2:C11")
        assert_array_equal(stacked.features.real[0], 1.0)
        assert_array_equal(stacked.features.real[9], 3.0)
        self.assertEqual(len(zscore_normalize(stacked).stats.channels), 18)

    def test_extent_mismatch(self):
        with self.assertRaises(IncompatibleDataError):
            build_band_features([identity_scene(), identity_scene(height=3)], "complex")

    def test_mode_mismatch(self):
        with self.assertRaises(IncompatibleDataError):
            stack_bands([features_complex(identity_scene()), features_real(identity_scene())])

    def test_no_band(self):
        with self.assertRaises(IncompatibleDataError):
            stack_bands([])


class ZScoreTestCase(unittest.TestCase):
    def test_three_values(self):
        scene = FeatureScene(CTensor.from_real(np.array([[[1.0, 2.0, 3.0]]])), "real", ["C11"])
        normalized = zscore_normalize(scene)
        assert_allclose(normalized.features.real[0, 0], [-1.2247449, 0.0, 1.2247449], rtol=1e-7)
        assert_allclose(normalized.stats.sigma, [np.sqrt(2 / 3) + 1e-12])

    def test_complex_mean_and_magnitude_scale(self):
        values = np.array([[[1 + 1j, 3 - 1j]]])
        normalized = zscore_normalize(FeatureScene(CTensor.from_complex(values), "complex", ["C12"]))
        assert_allclose(normalized.stats.mu_real, [2.0])
        assert_allclose(normalized.stats.mu_imag, [0.0])
        assert_allclose(normalized.features.to_complex()[0, 0], np.array([-1 + 1j, 1 - 1j]) / np.sqrt(2), rtol=1e-10)

    def test_constant_channel(self):
        scene = FeatureScene(CTensor.from_real(np.full((1, 4, 4), 7.0)), "real", ["C11"])
        normalized = zscore_normalize(scene)
        assert_array_equal(normalized.features.real, 0.0)
        self.assertTrue(np.isfinite(normalized.features.real).all())

    def test_stored_stats_are_reused(self):
        train = features_complex(identity_scene())
        stats = NormalizationStats(
            list(train.channels), np.ones(6), np.zeros(6), np.full(6, 2.0)
        )
        normalized = zscore_normalize(train, stats)
        assert_array_equal(normalized.features.real[:3], 0.0)
        assert_array_equal(normalized.features.real[3:], -0.5)

    def test_stats_of_other_channels(self):
        stats = zscore_normalize(features_real(identity_scene())).stats
        with self.assertRaises(IncompatibleDataError):
            zscore_normalize(features_complex(identity_scene()), stats)

    def test_stats_sidecar(self):
        stats = zscore_normalize(features_complex(identity_scene())).stats
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "normalization.json")
            stats.save(path)
            loaded = NormalizationStats.load(path)
        self.assertEqual(loaded.channels, stats.channels)
        assert_array_equal(loaded.sigma, stats.sigma)

    def test_malformed_sidecar(self):
        with self.assertRaises(ConfigError):
            NormalizationStats.from_dict({"C11": {"mu_re": 0.0, "mu_im": 0.0, "sigma": 0.0}})
