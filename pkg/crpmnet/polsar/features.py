"""Feature vectors built from covariance scenes, and their per-channel Z-score normalization."""

from __future__ import annotations

import functools
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from crpmnet.engine.ctensor import CTensor, FloatArray, concat_channels
from crpmnet.polsar.scene import CovarianceScene
from crpmnet.shared.constants import COMPLEX_FEATURE_CHANNELS, DIAGONAL_IMAG, EPS_ZSCORE, REAL_FEATURE_CHANNELS
from crpmnet.shared.exceptions import IncompatibleDataError
from crpmnet.shared.utils import read_json_file, write_json_to_file
from crpmnet.shared.validation import check_normalization_stats_schema

logger = logging.getLogger(__name__)

FEATURE_MODES = ("complex", "real")


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel complex mean and real scale, in channel order"""

    channels: list[str]
    mu_real: FloatArray
    mu_imag: FloatArray
    sigma: FloatArray

    def to_dict(self) -> dict[str, dict[str, float]]:
        return {
            name: {"mu_re": float(self.mu_real[i]), "mu_im": float(self.mu_imag[i]), "sigma": float(self.sigma[i])}
            for i, name in enumerate(self.channels)
        }

    @classmethod
    def from_dict(cls, stats: dict[str, dict[str, float]]) -> NormalizationStats:
        check_normalization_stats_schema(stats)
        names = list(stats)
        return cls(
            channels=names,
            mu_real=np.array([stats[name]["mu_re"] for name in names], dtype=np.float64),
            mu_imag=np.array([stats[name]["mu_im"] for name in names], dtype=np.float64),
            sigma=np.array([stats[name]["sigma"] for name in names], dtype=np.float64),
        )

    def save(self, path: str | Path) -> None:
        write_json_to_file(str(path), self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> NormalizationStats:
        return cls.from_dict(read_json_file(str(path)))


@dataclass(frozen=True)
class FeatureScene:
    """[C, H, W] feature tensor. Real-mode scenes have zero imaginary planes."""

    features: CTensor
    mode: str
    channels: list[str]
    stats: NormalizationStats | None = None


def features_complex(scene: CovarianceScene) -> FeatureScene:
    """
    Six complex channels [C11, C22, C33, C12, C13, C23]. The real diagonal entries get the imaginary part 1e-8.
    """
    planes = np.stack([scene.entry(name) for name in COMPLEX_FEATURE_CHANNELS])
    imag = planes.imag.copy()
    imag[:3] = DIAGONAL_IMAG
    return FeatureScene(CTensor(planes.real.copy(), imag), "complex", list(COMPLEX_FEATURE_CHANNELS))


def features_real(scene: CovarianceScene) -> FeatureScene:
    """Nine real channels [C11, Re C12, Im C12, C22, Re C13, Im C13, C33, Re C23, Im C23]"""
    c12, c13, c23 = scene.entry("C12"), scene.entry("C13"), scene.entry("C23")
    planes = np.stack(
        [
            scene.entry("C11").real,
            c12.real,
            c12.imag,
            scene.entry("C22").real,
            c13.real,
            c13.imag,
            scene.entry("C33").real,
            c23.real,
            c23.imag,
        ]
    )
    return FeatureScene(CTensor.from_real(planes), "real", list(REAL_FEATURE_CHANNELS))


def build_features(scene: CovarianceScene, mode: str) -> FeatureScene:
    if mode == "complex":
        return features_complex(scene)
    if mode == "real":
        return features_real(scene)
    raise IncompatibleDataError(f"Unknown feature mode {mode!r}, expected one of {FEATURE_MODES}")


def stack_bands(bands: Sequence[FeatureScene]) -> FeatureScene:
    """
    Concatenate the feature channels of co-registered bands, first band first. With more than one band the channel
    names carry the band number, e.g. ``b2:C12``.
    """
    if not bands:
        raise IncompatibleDataError("At least one band is needed")
    if len(bands) == 1:
        return bands[0]
    first = bands[0]
    extent = (first.features.height, first.features.width)
    for number, band in enumerate(bands[1:], start=2):
        if (band.features.height, band.features.width) != extent:
            raise IncompatibleDataError(
                f"Band {number} is {band.features.height}x{band.features.width}, band 1 is {extent[0]}x{extent[1]}"
            )
        if band.mode != first.mode:
            raise IncompatibleDataError(f"Band {number} has {band.mode} features, band 1 has {first.mode}")
    features = functools.reduce(concat_channels, (band.features for band in bands))
    channels = [f"b{number}:{name}" for number, band in enumerate(bands, start=1) for name in band.channels]
    logger.info("Stacked %d bands into %d channels", len(bands), len(channels))
    return FeatureScene(features, first.mode, channels)


def build_band_features(scenes: Sequence[CovarianceScene], mode: str) -> FeatureScene:
    """Features of every band, stacked along channels"""
    return stack_bands([build_features(scene, mode) for scene in scenes])


def zscore_normalize(scene: FeatureScene, stats: NormalizationStats | None = None) -> FeatureScene:
    """
    Subtract each channel's complex mean and divide by sigma = sqrt(mean |x - mu|^2) + 1e-12. With ``stats``
    given, those are applied instead of being computed, so inference reuses the training statistics.
    """
    x = scene.features
    if stats is None:
        mu_real = x.real.mean(axis=(1, 2))
        mu_imag = x.imag.mean(axis=(1, 2))
        deviation = (x.real - mu_real[:, None, None]) ** 2 + (x.imag - mu_imag[:, None, None]) ** 2
        sigma = np.sqrt(deviation.mean(axis=(1, 2))) + EPS_ZSCORE
        stats = NormalizationStats(list(scene.channels), mu_real, mu_imag, sigma)
        logger.debug("Normalization stats: %s", stats.to_dict())
    elif stats.channels != scene.channels:
        raise IncompatibleDataError(f"Stats cover channels {stats.channels}, features have {scene.channels}")
    normalized = CTensor(
        (x.real - stats.mu_real[:, None, None]) / stats.sigma[:, None, None],
        (x.imag - stats.mu_imag[:, None, None]) / stats.sigma[:, None, None],
    )
    return FeatureScene(normalized, scene.mode, list(scene.channels), stats)
