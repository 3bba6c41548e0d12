"""Synthetic multilook covariance scenes drawn from the complex Wishart law, for desk-scale experiments."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from crpmnet.polsar.scene import ENTRY_POSITIONS, CovarianceScene
from crpmnet.shared.constants import C3_ENTRIES
from crpmnet.shared.exceptions import ConfigError

logger = logging.getLogger(__name__)

LAYOUTS = ("checkerboard", "voronoi")
MIN_LOOKS = 3
# (HH power, HV power, VV power, HH-VV correlation magnitude, HH-VV phase): surface-, volume- and
# double-bounce-like mechanisms; further classes repeat them at a higher intensity
MECHANISMS = (
    (1.0, 0.1, 1.0, 0.8, 0.0),
    (1.0, 0.5, 1.0, 0.2, 0.0),
    (2.0, 0.1, 0.5, 0.6, math.pi),
)
INTENSITY_STEP = 2.5


@dataclass(frozen=True)
class SyntheticSceneSpec:
    classes: int = 3
    height: int = 192
    width: int = 192
    looks: int = 4
    layout: str = "checkerboard"
    seed: int = 1
    covariances: list[NDArray[np.complex128]] | None = field(default=None)

    def __post_init__(self) -> None:
        if self.classes < 2:
            raise ConfigError(f"At least 2 classes are needed, got {self.classes}")
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"Scene size {self.height}x{self.width} is empty")
        if self.looks < MIN_LOOKS:
            raise ConfigError(f"At least {MIN_LOOKS} looks are needed for a positive semi-definite estimate, got {self.looks}")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"Unknown layout {self.layout!r}, expected one of {LAYOUTS}")
        if self.covariances is not None and len(self.covariances) != self.classes:
            raise ConfigError(f"{len(self.covariances)} covariances given for {self.classes} classes")


def auto_covariances(classes: int) -> list[NDArray[np.complex128]]:
    """Well separated class covariances: scattering mechanism by class index, intensity stepped per cycle"""
    result = []
    for klass in range(classes):
        hh, hv, vv, rho, theta = MECHANISMS[klass % len(MECHANISMS)]
        scale = INTENSITY_STEP ** (klass // len(MECHANISMS))
        cross = rho * math.sqrt(hh * vv) * np.exp(1j * theta)
        sigma = np.array([[hh, 0, cross], [0, hv, 0], [np.conj(cross), 0, vv]], dtype=np.complex128)
        result.append(scale * sigma)
    return result


def layout_classes(spec: SyntheticSceneSpec, rng: np.random.Generator) -> NDArray[np.int64]:
    """Internal class index per pixel"""
    rows, cols = np.indices((spec.height, spec.width))
    if spec.layout == "checkerboard":
        # K x K rectangular patches, class (i + j) mod K, so every class covers K patches
        block_h = -(-spec.height // spec.classes)
        block_w = -(-spec.width // spec.classes)
        return (rows // block_h + cols // block_w) % spec.classes  # type: ignore[no-any-return]
    sites = rng.uniform((0, 0), (spec.height, spec.width), size=(3 * spec.classes, 2))
    distances = (rows[..., None] - sites[:, 0]) ** 2 + (cols[..., None] - sites[:, 1]) ** 2
    return distances.argmin(axis=-1) % spec.classes  # type: ignore[no-any-return]


def synth_wishart_scene(spec: SyntheticSceneSpec) -> CovarianceScene:
    """
    Every pixel of class k averages ``looks`` outer products s s^H, s zero-mean circular complex Gaussian with
    covariance Sigma_k, sampled through the Cholesky factor of Sigma_k. Every pixel is labeled.
    """
    rng = np.random.default_rng(spec.seed)
    covariances = spec.covariances if spec.covariances is not None else auto_covariances(spec.classes)
    factors = []
    for klass, sigma in enumerate(covariances):
        sigma = np.asarray(sigma, dtype=np.complex128)
        if sigma.shape != (3, 3) or not np.allclose(sigma, sigma.conj().T):
            raise ConfigError(f"Covariance of class {klass + 1} is not a Hermitian 3x3 matrix")
        try:
            factors.append(np.linalg.cholesky(sigma))
        except np.linalg.LinAlgError as err:
            raise ConfigError(f"Covariance of class {klass + 1} is not positive definite") from err
    classes = layout_classes(spec, rng)
    shape = (spec.height, spec.width, spec.looks, 3)
    gaussian = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    samples = np.empty_like(gaussian)
    for klass, factor in enumerate(factors):
        mask = classes == klass
        samples[mask] = gaussian[mask] @ factor.T
    matrices = np.einsum("hwli,hwlj->hwij", samples, samples.conj()) / spec.looks
    planes = np.stack([matrices[..., row, col] for row, col in (ENTRY_POSITIONS[name] for name in C3_ENTRIES)])
    scene = CovarianceScene(planes, (classes + 1).astype(np.uint16), spec.classes)
    logger.info("Synthesized %r with %d looks, %s layout", scene, spec.looks, spec.layout)
    return scene
