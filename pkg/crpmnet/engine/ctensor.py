"""Complex tensor value type and the shape, padding and cropping primitives shared by the networks."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from crpmnet.shared.constants import EPS_PHASE
from crpmnet.shared.exceptions import DimensionError, NonFiniteError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class CTensor:
    """
    Complex-valued array stored as separate real and imaginary planes.

    The last three axes are [channels, height, width]; a leading batch axis is allowed. Values are treated as
    immutable once constructed: every operation returns a new tensor.
    """

    real: FloatArray
    imag: FloatArray

    def __post_init__(self) -> None:
        real = np.asarray(self.real, dtype=np.float64)
        imag = np.asarray(self.imag, dtype=np.float64)
        if real.shape != imag.shape:
            raise DimensionError(f"Real plane {real.shape} and imaginary plane {imag.shape} differ in shape")
        if not (np.isfinite(real).all() and np.isfinite(imag).all()):
            raise NonFiniteError("Complex tensor holds NaN or Inf values")
        object.__setattr__(self, "real", real)
        object.__setattr__(self, "imag", imag)

    @classmethod
    def from_complex(cls, values: Any) -> CTensor:
        """Split a numpy complex array into planes"""
        arr = np.asarray(values, dtype=np.complex128)
        return cls(arr.real.copy(), arr.imag.copy())

    @classmethod
    def from_real(cls, values: Any) -> CTensor:
        """Real array with zero imaginary plane"""
        arr = np.asarray(values, dtype=np.float64)
        return cls(arr, np.zeros_like(arr))

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> CTensor:
        return cls(np.zeros(shape), np.zeros(shape))

    def to_complex(self) -> NDArray[np.complex128]:
        return self.real + 1j * self.imag

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.real.shape)

    @property
    def channels(self) -> int:
        return int(self.real.shape[-3])

    @property
    def height(self) -> int:
        return int(self.real.shape[-2])

    @property
    def width(self) -> int:
        return int(self.real.shape[-1])

    @property
    def batched(self) -> bool:
        return self.real.ndim == 4

    def __getitem__(self, index: Any) -> CTensor:
        return CTensor(self.real[index], self.imag[index])

    def scale(self, alpha: complex) -> CTensor:
        """Multiply by a complex scalar"""
        a, b = alpha.real, alpha.imag
        return CTensor(a * self.real - b * self.imag, a * self.imag + b * self.real)

    def map_planes(self, func: Any) -> CTensor:
        """Apply the same real-valued function to both planes"""
        return CTensor(func(self.real), func(self.imag))


@dataclass(frozen=True)
class PolarView:
    """Magnitude and phase of a complex tensor; phase lies in (-pi, pi]"""

    magnitude: FloatArray
    phase: FloatArray


def stack(tensors: list[CTensor]) -> CTensor:
    """Stack equally shaped tensors along a new leading batch axis"""
    return CTensor(np.stack([t.real for t in tensors]), np.stack([t.imag for t in tensors]))


def _spatial_pad(plane: FloatArray, widths: tuple[int, int, int, int], mode: str) -> FloatArray:
    top, bottom, left, right = widths
    pad = [(0, 0)] * (plane.ndim - 2) + [(top, bottom), (left, right)]
    return np.pad(plane, pad, mode=mode)  # type: ignore[call-overload,no-any-return]


def mirror_pad(x: CTensor, margin: int) -> CTensor:
    """
    Extend every side by ``margin`` pixels, reflecting about the edge pixel without repeating it.

    Row [a, b, c] with margin 1 becomes [b, a, b, c, b].
    """
    if margin < 0:
        raise DimensionError(f"Mirror margin must be >= 0, got {margin}")
    if margin == 0:
        return x
    if margin >= min(x.height, x.width):
        raise DimensionError(f"Mirror margin {margin} must be smaller than the spatial extent {x.height}x{x.width}")
    widths = (margin, margin, margin, margin)
    # numpy's "reflect" mode does not duplicate the edge pixel
    return CTensor(_spatial_pad(x.real, widths, "reflect"), _spatial_pad(x.imag, widths, "reflect"))


def crop_center(x: CTensor, target_h: int, target_w: int) -> CTensor:
    """Spatially centered crop. An odd difference removes the extra pixel from the bottom/right."""
    if target_h > x.height or target_w > x.width:
        raise DimensionError(f"Cannot crop {x.height}x{x.width} to the larger {target_h}x{target_w}")
    if target_h < 0 or target_w < 0:
        raise DimensionError("Crop target must be non-negative")
    top = (x.height - target_h) // 2
    left = (x.width - target_w) // 2
    return x[..., top : top + target_h, left : left + target_w]


def concat_channels(a: CTensor, b: CTensor) -> CTensor:
    """Channel concatenation, ``a``'s channels first"""
    if a.shape[:-3] != b.shape[:-3] or (a.height, a.width) != (b.height, b.width):
        raise DimensionError(f"Cannot concatenate {a.shape} and {b.shape}: spatial or batch extents differ")
    return CTensor(
        np.concatenate([a.real, b.real], axis=-3),
        np.concatenate([a.imag, b.imag], axis=-3),
    )


def polar(x: CTensor) -> PolarView:
    """Magnitude and phase. The phase of anything with magnitude below 1e-12 is 0."""
    magnitude = np.hypot(x.real, x.imag)
    phase = np.arctan2(x.imag, x.real)
    # atan2(-0.0, negative) returns -pi; fold it onto +pi so the phase stays in (-pi, pi]
    phase = np.where(phase <= -np.pi, np.pi, phase)
    phase = np.where(magnitude < EPS_PHASE, 0.0, phase)
    return PolarView(magnitude=magnitude, phase=phase)
