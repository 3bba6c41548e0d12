"""
Per-pixel polarimetric covariance scenes and their binary container.

Container layout (little endian): magic "C3PX", u32 version, u32 height, u32 width, u32 flags (bit 0: labels present),
then the planes C11, C12, C13, C22, C23, C33 as row-major interleaved (re, im) f32 pairs, then the labels as
row-major u16 if flagged.
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np
from cached_property import cached_property
from numpy.typing import NDArray

from crpmnet.output.class_map import read_pgm
from crpmnet.shared.constants import C3_ENTRIES, C3_MAGIC, C3_VERSION, HERMITIAN_TOLERANCE
from crpmnet.shared.exceptions import C3FormatError, DimensionError, IncompatibleDataError, NonFiniteError

logger = logging.getLogger(__name__)

ComplexArray = NDArray[np.complex128]
LabelArray = NDArray[np.uint16]
HEADER = struct.Struct("<4sIIII")
DIAGONAL_ENTRIES = ("C11", "C22", "C33")
# row, col of each stored entry in the 3x3 matrix
ENTRY_POSITIONS = {"C11": (0, 0), "C12": (0, 1), "C13": (0, 2), "C22": (1, 1), "C23": (1, 2), "C33": (2, 2)}


class CovarianceScene:
    """
    The six unique entries of each pixel's 3x3 Hermitian covariance matrix, plus an optional label map with
    classes 1..K and 0 for unlabeled pixels.
    """

    def __init__(self, planes: ComplexArray, labels: NDArray[np.integer] | None = None, class_count: int | None = None):
        planes = np.asarray(planes, dtype=np.complex128)
        if planes.ndim != 3 or planes.shape[0] != len(C3_ENTRIES):
            raise DimensionError(f"Expected [6, H, W] covariance planes, got shape {planes.shape}")
        if not np.isfinite(planes).all():
            raise NonFiniteError("Covariance planes hold NaN or Inf values")
        self.planes = _coerce_diagonals(planes)
        self.labels: LabelArray | None = None
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != planes.shape[1:]:
                raise IncompatibleDataError(f"Label map {labels.shape} does not match the {planes.shape[1:]} scene")
            if labels.min(initial=0) < 0 or labels.max(initial=0) > np.iinfo(np.uint16).max:
                raise IncompatibleDataError("Labels must fit in 16 unsigned bits")
            self.labels = labels.astype(np.uint16)
        derived = int(self.labels.max(initial=0)) if self.labels is not None else 0
        self.class_count = derived if class_count is None else int(class_count)
        if derived > self.class_count:
            raise IncompatibleDataError(f"Label value {derived} exceeds the class count {self.class_count}")

    def __repr__(self) -> str:
        return f"CovarianceScene({self.height}x{self.width}, classes={self.class_count}, labeled={self.has_labels})"

    @property
    def height(self) -> int:
        return int(self.planes.shape[1])

    @property
    def width(self) -> int:
        return int(self.planes.shape[2])

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def entry(self, name: str) -> ComplexArray:
        """One stored entry, e.g. ``C12``"""
        return self.planes[C3_ENTRIES.index(name)]  # type: ignore[no-any-return]

    @cached_property
    def matrices(self) -> ComplexArray:
        """[H, W, 3, 3] Hermitian matrices"""
        full = np.zeros((self.height, self.width, 3, 3), dtype=np.complex128)
        for name, (row, col) in ENTRY_POSITIONS.items():
            full[..., row, col] = self.entry(name)
            if row != col:
                full[..., col, row] = np.conj(self.entry(name))
        return full

    @cached_property
    def class_pixel_counts(self) -> dict[int, int]:
        """Labeled pixels per class 1..K"""
        if self.labels is None:
            return {}
        counts = np.bincount(self.labels.ravel(), minlength=self.class_count + 1)
        return {klass: int(counts[klass]) for klass in range(1, self.class_count + 1)}


def _coerce_diagonals(planes: ComplexArray) -> ComplexArray:
    """Diagonal entries are real. Imaginary parts beyond 1e-6 of the real part are reported, all are dropped."""
    planes = planes.copy()
    for name in DIAGONAL_ENTRIES:
        diagonal = planes[C3_ENTRIES.index(name)]
        excess = np.abs(diagonal.imag) > HERMITIAN_TOLERANCE * np.maximum(np.abs(diagonal.real), np.finfo(np.float64).tiny)
        if excess.any():
            logger.warning("%s: %d pixels carry imaginary parts beyond tolerance; coerced to real", name, int(excess.sum()))
        planes[C3_ENTRIES.index(name)] = diagonal.real
    return planes


def save_c3(scene: CovarianceScene, path: str | Path) -> None:
    flags = 1 if scene.has_labels else 0
    chunks = [HEADER.pack(C3_MAGIC, C3_VERSION, scene.height, scene.width, flags)]
    for plane in scene.planes:
        chunks.append(np.stack([plane.real, plane.imag], axis=-1).astype("<f4").tobytes())
    if scene.labels is not None:
        chunks.append(scene.labels.astype("<u2").tobytes())
    Path(path).write_bytes(b"".join(chunks))
    logger.info("Wrote %r to %s", scene, path)


def load_c3(path: str | Path, label_path: str | Path | None = None, class_count: int | None = None) -> CovarianceScene:
    """
    Read a C3 container. A separate label PGM, when given, replaces any labels stored in the container.
    """
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise C3FormatError(f"{path}: {len(data)} bytes is shorter than the {HEADER.size}-byte header")
    magic, version, height, width, flags = HEADER.unpack_from(data)
    if magic != C3_MAGIC:
        raise C3FormatError(f"{path}: bad magic {magic!r}")
    if version != C3_VERSION:
        raise C3FormatError(f"{path}: unsupported version {version}")
    if height == 0 or width == 0:
        raise C3FormatError(f"{path}: empty {height}x{width} scene")
    plane_bytes = height * width * 8
    expected = HEADER.size + len(C3_ENTRIES) * plane_bytes + (height * width * 2 if flags & 1 else 0)
    if len(data) != expected:
        raise C3FormatError(f"{path}: payload length {len(data)} bytes, expected {expected} for {height}x{width}")
    pairs = np.frombuffer(data, dtype="<f4", count=len(C3_ENTRIES) * height * width * 2, offset=HEADER.size)
    pairs = pairs.astype(np.float64).reshape(len(C3_ENTRIES), height, width, 2)
    planes = pairs[..., 0] + 1j * pairs[..., 1]
    labels = None
    if flags & 1:
        offset = HEADER.size + len(C3_ENTRIES) * plane_bytes
        labels = np.frombuffer(data, dtype="<u2", offset=offset).reshape(height, width)
    if label_path is not None:
        labels = read_pgm(label_path)
        if labels.shape != (height, width):
            raise IncompatibleDataError(f"{label_path}: label map {labels.shape} does not match the {height}x{width} scene")
    scene = CovarianceScene(planes, labels, class_count)
    logger.info("Loaded %r from %s", scene, path)
    return scene
