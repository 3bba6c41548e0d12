"""Binary PGM class maps and palette-coloured PPM renderings"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from crpmnet.shared.constants import PALETTE_FILE
from crpmnet.shared.exceptions import IncompatibleDataError
from crpmnet.shared.utils import read_json_file
from crpmnet.shared.validation import check_palette_schema

logger = logging.getLogger(__name__)

MAXVAL = 255


def write_pgm(path: str | Path, class_map: NDArray[np.integer]) -> None:
    """P5 with maxval 255; one class index per pixel, 0 for unlabeled"""
    class_map = np.asarray(class_map)
    if class_map.ndim != 2:
        raise IncompatibleDataError(f"Class maps are 2-dimensional, got shape {class_map.shape}")
    if class_map.min(initial=0) < 0 or class_map.max(initial=0) > MAXVAL:
        raise IncompatibleDataError(f"Class indices must lie in 0..{MAXVAL}")
    height, width = class_map.shape
    Path(path).write_bytes(f"P5\n{width} {height}\n{MAXVAL}\n".encode("ascii") + class_map.astype(np.uint8).tobytes())


def _header(data: bytes, magic: bytes, fields: int) -> tuple[list[int], int]:
    """Whitespace separated header values after the magic, skipping comments. Returns values and payload offset."""
    if not data.startswith(magic):
        raise IncompatibleDataError(f"Expected a {magic.decode()} file, got magic {data[:2]!r}")
    values: list[int] = []
    pos = len(magic)
    while len(values) < fields:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise IncompatibleDataError("Malformed header")
        values.append(int(data[start:pos]))
    # exactly one whitespace byte separates the header from the payload
    return values, pos + 1


def read_pgm(path: str | Path) -> NDArray[np.uint8]:
    data = Path(path).read_bytes()
    (width, height, maxval), offset = _header(data, b"P5", 3)
    if maxval > MAXVAL:
        raise IncompatibleDataError(f"{path}: only 8-bit maps are supported, maxval is {maxval}")
    payload = data[offset:]
    if len(payload) != width * height:
        raise IncompatibleDataError(f"{path}: {len(payload)} pixel bytes for a {height}x{width} map")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()


def load_palette(path: str | Path | None = None) -> dict[int, tuple[int, int, int]]:
    """Class index to RGB. The packaged default palette is used when no path is given."""
    palette = read_json_file(str(path or PALETTE_FILE))
    check_palette_schema(palette)
    return {int(key): (rgb[0], rgb[1], rgb[2]) for key, rgb in palette.items()}


def colorize(class_map: NDArray[np.integer], palette: dict[int, tuple[int, int, int]]) -> NDArray[np.uint8]:
    """[H, W, 3] rendering. Classes missing from the palette are drawn black."""
    table = np.zeros((MAXVAL + 1, 3), dtype=np.uint8)
    for klass, rgb in palette.items():
        if 0 <= klass <= MAXVAL:
            table[klass] = rgb
    missing = sorted(set(np.unique(class_map).tolist()) - set(palette))
    if missing:
        logger.warning("Palette has no colour for classes %s", missing)
    return table[np.asarray(class_map)]  # type: ignore[no-any-return]


def write_ppm(path: str | Path, rgb: NDArray[np.uint8]) -> None:
    height, width, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{width} {height}\n{MAXVAL}\n".encode("ascii") + rgb.astype(np.uint8).tobytes())
