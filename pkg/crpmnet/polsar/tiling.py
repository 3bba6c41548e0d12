"""Cut feature scenes into overlapping windows and put per-window results back together."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from crpmnet.engine.ctensor import CTensor, FloatArray, _spatial_pad
from crpmnet.shared.constants import TILE_STRIDE, TILE_WINDOW
from crpmnet.shared.exceptions import DimensionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Placement:
    """Where a tile's core sits in the scene it was cut from"""

    row: int
    col: int
    height: int
    width: int


@dataclass(frozen=True)
class Tile:
    """
    Tile data and its placement. ``data`` covers the placement plus ``halo`` extra pixels
    (before, after) on each axis.
    """

    data: CTensor
    placement: Placement


@dataclass(frozen=True)
class TileSet:
    tiles: list[Tile]
    height: int
    width: int
    halo: tuple[int, int]

    def __len__(self) -> int:
        return len(self.tiles)

    @property
    def placements(self) -> list[Placement]:
        return [tile.placement for tile in self.tiles]


def tile_offsets(extent: int, window: int, stride: int) -> list[int]:
    """
    Window start offsets along one axis. The last window is clamped to the boundary so the remainder is covered.

    Case 1:
        Input: extent=192, window=128, stride=64
        Output: [0, 64]
    Case 2:
        Input: extent=200, window=128, stride=64
        Output: [0, 64, 72]
    """
    if window < 1 or stride < 1:
        raise DimensionError(f"Window {window} and stride {stride} must be positive")
    if extent < window:
        raise DimensionError(f"Extent {extent} is smaller than the window {window}")
    offsets = list(range(0, extent - window + 1, stride))
    if offsets[-1] != extent - window:
        logger.debug("Clamping the last window to offset %d of %d", extent - window, extent)
        offsets.append(extent - window)
    return offsets


def tile_scene(
    features: CTensor,
    window: int = TILE_WINDOW,
    stride: int = TILE_STRIDE,
    halo: tuple[int, int] = (0, 0),
    fit: bool = False,
) -> TileSet:
    """
    Slide a ``window`` x ``window`` frame over a [C, H, W] scene.

    Scenes smaller than the window are mirror-extended on the bottom/right up to the window, unless ``fit`` is set,
    in which case the window shrinks to the scene. Tile data carries ``halo`` context pixels taken from the scene
    mirror-extended by ``max(halo)``.
    """
    if features.real.ndim != 3:
        raise DimensionError(f"Expected a [C, H, W] scene, got shape {features.shape}")
    height, width = features.height, features.width
    if fit:
        win_h, win_w = min(window, height), min(window, width)
        scene = features
    else:
        win_h = win_w = window
        grow = (0, max(0, window - height), 0, max(0, window - width))
        scene = features if grow == (0, 0, 0, 0) else features.map_planes(lambda p: _spatial_pad(p, grow, "reflect"))
    before, after = halo
    margin = max(before, after)
    if margin:
        widths = (margin, margin, margin, margin)
        scene = scene.map_planes(lambda p: _spatial_pad(p, widths, "reflect"))
    tiles = []
    for row in tile_offsets(max(height, win_h), win_h, stride):
        for col in tile_offsets(max(width, win_w), win_w, stride):
            r0, c0 = row + margin - before, col + margin - before
            data = scene[:, r0 : r0 + before + win_h + after, c0 : c0 + before + win_w + after]
            tiles.append(Tile(data, Placement(row, col, win_h, win_w)))
    logger.debug("Cut a %dx%d scene into %d tiles of %dx%d", height, width, len(tiles), win_h, win_w)
    return TileSet(tiles, height, width, halo)


def reassemble(outputs: list[FloatArray], tile_set: TileSet) -> FloatArray:
    """
    Average per-tile [K, h, w] results into a [K, H, W] scene map: results are summed in tile order, then divided
    by the per-pixel coverage count. Parts of tiles lying in the mirror extension are dropped.
    """
    if len(outputs) != len(tile_set):
        raise DimensionError(f"Got {len(outputs)} tile results for {len(tile_set)} tiles")
    channels = outputs[0].shape[0]
    full_h = max(tile_set.height, max(p.row + p.height for p in tile_set.placements))
    full_w = max(tile_set.width, max(p.col + p.width for p in tile_set.placements))
    total = np.zeros((channels, full_h, full_w))
    coverage = np.zeros((full_h, full_w), dtype=np.int64)
    for result, placement in zip(outputs, tile_set.placements):
        if result.shape != (channels, placement.height, placement.width):
            raise DimensionError(f"Tile result {result.shape} does not match its placement {placement}")
        rows = slice(placement.row, placement.row + placement.height)
        cols = slice(placement.col, placement.col + placement.width)
        total[:, rows, cols] += result
        coverage[rows, cols] += 1
    merged = total / coverage
    return merged[:, : tile_set.height, : tile_set.width]
