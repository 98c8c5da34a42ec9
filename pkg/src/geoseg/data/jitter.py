"""
Large-scale jitter augmentation
"""

import dataclasses
import logging
from typing import Optional, Tuple

import numpy as np

from ..autodiff import interpolation_matrix
from ..errors import ConfigError
from ..models import IGNORE_INDEX
from .rng import SplitMix64
from .tiles import TileRecord

logger = logging.getLogger(__name__)

DEFAULT_SCALE_RANGE: Tuple[float, float] = (0.1, 2.0)


def _nearest_indices(n_in: int, n_out: int) -> np.ndarray:
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.int64)
    return np.clip(idx, 0, n_in - 1)


def resize_raster(raster: np.ndarray, height: int, width: Optional[int] = None) -> np.ndarray:
    """Bilinear resize of a C x H x W raster to C x height x width (square when width is omitted)."""
    _, h, w = raster.shape
    uh = interpolation_matrix(h, height)
    uw = interpolation_matrix(w, height if width is None else width)
    return np.matmul(np.matmul(uh, raster.astype(np.float64)), uw.T)


def resize_mask(mask: np.ndarray, height: int, width: Optional[int] = None) -> np.ndarray:
    h, w = mask.shape
    cols = _nearest_indices(w, height if width is None else width)
    return mask[np.ix_(_nearest_indices(h, height), cols)]


def scale_jitter(
    tile: TileRecord,
    scale_range: Tuple[float, float] = DEFAULT_SCALE_RANGE,
    seed: int = 0,
    factor: Optional[float] = None,
    center: bool = False,
) -> TileRecord:
    """Rescale by a random factor, then crop or pad back to the original size.

    Height and width scale by the same factor and are cropped or padded
    independently. Padding uses 0 in the raster and the ignore index in the
    mask. ``factor`` overrides the random draw and ``center`` places the crop
    or pad centrally.
    """
    low, high = scale_range
    if not 0 < low <= high:
        raise ConfigError(f"scale range {scale_range} must be positive and ordered")
    rng = SplitMix64(seed)
    if factor is None:
        factor = rng.uniform_scalar(low, high)
    h, w = tile.mask.shape
    scaled_h = max(1, int(round(h * factor)))
    scaled_w = max(1, int(round(w * factor)))
    raster = resize_raster(tile.raster, scaled_h, scaled_w)
    mask = resize_mask(tile.mask, scaled_h, scaled_w)

    def place(scaled: int, extent: int) -> Tuple[slice, slice]:
        """Source and destination slices along one axis."""
        slack = abs(scaled - extent)
        start = slack // 2 if center else rng.integer(0, slack + 1)
        if scaled >= extent:
            return slice(start, start + extent), slice(0, extent)
        return slice(0, scaled), slice(start, start + scaled)

    rows, top = place(scaled_h, h)
    cols, left = place(scaled_w, w)
    out_raster = np.zeros((raster.shape[0], h, w))
    out_mask = np.full((h, w), IGNORE_INDEX, dtype=np.uint8)
    out_raster[:, top, left] = raster[:, rows, cols]
    out_mask[top, left] = mask[rows, cols]
    logger.debug("Jittered tile %s by %.3f", tile.tile_id, factor)
    return dataclasses.replace(tile, raster=out_raster.astype(np.float32), mask=out_mask)
