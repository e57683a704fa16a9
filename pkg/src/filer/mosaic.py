"""Checkerboard mosaics for eyeballing a registration."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, NonInvertibleAffine


def warp_to_reference(image_b: np.ndarray, h: np.ndarray, shape) -> np.ndarray:
    """Resample B on A's pixel grid, given ``H`` mapping A coordinates into B."""
    h = np.asarray(h, dtype=np.float64)
    if abs(np.linalg.det(h[:2, :2])) < 1e-12:
        raise NonInvertibleAffine("affine linear block is singular")
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    sx = h[0, 0] * xx + h[0, 1] * yy + h[0, 2]
    sy = h[1, 0] * xx + h[1, 1] * yy + h[1, 2]
    return ndimage.map_coordinates(image_b, [sy, sx], order=1, mode="constant", cval=0.0)


def checkerboard_mosaic(image_a: np.ndarray, image_b: np.ndarray, h, tile: int = 64) -> np.ndarray:
    """Alternate ``tile`` x ``tile`` blocks of A and of B warped into A's frame."""
    if tile < 1:
        raise ValueError("tile must be >= 1")
    image_a = np.asarray(image_a, dtype=np.float64)
    if np.asarray(h).shape != (3, 3):
        raise DimensionMismatch("affine must be 3x3")
    warped = warp_to_reference(np.asarray(image_b, dtype=np.float64), h, image_a.shape)
    yy, xx = np.mgrid[0:image_a.shape[0], 0:image_a.shape[1]]
    from_a = ((yy // tile) + (xx // tile)) % 2 == 0
    return np.where(from_a, image_a, warped)
