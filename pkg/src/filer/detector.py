"""Energy-guided edge-preserving filter, structure map and FAST detection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DimensionMismatch, ImageTooSmall, InvalidConfig


@dataclass(frozen=True)
class GuidedFilterParams:
    sigma_s: float = 4.0
    sigma_r: float | None = None  # None -> 0.1 * dynamic range of the guide
    window_radius: int = 12

    def __post_init__(self):
        if self.sigma_s <= 0:
            raise InvalidConfig("sigma_s must be > 0")
        if self.sigma_r is not None and self.sigma_r <= 0:
            raise InvalidConfig("sigma_r must be > 0")
        if self.window_radius < math.ceil(2 * self.sigma_s):
            raise InvalidConfig("window_radius must be >= ceil(2 * sigma_s)")


@dataclass(frozen=True)
class DetectorParams:
    fast_threshold: float = 0.04
    nonmax_radius: int = 3
    max_features: int = 5000
    border_margin: int = 40

    def __post_init__(self):
        if self.fast_threshold <= 0 or self.nonmax_radius <= 0:
            raise InvalidConfig("fast_threshold and nonmax_radius must be > 0")
        if self.max_features <= 0 or self.border_margin <= 0:
            raise InvalidConfig("max_features and border_margin must be > 0")


@dataclass
class FeaturePoint:
    x: float
    y: float
    score: float
    main_direction: float | None = None  # None means no dominant direction


@numba.njit(cache=True)
def _guided_kernel(image, guide, radius, sigma_s, sigma_r):
    h, w = image.shape
    out = np.empty((h, w))
    size = 2 * radius + 1
    spatial = np.empty((size, size))
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            spatial[dy + radius, dx + radius] = math.exp(-(dy * dy + dx * dx) / (2.0 * sigma_s * sigma_s))
    inv = 1.0 / (2.0 * sigma_r * sigma_r)
    for y in range(h):
        for x in range(w):
            gc = guide[y, x]
            num = 0.0
            den = 0.0
            for dy in range(-radius, radius + 1):
                yy = min(max(y + dy, 0), h - 1)
                for dx in range(-radius, radius + 1):
                    xx = min(max(x + dx, 0), w - 1)
                    d = guide[yy, xx] - gc
                    wgt = spatial[dy + radius, dx + radius] * math.exp(-(d * d) * inv)
                    num += wgt * image[yy, xx]
                    den += wgt
            out[y, x] = num / den
    return out


def resolve_sigma_r(guide: np.ndarray, params: GuidedFilterParams) -> float:
    if params.sigma_r is not None:
        return float(params.sigma_r)
    span = float(guide.max() - guide.min())
    return 0.1 * span if span > 0 else 1.0


def edge_guided_filter(image: np.ndarray, guide: np.ndarray,
                       params: GuidedFilterParams = GuidedFilterParams()) -> np.ndarray:
    """Smooth ``image`` with spatial and guide-similarity Gaussian weights.

    Weights are the product of a spatial Gaussian (``sigma_s``) and a
    Gaussian on the guide difference (``sigma_r``) over a square window;
    pixels outside the image replicate the nearest edge.
    """
    image = np.ascontiguousarray(image, dtype=np.float64)
    guide = np.ascontiguousarray(guide, dtype=np.float64)
    if image.shape != guide.shape:
        raise DimensionMismatch(f"input {image.shape} vs guide {guide.shape}")
    sigma_r = resolve_sigma_r(guide, params)
    return _guided_kernel(image, guide, int(params.window_radius), float(params.sigma_s), sigma_r)


def structure_map(j_field: np.ndarray, et: np.ndarray) -> np.ndarray:
    j_field = np.asarray(j_field, dtype=np.float64)
    et = np.asarray(et, dtype=np.float64)
    if j_field.shape != et.shape:
        raise DimensionMismatch(f"{j_field.shape} vs {et.shape}")
    return j_field - et


# Bresenham circle of radius 3, clockwise from the top, as (dx, dy)
FAST_CIRCLE = np.array([
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
])
FAST_ARC = 9


def fast_scores(image: np.ndarray, threshold: float) -> np.ndarray:
    """FAST-9 segment-test score map; zero where the test fails.

    The score of a corner is the larger of the summed excess brightness
    (``|p - c| - t``) over the brighter and over the darker circle pixels.
    """
    h, w = image.shape
    scores = np.zeros((h, w))
    if h < 7 or w < 7:
        return scores
    c = image[3:h - 3, 3:w - 3]
    ring = np.stack([image[3 + dy:h - 3 + dy, 3 + dx:w - 3 + dx] for dx, dy in FAST_CIRCLE])
    diff = ring - c[None]
    bright = diff > threshold
    dark = diff < -threshold
    n = len(FAST_CIRCLE)
    is_corner = np.zeros(c.shape, dtype=bool)
    for mask in (bright, dark):
        for start in range(n):
            run = mask[start].copy()
            for k in range(1, FAST_ARC):
                run &= mask[(start + k) % n]
            is_corner |= run
    sb = np.where(bright, np.abs(diff) - threshold, 0.0).sum(axis=0)
    sd = np.where(dark, np.abs(diff) - threshold, 0.0).sum(axis=0)
    scores[3:h - 3, 3:w - 3] = np.where(is_corner, np.maximum(sb, sd), 0.0)
    return scores


def _disc_offsets(radius: int):
    r = int(math.floor(radius))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dx * dx + dy * dy <= radius * radius
    return dy[keep], dx[keep]


def detect_features(i_out: np.ndarray, params: DetectorParams = DetectorParams()) -> list[FeaturePoint]:
    """FAST-9 corners on the [0, 1]-rescaled structure map.

    Candidates are visited by (score desc, y, x); a candidate is kept only
    if no previously kept point lies within ``nonmax_radius``.
    """
    i_out = np.asarray(i_out, dtype=np.float64)
    h, w = i_out.shape
    m = params.border_margin
    if h < 2 * m + 7 or w < 2 * m + 7:
        raise ImageTooSmall(f"{w}x{h} too small for border margin {m}")
    lo, hi = float(i_out.min()), float(i_out.max())
    if hi - lo <= 0:
        return []
    scaled = (i_out - lo) / (hi - lo)
    scores = fast_scores(scaled, params.fast_threshold)
    valid = np.zeros_like(scores, dtype=bool)
    valid[m:h - m, m:w - m] = True
    ys, xs = np.nonzero((scores > 0) & valid)
    if len(ys) == 0:
        return []
    sc = scores[ys, xs]
    order = np.lexsort((xs, ys, -sc))

    blocked = np.zeros((h, w), dtype=bool)
    ody, odx = _disc_offsets(params.nonmax_radius)
    points = []
    for idx in order:
        y, x = int(ys[idx]), int(xs[idx])
        if blocked[y, x]:
            continue
        points.append(FeaturePoint(x=float(x), y=float(y), score=float(sc[idx])))
        if len(points) >= params.max_features:
            break
        by, bx = y + ody, x + odx
        ok = (by >= 0) & (by < h) & (bx >= 0) & (bx < w)
        blocked[by[ok], bx[ok]] = True
    return points


def points_xy(points) -> np.ndarray:
    """``(n, 2)`` array of ``(x, y)`` coordinates."""
    return np.array([(p.x, p.y) for p in points], dtype=np.float64).reshape(-1, 2)
