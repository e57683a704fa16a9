"""Deterministic synthetic multimodal image pairs with exact ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidSpec
from .evalbench import GroundTruth
from .imagecore import load_grayscale

PATTERNS = ("checkerboard", "blobs", "edges", "loaded-image")
INTENSITY_MAPS = ("identity", "gamma", "inversion", "piecewise")
NOISES = ("none", "gaussian", "salt-pepper", "speckle")


@dataclass(frozen=True)
class SynthSpec:
    pattern: str = "edges"
    width: int = 512
    height: int = 512
    # applied in order, e.g. (("gamma", 0.4), ("inversion", 0))
    intensity_maps: tuple = ()
    noise: str = "none"
    noise_level: float = 0.0  # sigma, density or variance depending on ``noise``
    rotation: float = 0.0  # radians, about the image centre
    translation: tuple = (0.0, 0.0)
    warp_amplitude: float = 0.0
    rng_seed: int = 0
    image_path: str | None = None
    square: int = 16  # checkerboard tile size

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise InvalidSpec(f"unknown pattern {self.pattern!r}")
        if self.pattern == "loaded-image" and not self.image_path:
            raise InvalidSpec("loaded-image pattern needs image_path")
        if self.width < 16 or self.height < 16:
            raise InvalidSpec("images must be at least 16x16")
        for step in self.intensity_maps:
            kind = step[0]
            if kind not in INTENSITY_MAPS:
                raise InvalidSpec(f"unknown intensity map {kind!r}")
            if kind == "gamma" and not step[1] > 0:
                raise InvalidSpec("gamma must be > 0")
        if self.noise not in NOISES:
            raise InvalidSpec(f"unknown noise {self.noise!r}")
        if self.noise_level < 0:
            raise InvalidSpec("noise level must be >= 0")
        if self.noise == "salt-pepper" and not self.noise_level < 1:
            raise InvalidSpec("salt-pepper density must lie in [0, 1)")
        if self.warp_amplitude < 0:
            raise InvalidSpec("warp amplitude must be >= 0")


def apply_intensity_map(values: np.ndarray, steps) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64)
    for step in steps:
        kind = step[0]
        if kind == "gamma":
            out = out ** float(step[1])
        elif kind == "inversion":
            out = 1.0 - out
        elif kind == "piecewise":
            # non-monotone fold: dark and bright ends both map to dark
            out = np.where(out < 0.5, 2.0 * out, 2.0 * (1.0 - out)) * 0.8 + 0.1
    return out


# ---------------------------------------------------------------- base patterns

def _checkerboard(h, w, square):
    yy, xx = np.mgrid[0:h, 0:w]
    return (((yy // square) + (xx // square)) % 2).astype(np.float64)


def _blobs(h, w, rng):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w))
    n = max(20, int(h * w / 2500))
    for _ in range(n):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        s = rng.uniform(4, 25)
        out += rng.uniform(-1, 1) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    out -= out.min()
    return out / max(out.max(), 1e-12)


def _edges(h, w, rng):
    """Overlapping random polygons and ellipses over smooth shading."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = 0.5 + 0.15 * np.sin(xx / rng.uniform(40, 90) + rng.uniform(0, 6)) * np.cos(
        yy / rng.uniform(40, 90) + rng.uniform(0, 6))
    n = max(30, int(h * w / 1800))
    for _ in range(n):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        a, b = rng.uniform(4, 30), rng.uniform(4, 30)
        ang = rng.uniform(0, math.pi)
        u = (xx - cx) * math.cos(ang) + (yy - cy) * math.sin(ang)
        v = -(xx - cx) * math.sin(ang) + (yy - cy) * math.cos(ang)
        kind = rng.integers(0, 3)
        if kind == 0:
            mask = (np.abs(u) <= a) & (np.abs(v) <= b)
        elif kind == 1:
            mask = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        else:
            mask = (v >= -b) & (v <= b - (b * 2) * np.abs(u) / a) & (np.abs(u) <= a)
        out[mask] = rng.uniform(0.0, 1.0)
    out = ndimage.gaussian_filter(out, 0.8)
    return np.clip(out, 0.0, 1.0)


def base_pattern(spec: SynthSpec, h: int, w: int, rng) -> np.ndarray:
    if spec.pattern == "checkerboard":
        return _checkerboard(h, w, spec.square)
    if spec.pattern == "blobs":
        return _blobs(h, w, rng)
    if spec.pattern == "edges":
        return _edges(h, w, rng)
    raise InvalidSpec("loaded images are not generated")


# ---------------------------------------------------------------- geometry

def affine_about_center(rotation: float, translation, width: int, height: int) -> np.ndarray:
    """Rotation about the image centre followed by a translation (A -> B)."""
    c = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    cs, sn = math.cos(rotation), math.sin(rotation)
    rot = np.array([[cs, -sn], [sn, cs]])
    h = np.eye(3)
    h[:2, :2] = rot
    h[:2, 2] = c + np.asarray(translation, dtype=np.float64) - rot @ c
    return h


@dataclass
class WarpField:
    """Sum of Gaussian bump displacements, capped at ``amplitude`` pixels."""

    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    sigma: float = 1.0

    def __call__(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        out = np.zeros_like(xy)
        for c, v in zip(self.centers, self.vectors):
            g = np.exp(-((xy - c) ** 2).sum(axis=-1) / (2 * self.sigma ** 2))
            out += g[..., None] * v
        return out


def make_warp(amplitude: float, width: int, height: int, rng, n_bumps: int = 3) -> WarpField:
    if amplitude == 0:
        return WarpField()
    centers = np.column_stack([rng.uniform(0, width, n_bumps), rng.uniform(0, height, n_bumps)])
    angles = rng.uniform(0, 2 * math.pi, n_bumps)
    vectors = np.column_stack([np.cos(angles), np.sin(angles)])
    warp = WarpField(centers, vectors, sigma=min(width, height) / 6.0)
    yy, xx = np.mgrid[0:height:4, 0:width:4]
    peak = np.sqrt((warp(np.stack([xx, yy], axis=-1).astype(np.float64)) ** 2).sum(-1)).max()
    warp.vectors = vectors * (amplitude / max(peak, 1e-12))
    return warp


def _invert_warp(target: np.ndarray, warp: WarpField, iters: int = 60) -> np.ndarray:
    """Solve ``x + warp(x) = target`` by fixed-point iteration."""
    x = target.copy()
    for _ in range(iters):
        x = target - warp(x)
    return x


def landmark_grid(h_true, warp: WarpField, width: int, height: int, n: int = 5, inset: float = 0.15):
    """Grid landmarks in A and their exact positions in B (kept if inside B)."""
    xs = np.linspace(inset * (width - 1), (1 - inset) * (width - 1), n)
    ys = np.linspace(inset * (height - 1), (1 - inset) * (height - 1), n)
    pa = np.array([(x, y) for y in ys for x in xs])
    target = pa @ h_true[:2, :2].T + h_true[:2, 2]
    pb = _invert_warp(target, warp) if len(warp.centers) else target
    inside = (pb[:, 0] >= 0) & (pb[:, 0] <= width - 1) & (pb[:, 1] >= 0) & (pb[:, 1] <= height - 1)
    return np.column_stack([pa[inside], pb[inside]])


def add_noise(image: np.ndarray, kind: str, level: float, rng) -> np.ndarray:
    if kind == "none" or level == 0:
        return image
    if kind == "gaussian":
        out = image + rng.normal(0.0, level, image.shape)
    elif kind == "salt-pepper":
        out = image.copy()
        u = rng.uniform(size=image.shape)
        out[u < level / 2] = 0.0
        out[(u >= level / 2) & (u < level)] = 1.0
    else:
        out = image * (1.0 + rng.normal(0.0, math.sqrt(level), image.shape))
    return np.clip(out, 0.0, 1.0)


def generate_pair(spec: SynthSpec):
    """Return ``(image_a, image_b, GroundTruth)`` for ``spec``.

    Image B samples the intensity-mapped base at ``H^-1 (x + warp(x))``; the
    base canvas extends beyond A so B has content everywhere.
    """
    seeds = np.random.SeedSequence(spec.rng_seed).spawn(3)
    rng_pattern, rng_warp, rng_noise = (np.random.default_rng(s) for s in seeds)
    w, h = spec.width, spec.height

    if spec.pattern == "loaded-image":
        canvas = load_grayscale(spec.image_path)
        h, w = canvas.shape
        off = 0
        edge_mode = "reflect"
    else:
        off = int(math.ceil(0.5 * (math.hypot(w, h) - min(w, h)))) + 8 + int(
            math.ceil(abs(spec.translation[0]) + abs(spec.translation[1]) + spec.warp_amplitude))
        canvas = base_pattern(spec, h + 2 * off, w + 2 * off, rng_pattern)
        edge_mode = "nearest"
    image_a = canvas[off:off + h, off:off + w].copy()
    mapped = apply_intensity_map(canvas, spec.intensity_maps)

    h_true = affine_about_center(spec.rotation, spec.translation, w, h)
    warp = make_warp(spec.warp_amplitude, w, h, rng_warp)
    identity_geom = np.array_equal(h_true, np.eye(3)) and not len(warp.centers)
    if identity_geom:
        image_b = mapped[off:off + h, off:off + w].copy()
    else:
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        xy_b = np.stack([xx, yy], axis=-1)
        if len(warp.centers):
            xy_b = xy_b + warp(xy_b)
        inv = np.linalg.inv(h_true)
        src = xy_b @ inv[:2, :2].T + inv[:2, 2] + off
        image_b = ndimage.map_coordinates(mapped, [src[..., 1], src[..., 0]], order=1, mode=edge_mode)
    image_b = add_noise(np.clip(image_b, 0.0, 1.0), spec.noise, spec.noise_level, rng_noise)
    landmarks = landmark_grid(h_true, warp, w, h)
    return image_a, image_b, GroundTruth(h_true=h_true, landmarks=landmarks)


def rotate_image(image: np.ndarray, angle: float, fill: float = 0.0) -> np.ndarray:
    """Rotate about the centre by ``angle`` (same convention as :func:`affine_about_center`)."""
    h, w = image.shape
    hm = affine_about_center(angle, (0.0, 0.0), w, h)
    inv = np.linalg.inv(hm)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * xx + inv[0, 1] * yy + inv[0, 2]
    sy = inv[1, 0] * xx + inv[1, 1] * yy + inv[1, 2]
    return ndimage.map_coordinates(image, [sy, sx], order=1, mode="constant", cval=fill)
