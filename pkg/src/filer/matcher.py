"""Putative matching, sample consensus, main directions and the full matching pipeline."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.linalg import polar

from .descriptor import LogPolarGrid, Descriptor, build_descriptors, omax_from_energy, orientation_shift
from .detector import (DetectorParams, FeaturePoint, GuidedFilterParams, detect_features,
                       edge_guided_filter, points_xy, structure_map)
from .energy import EnergyConfig, energy_maps
from .errors import (DegenerateGeometry, DimensionMismatch, EmptyDescriptorSet, ImageTooSmall,
                     InsufficientMatches, InvalidConfig, NoConsensus, PatchOutOfBounds)
from .filterbank import FilterBankConfig, apply_filter_bank, build_filter_bank

log = logging.getLogger(__name__)


@dataclass
class MatchSet:
    """Parallel arrays describing one-to-one correspondences between two point sets."""

    index_a: np.ndarray
    index_b: np.ndarray
    distance: np.ndarray
    xy_a: np.ndarray | None = None  # (n, 2) coordinates in image A
    xy_b: np.ndarray | None = None
    inlier: np.ndarray | None = None

    def __post_init__(self):
        self.index_a = np.asarray(self.index_a, dtype=np.int64)
        self.index_b = np.asarray(self.index_b, dtype=np.int64)
        self.distance = np.asarray(self.distance, dtype=np.float64)
        if self.inlier is None:
            self.inlier = np.zeros(len(self.index_a), dtype=bool)

    def __len__(self):
        return len(self.index_a)

    def with_points(self, xy_a, xy_b) -> "MatchSet":
        xy_a = np.asarray(xy_a, dtype=np.float64)
        xy_b = np.asarray(xy_b, dtype=np.float64)
        return replace(self, xy_a=xy_a[self.index_a], xy_b=xy_b[self.index_b])

    def subset(self, mask) -> "MatchSet":
        mask = np.asarray(mask)
        return MatchSet(
            self.index_a[mask], self.index_b[mask], self.distance[mask],
            None if self.xy_a is None else self.xy_a[mask],
            None if self.xy_b is None else self.xy_b[mask],
            self.inlier[mask])

    @property
    def n_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier))


@dataclass(frozen=True)
class ConsensusParams:
    delta: float = 3.0
    max_iterations: int = 2000
    rng_seed: int = 0
    min_inliers: int = 6
    sample_pool: int = 100  # minimal samples are drawn from the best-ranked matches

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidConfig("delta must be > 0")
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if self.min_inliers < 3 or self.sample_pool < 3:
            raise InvalidConfig("min_inliers and sample_pool must be >= 3")


@dataclass(frozen=True)
class PipelineConfig:
    filter_bank: FilterBankConfig = FilterBankConfig()
    energy: EnergyConfig = EnergyConfig()
    guided: GuidedFilterParams = GuidedFilterParams()
    detector: DetectorParams = DetectorParams()
    grid: LogPolarGrid = LogPolarGrid()
    consensus: ConsensusParams = ConsensusParams()
    coarse_delta: float = 2.0
    weight_sigma: float = 1.0
    rotation_compensation: bool = True
    direction_bins: int = 36
    coarse_polarity: bool = True  # also try the opposite main direction in image B

    def __post_init__(self):
        if self.detector.border_margin < self.grid.radius:
            raise InvalidConfig("border_margin must be >= descriptor radius")
        if self.coarse_delta <= 0 or self.direction_bins < 1:
            raise InvalidConfig("coarse_delta and direction_bins must be positive")


# ---------------------------------------------------------------- matching

def _as_matrix(descs) -> np.ndarray:
    if isinstance(descs, np.ndarray):
        return np.atleast_2d(descs).astype(np.float64, copy=False)
    return np.array([d.values if isinstance(d, Descriptor) else d for d in descs], dtype=np.float64)


def match_nn(descs_a, descs_b, chunk: int = 1024) -> MatchSet:
    """Mutual nearest neighbours under Euclidean distance.

    Output is sorted by distance, ties broken by ``index_a``.  Equal
    distances resolve to the smaller index on either side.
    """
    a = _as_matrix(descs_a)
    b = _as_matrix(descs_b)
    if len(a) == 0 or len(b) == 0 or a.size == 0 or b.size == 0:
        raise EmptyDescriptorSet("both descriptor sets must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"descriptor lengths {a.shape[1]} vs {b.shape[1]}")
    na, nb = len(a), len(b)
    sq_b = (b * b).sum(axis=1)
    nn_ab = np.empty(na, dtype=np.int64)
    best_ba = np.full(nb, np.inf)
    nn_ba = np.zeros(nb, dtype=np.int64)
    for start in range(0, na, chunk):
        blk = a[start:start + chunk]
        d2 = (blk * blk).sum(axis=1)[:, None] + sq_b[None, :] - 2.0 * blk @ b.T
        nn_ab[start:start + len(blk)] = np.argmin(d2, axis=1)
        col_arg = np.argmin(d2, axis=0)
        col_min = d2[col_arg, np.arange(nb)]
        better = col_min < best_ba
        best_ba[better] = col_min[better]
        nn_ba[better] = col_arg[better] + start
    ia = np.nonzero(nn_ba[nn_ab] == np.arange(na))[0]
    ib = nn_ab[ia]
    dist = np.sqrt(((a[ia] - b[ib]) ** 2).sum(axis=1))
    order = np.lexsort((ia, dist))
    return MatchSet(ia[order], ib[order], dist[order])


# ---------------------------------------------------------------- affine models

def apply_affine(h: np.ndarray, xy: np.ndarray) -> np.ndarray:
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    return xy @ h[:2, :2].T + h[:2, 2]


def fit_affine(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares affine ``H`` (3x3) with ``dst ~ H * src``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    design = np.column_stack([src, np.ones(len(src))])
    sol, *_ = np.linalg.lstsq(design, dst, rcond=None)
    h = np.eye(3)
    h[:2, :] = sol.T
    return h


def _sample_models(src, dst, triples):
    """Exact affine through each sample triple; returns (models, valid mask)."""
    ps = src[triples]  # (k, 3, 2)
    qs = dst[triples]
    design = np.concatenate([ps, np.ones(ps.shape[:2] + (1,))], axis=2)  # (k, 3, 3)
    det = np.linalg.det(design)
    scale = np.maximum(np.abs(ps - ps.mean(axis=1, keepdims=True)).max(axis=(1, 2)), 1.0)
    valid = np.abs(det) > 1e-6 * scale ** 2
    models = np.zeros((len(triples), 2, 3))
    if valid.any():
        sol = np.linalg.solve(design[valid], qs[valid])  # (m, 3, 2)
        models[valid] = np.transpose(sol, (0, 2, 1))
    return models, valid


def residuals(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.sqrt(((dst - apply_affine(h, src)) ** 2).sum(axis=1))


def fsc_filter(matches: MatchSet, params: ConsensusParams = ConsensusParams(), chunk: int = 256):
    """Seeded sample consensus for a 2-D affine model.

    Minimal 3-match samples are drawn from the ``sample_pool`` best-ranked
    matches (the input order), scored against every match with the test
    ``||Y - H X|| < delta``, and the winner is refit by least squares on its
    inliers and re-scored once.  Returns ``(matches with inlier flags, H)``.
    """
    n = len(matches)
    if n < 3:
        raise InsufficientMatches(f"{n} matches, need at least 3")
    if matches.xy_a is None or matches.xy_b is None:
        raise ValueError("matches carry no coordinates; call with_points first")
    src = matches.xy_a
    dst = matches.xy_b
    pool = min(n, params.sample_pool)
    rng = np.random.default_rng(params.rng_seed)
    triples = np.empty((params.max_iterations, 3), dtype=np.int64)
    for k in range(params.max_iterations):
        triples[k] = rng.choice(pool, size=3, replace=False)

    best_count, best_cost, best_model = -1, math.inf, None
    any_valid = False
    for start in range(0, len(triples), chunk):
        models, valid = _sample_models(src, dst, triples[start:start + chunk])
        if not valid.any():
            continue
        any_valid = True
        models = models[valid]
        pred = np.einsum("kij,nj->kni", models[:, :, :2], src) + models[:, None, :, 2]
        res = np.sqrt(((pred - dst[None]) ** 2).sum(axis=2))
        inl = res < params.delta
        counts = inl.sum(axis=1)
        costs = np.where(inl, res, 0.0).sum(axis=1)
        for k in range(len(models)):
            c = int(counts[k])
            if c > best_count or (c == best_count and costs[k] < best_cost):
                best_count, best_cost, best_model = c, float(costs[k]), models[k]
    if not any_valid:
        raise DegenerateGeometry("every minimal sample was collinear")

    h = np.eye(3)
    h[:2] = best_model
    inl = residuals(h, src, dst) < params.delta
    if inl.sum() >= 3:
        refit = fit_affine(src[inl], dst[inl])
        if abs(np.linalg.det(refit[:2, :2])) > 1e-12:
            h = refit
    inl = residuals(h, src, dst) < params.delta
    if inl.sum() < params.min_inliers:
        raise NoConsensus(f"{int(inl.sum())} inliers, need {params.min_inliers}")
    out = replace(matches, inlier=inl)
    return out, h


def rotation_angle(h: np.ndarray) -> float:
    """Angle of the rotation factor in the polar decomposition of H's linear block."""
    rot, _ = polar(np.asarray(h, dtype=np.float64)[:2, :2])
    return math.atan2(rot[1, 0], rot[0, 0])


# ---------------------------------------------------------------- main direction

def gradient_maps(i_out: np.ndarray):
    """Central differences with replicated borders: ``(G_x, G_y)``."""
    p = np.asarray(i_out, dtype=np.float64)
    if p.shape[0] < 3 or p.shape[1] < 3:
        raise ImageTooSmall(f"gradient needs >= 3x3, got {p.shape}")
    padded = np.pad(p, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return gx, gy


def gradient_polar(gx: np.ndarray, gy: np.ndarray):
    """Gradient magnitude and direction in ``[0, 2*pi)``."""
    mag = np.sqrt(gx ** 2 + gy ** 2)
    ang = np.mod(np.arctan2(gy, gx), 2.0 * math.pi)
    return mag, ang


_DISCS: dict = {}


def _disc(radius: float):
    d = _DISCS.get(radius)
    if d is None:
        r = int(math.floor(radius))
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        keep = dx * dx + dy * dy <= radius * radius
        d = _DISCS[radius] = (dy[keep], dx[keep], r)
    return d


def _refine_peak(hist):
    """Smooth a circular histogram with [1/4, 1/2, 1/4] and place its peak by a parabola fit."""
    n = len(hist)
    sm = np.empty(n)
    for b in range(n):
        sm[b] = 0.25 * hist[(b - 1) % n] + 0.5 * hist[b] + 0.25 * hist[(b + 1) % n]
    j = int(np.argmax(sm))
    left, centre, right = sm[(j - 1) % n], sm[j], sm[(j + 1) % n]
    den = left - 2.0 * centre + right
    off = 0.5 * (left - right) / den if den != 0 else 0.0
    return j + 0.5 + off


def main_direction(point, gmag: np.ndarray, gangle: np.ndarray, radius: float = 40.0,
                   n_bins: int = 36):
    """Dominant gradient direction in a disc around ``point``, in ``[0, 2*pi)``.

    Gradient magnitudes vote into ``n_bins`` direction bins; the smoothed
    histogram's peak is refined by a parabola through it and its two
    neighbours.  Returns ``None`` when the disc carries no gradient.
    """
    dy, dx, r = _disc(radius)
    cx, cy = int(round(point.x)), int(round(point.y))
    h, w = gmag.shape
    if cx - r < 0 or cy - r < 0 or cx + r >= w or cy + r >= h:
        raise PatchOutOfBounds(f"direction disc at ({cx}, {cy}) leaves {w}x{h} image")
    mag = gmag[cy + dy, cx + dx]
    if mag.sum() < 1e-9:
        return None
    width = 2.0 * math.pi / n_bins
    bins = np.minimum(np.floor(gangle[cy + dy, cx + dx] / width).astype(np.int64), n_bins - 1)
    hist = np.zeros(n_bins)
    for b, m in zip(bins, mag):
        hist[b] += m
    return (_refine_peak(hist) * width) % (2.0 * math.pi)


_refine_peak_jit = numba.njit(cache=True)(_refine_peak)


@numba.njit(cache=True)
def _direction_kernel(gmag, gangle, cx, cy, dy, dx, n_bins, out):
    width = 2.0 * math.pi / n_bins
    hist = np.zeros(n_bins)
    for i in range(len(cx)):
        hist[:] = 0.0
        total = 0.0
        for k in range(len(dy)):
            m = gmag[cy[i] + dy[k], cx[i] + dx[k]]
            b = min(int(math.floor(gangle[cy[i] + dy[k], cx[i] + dx[k]] / width)), n_bins - 1)
            hist[b] += m
            total += m
        if total >= 1e-9:
            out[i] = (_refine_peak_jit(hist) * width) % (2.0 * math.pi)
        else:
            out[i] = np.nan


def main_directions(points, gmag: np.ndarray, gangle: np.ndarray, radius: float = 40.0,
                    n_bins: int = 36) -> np.ndarray:
    """Batched :func:`main_direction`; ``nan`` marks points without a dominant direction."""
    dy, dx, r = _disc(radius)
    h, w = gmag.shape
    cx = np.array([int(round(p.x)) for p in points], dtype=np.int64)
    cy = np.array([int(round(p.y)) for p in points], dtype=np.int64)
    if len(cx) and ((cx - r < 0) | (cy - r < 0) | (cx + r >= w) | (cy + r >= h)).any():
        raise PatchOutOfBounds("direction disc leaves the image")
    out = np.empty(len(cx))
    _direction_kernel(np.ascontiguousarray(gmag), np.ascontiguousarray(gangle), cx, cy,
                      dy.astype(np.int64), dx.astype(np.int64), n_bins, out)
    return out


# ---------------------------------------------------------------- pipeline

@dataclass
class ImageFeatures:
    image: np.ndarray
    et: np.ndarray
    i_out: np.ndarray
    omax: np.ndarray
    points: list
    energy: object = field(repr=False, default=None)


def _check_size(image, config: PipelineConfig):
    need = 2 * config.detector.border_margin + 16
    if image.shape[0] < need or image.shape[1] < need:
        raise ImageTooSmall(f"image {image.shape} smaller than {need}x{need}")


def orientation_map(image: np.ndarray, config: PipelineConfig, orientation_offset: float = 0.0):
    """Dominant-orientation index map of ``image`` for a bank turned by ``orientation_offset``."""
    fb = replace(config.filter_bank, orientation_offset=orientation_offset)
    bank = build_filter_bank(image.shape[1], image.shape[0], fb)
    oe, _ = energy_maps(apply_filter_bank(image, bank), config.energy)
    return omax_from_energy(oe, config.weight_sigma, config.energy.epsilon)


def extract_features(image: np.ndarray, config: PipelineConfig = PipelineConfig()) -> ImageFeatures:
    """Filter bank, energy maps, structure map, FAST points and the orientation index map."""
    image = np.asarray(image, dtype=np.float64)
    _check_size(image, config)
    bank = build_filter_bank(image.shape[1], image.shape[0], config.filter_bank)
    stack = apply_filter_bank(image, bank)
    oe, maps = energy_maps(stack, config.energy)
    del stack
    j_field = edge_guided_filter(image, maps.et, config.guided)
    i_out = structure_map(j_field, maps.et)
    points = detect_features(i_out, config.detector)
    omax = omax_from_energy(oe, config.weight_sigma, config.energy.epsilon)
    return ImageFeatures(image=image, et=maps.et, i_out=i_out, omax=omax, points=points, energy=oe)


def assign_main_directions(feats: ImageFeatures, config: PipelineConfig) -> None:
    gmag, gang = gradient_polar(*gradient_maps(feats.i_out))
    dirs = main_directions(feats.points, gmag, gang, config.grid.radius, config.direction_bins)
    for p, d in zip(feats.points, dirs):
        p.main_direction = None if np.isnan(d) else float(d)


def _coarse_rotation(fa: ImageFeatures, fb: ImageFeatures, config: PipelineConfig):
    """Rotation of B relative to A from main-direction-rotated descriptors."""
    n_o = config.filter_bank.n_orients
    if fa.points and fa.points[0].main_direction is None:
        assign_main_directions(fa, config)
    assign_main_directions(fb, config)
    ia = [i for i, p in enumerate(fa.points) if p.main_direction is not None]
    ib = [i for i, p in enumerate(fb.points) if p.main_direction is not None]
    if len(ia) < 3 or len(ib) < 3:
        raise NoConsensus("too few points with a dominant direction")
    pa = [fa.points[i] for i in ia]
    pb = [fb.points[i] for i in ib]
    da = build_descriptors(fa.omax, pa, config.grid, [p.main_direction for p in pa], n_o)
    rots_b = np.array([p.main_direction for p in pb])
    xy_b = points_xy(pb)
    if config.coarse_polarity:
        db = np.vstack([build_descriptors(fb.omax, pb, config.grid, rots_b, n_o),
                        build_descriptors(fb.omax, pb, config.grid, rots_b + math.pi, n_o)])
        xy_b = np.vstack([xy_b, xy_b])
    else:
        db = build_descriptors(fb.omax, pb, config.grid, rots_b, n_o)
    ms = match_nn(da, db).with_points(points_xy(pa), xy_b)
    coarse = replace(config.consensus, delta=config.coarse_delta)
    ms, h = fsc_filter(ms, coarse)
    return rotation_angle(h), ms, h


def estimate_global_rotation(image_a, image_b, config: PipelineConfig = PipelineConfig()) -> float:
    fa = extract_features(image_a, config)
    fb = extract_features(image_b, config)
    theta, _, _ = _coarse_rotation(fa, fb, config)
    return theta


def _compensated_omax(fb: ImageFeatures, theta: float, config: PipelineConfig) -> np.ndarray:
    n_o = config.filter_bank.n_orients
    residual = theta - orientation_shift(theta, n_o) * math.pi / n_o
    if abs(residual) < 1e-12:
        return fb.omax
    return orientation_map(fb.image, config, residual)


def match_features(fa: ImageFeatures, fb: ImageFeatures, config: PipelineConfig, theta: float = 0.0):
    """Final matching stage for a known rotation ``theta`` of B relative to A."""
    if not fa.points or not fb.points:
        raise NoConsensus("no feature points detected")
    n_o = config.filter_bank.n_orients
    omax_b = _compensated_omax(fb, theta, config)
    da = build_descriptors(fa.omax, fa.points, config.grid, 0.0, n_o)
    db = build_descriptors(omax_b, fb.points, config.grid, theta, n_o)
    ms = match_nn(da, db).with_points(points_xy(fa.points), points_xy(fb.points))
    return fsc_filter(ms, config.consensus)


def match_images(image_a, image_b, config: PipelineConfig = PipelineConfig(), rotation: float | None = None):
    """Run the whole pipeline; returns ``(MatchSet, H, diagnostics)``.

    ``H`` maps image-A coordinates to image-B coordinates.  When
    ``rotation`` is given it replaces the coarse rotation estimate.
    """
    t0 = time.perf_counter()
    fa = extract_features(image_a, config)
    fb = extract_features(image_b, config)
    t1 = time.perf_counter()
    diag = {"n_points_a": len(fa.points), "n_points_b": len(fb.points)}
    if rotation is not None:
        theta = float(rotation)
    elif config.rotation_compensation:
        theta, coarse_ms, _ = _coarse_rotation(fa, fb, config)
        diag["coarse_inliers"] = coarse_ms.n_inliers
    else:
        theta = 0.0
    t2 = time.perf_counter()
    ms, h = match_features(fa, fb, config, theta)
    t3 = time.perf_counter()
    diag.update({
        "rotation_deg": math.degrees(theta),
        "n_putative": len(ms),
        "n_inliers": ms.n_inliers,
        "time_features": t1 - t0,
        "time_rotation": t2 - t1,
        "time_matching": t3 - t2,
        "runtime": t3 - t0,
    })
    log.debug("match_images: %s", diag)
    return ms, h, diag
