"""Orientation-stack weighting, the dominant-orientation map and log-polar descriptors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .energy import EPSILON, OrientedEnergy
from .errors import EmptyPatch, InvalidConfig, PatchOutOfBounds, TooFewOrientations
from .imagecore import direct_convolve, gaussian_kernel

ORIENT_KERNEL = (1.0, 8.0, 1.0)


@dataclass(frozen=True)
class LogPolarGrid:
    radius: float = 40.0
    ring_fractions: tuple = (0.125, 0.25, 0.5, 1.0)
    n_angular: int = 9

    def __post_init__(self):
        fr = self.ring_fractions
        if self.radius < 1:
            raise InvalidConfig("descriptor radius must be >= 1")
        if any(b <= a for a, b in zip(fr, fr[1:])) or fr[-1] != 1.0 or fr[0] <= 0:
            raise InvalidConfig("ring fractions must increase strictly and end at 1")
        if self.n_angular < 1:
            raise InvalidConfig("n_angular must be >= 1")

    @property
    def radial_edges(self) -> np.ndarray:
        return self.radius * np.asarray(self.ring_fractions, dtype=np.float64)

    @property
    def n_rings(self) -> int:
        return len(self.ring_fractions)

    @property
    def n_locations(self) -> int:
        return self.n_rings * self.n_angular

    def descriptor_length(self, n_orients: int) -> int:
        return self.n_locations * n_orients


@dataclass
class Descriptor:
    values: np.ndarray
    point: object = None


def _layers(oe) -> np.ndarray:
    if isinstance(oe, OrientedEnergy):
        return oe.energy
    return np.asarray(oe, dtype=np.float64)


def convolutional_weighting(oe, sigma: float = 1.0) -> np.ndarray:
    """Gaussian smoothing in space then a circular [1, 8, 1] pass across orientation.

    ``oe`` is an :class:`OrientedEnergy` or an ``(n_orients, H, W)`` array.
    ``sigma <= 0`` skips the spatial stage.
    """
    layers = _layers(oe)
    n = layers.shape[0]
    if n < 3:
        raise TooFewOrientations(f"need >= 3 orientations, got {n}")
    if sigma > 0:
        kernel = gaussian_kernel(sigma)
        smoothed = np.stack([direct_convolve(layer, kernel, "replicate") for layer in layers])
    else:
        smoothed = layers.copy()
    a, b, c = ORIENT_KERNEL
    return a * np.roll(smoothed, 1, axis=0) + b * smoothed + c * np.roll(smoothed, -1, axis=0)


def normalize_orientation_stack(stack, epsilon: float = EPSILON) -> np.ndarray:
    stack = np.asarray(stack, dtype=np.float64)
    return stack / np.sqrt((np.abs(stack) ** 2).sum(axis=0) + epsilon)


def orientation_index_map(stack) -> np.ndarray:
    """Per-pixel index of the strongest layer; ties go to the smallest index."""
    return np.argmax(np.asarray(stack), axis=0).astype(np.int64)


def omax_from_energy(oe, sigma: float = 1.0, epsilon: float = EPSILON) -> np.ndarray:
    return orientation_index_map(normalize_orientation_stack(convolutional_weighting(oe, sigma), epsilon))


def orientation_shift(rotation: float, n_orients: int) -> int:
    """Whole orientation bins spanned by ``rotation`` (orientations are pi-periodic)."""
    return int(round(rotation * n_orients / math.pi))


class _PatchTable:
    """Per-offset ring index and polar angle for a disc of the grid radius."""

    def __init__(self, grid: LogPolarGrid):
        r = int(math.floor(grid.radius))
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        rho = np.sqrt(dx * dx + dy * dy)
        keep = rho <= grid.radius
        self.dy = dy[keep]
        self.dx = dx[keep]
        self.ring = np.searchsorted(grid.radial_edges, rho[keep], side="left")
        self.angle = np.arctan2(self.dy, self.dx).astype(np.float64)
        self.extent = r
        self.grid = grid

    def sectors(self, rotation: float) -> np.ndarray:
        twopi = 2.0 * math.pi
        width = twopi / self.grid.n_angular
        d = self.angle - rotation
        rel = d - twopi * np.floor(d / twopi)
        return np.minimum(np.floor(rel / width).astype(np.int64), self.grid.n_angular - 1)


_TABLES: dict = {}


def _table(grid: LogPolarGrid) -> _PatchTable:
    tab = _TABLES.get(grid)
    if tab is None:
        tab = _TABLES[grid] = _PatchTable(grid)
    return tab


def descriptor_votes(omax: np.ndarray, point, grid: LogPolarGrid, rotation: float = 0.0,
                     n_orients: int | None = None) -> np.ndarray:
    """Unnormalized vote counts, ring-major then sector then orientation bin."""
    omax = np.asarray(omax)
    if n_orients is None:
        n_orients = int(omax.max()) + 1
    tab = _table(grid)
    cx, cy = int(round(point.x)), int(round(point.y))
    h, w = omax.shape
    r = tab.extent
    if cx - r < 0 or cy - r < 0 or cx + r >= w or cy + r >= h:
        raise PatchOutOfBounds(f"patch of radius {grid.radius} at ({cx}, {cy}) leaves {w}x{h} image")
    if tab.dx.size == 0:
        raise EmptyPatch("descriptor disc contains no pixels")
    shift = orientation_shift(rotation, n_orients)
    obin = np.mod(omax[cy + tab.dy, cx + tab.dx] - shift, n_orients)
    loc = tab.ring * grid.n_angular + tab.sectors(rotation)
    return np.bincount(loc * n_orients + obin, minlength=grid.n_locations * n_orients)


def build_descriptor(omax: np.ndarray, point, grid: LogPolarGrid = LogPolarGrid(),
                     rotation: float = 0.0, n_orients: int = 6) -> Descriptor:
    """L2-normalized log-polar histogram of dominant-orientation indices.

    Every disc pixel casts one vote into (ring, angular sector measured
    from ``rotation``, orientation bin cyclically shifted back by the whole
    number of filter orientations ``rotation`` spans).
    """
    votes = descriptor_votes(omax, point, grid, rotation, n_orients).astype(np.float64)
    norm = np.linalg.norm(votes)
    if norm == 0:
        raise EmptyPatch("descriptor has no votes")
    return Descriptor(values=votes / norm, point=point)


@numba.njit(cache=True)
def _votes_kernel(omax, cx, cy, rotations, shifts, dy, dx, ring, angle, n_angular, n_orients, out):
    twopi = 2.0 * math.pi
    width = twopi / n_angular
    for i in range(len(cx)):
        rot = rotations[i]
        for k in range(len(dy)):
            d = angle[k] - rot
            rel = d - twopi * math.floor(d / twopi)
            sec = min(int(math.floor(rel / width)), n_angular - 1)
            ob = (omax[cy[i] + dy[k], cx[i] + dx[k]] - shifts[i]) % n_orients
            out[i, (ring[k] * n_angular + sec) * n_orients + ob] += 1.0


def build_descriptors(omax: np.ndarray, points, grid: LogPolarGrid = LogPolarGrid(),
                      rotations=None, n_orients: int = 6) -> np.ndarray:
    """Descriptor matrix ``(len(points), 36 * n_orients)`` for many points.

    ``rotations`` is a scalar or one angle per point.  Produces the same
    votes as :func:`build_descriptor`, batched.
    """
    n = len(points)
    out = np.zeros((n, grid.descriptor_length(n_orients)))
    if n == 0:
        return out
    if rotations is None:
        rotations = 0.0
    rotations = np.ascontiguousarray(np.broadcast_to(np.asarray(rotations, dtype=np.float64), (n,)))
    tab = _table(grid)
    omax = np.ascontiguousarray(omax, dtype=np.int64)
    h, w = omax.shape
    cx = np.array([int(round(p.x)) for p in points], dtype=np.int64)
    cy = np.array([int(round(p.y)) for p in points], dtype=np.int64)
    r = tab.extent
    bad = (cx - r < 0) | (cy - r < 0) | (cx + r >= w) | (cy + r >= h)
    if bad.any():
        i = int(np.argmax(bad))
        raise PatchOutOfBounds(f"patch of radius {grid.radius} at ({cx[i]}, {cy[i]}) leaves {w}x{h} image")
    shifts = np.array([orientation_shift(float(t), n_orients) for t in rotations], dtype=np.int64)
    _votes_kernel(omax, cx, cy, rotations, shifts, tab.dy.astype(np.int64), tab.dx.astype(np.int64),
                  tab.ring.astype(np.int64), tab.angle, grid.n_angular, n_orients, out)
    norms = np.linalg.norm(out, axis=1)
    return out / norms[:, None]
