import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filer.detector import FeaturePoint
from filer.errors import DegenerateGeometry, DimensionMismatch, EmptyDescriptorSet, InsufficientMatches, NoConsensus
from filer.evalbench import count_correct
from filer.matcher import (ConsensusParams, MatchSet, PipelineConfig, apply_affine, estimate_global_rotation,
                           fsc_filter, gradient_maps, gradient_polar, main_direction, main_directions,
                           match_images, match_nn, residuals, rotation_angle)


def mutual_nn_oracle(a, b):
    d = np.array([[np.sqrt(((x - y) ** 2).sum()) for y in b] for x in a])
    pairs = set()
    for i in range(len(a)):
        j = int(np.argmin(d[i]))
        if int(np.argmin(d[:, j])) == i:
            pairs.add((i, j))
    return pairs, d


def test_match_nn_identity(rng):
    a = rng.normal(size=(30, 16))
    ms = match_nn(a, a)
    assert np.array_equal(np.sort(ms.index_a), np.arange(30))
    assert np.array_equal(ms.index_a, ms.index_b) and np.all(ms.distance < 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 10_000))
def test_match_nn_oracle_and_symmetry(na, nb, seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(na, 8))
    b = r.normal(size=(nb, 8))
    ms = match_nn(a, b, chunk=7)
    pairs, d = mutual_nn_oracle(a, b)
    assert set(zip(ms.index_a.tolist(), ms.index_b.tolist())) == pairs
    assert len(set(ms.index_b.tolist())) == len(ms)
    assert np.allclose(ms.distance, d[ms.index_a, ms.index_b])
    assert np.all(np.diff(ms.distance) >= 0)
    back = match_nn(b, a)
    assert set(zip(back.index_b.tolist(), back.index_a.tolist())) == pairs


def test_match_nn_errors():
    with pytest.raises(EmptyDescriptorSet):
        match_nn(np.zeros((0, 4)), np.ones((3, 4)))
    with pytest.raises(DimensionMismatch):
        match_nn(np.ones((2, 4)), np.ones((3, 5)))


def affine_matches(rng, n, outlier_frac=0.0, noise=0.0):
    h = np.array([[0.9, -0.3, 12.0], [0.35, 1.05, -7.0], [0, 0, 1]])
    src = rng.uniform(0, 400, size=(n, 2))
    dst = apply_affine(h, src) + rng.normal(0, noise, size=(n, 2)) if noise else apply_affine(h, src)
    n_out = int(round(outlier_frac * n))
    bad = rng.choice(n, n_out, replace=False)
    dst[bad] = rng.uniform(0, 400, size=(n_out, 2))
    idx = np.arange(n)
    ms = MatchSet(idx, idx, rng.uniform(size=n), xy_a=src, xy_b=dst)
    return ms, h, bad


def test_fsc_exact_model(rng):
    ms, h, _ = affine_matches(rng, 60)
    out, h_est = fsc_filter(ms)
    assert out.inlier.all()
    assert np.abs(h_est - h).max() < 1e-6


def test_fsc_outliers_and_determinism(rng):
    ms, h, bad = affine_matches(rng, 200, outlier_frac=0.5, noise=0.3)
    params = ConsensusParams(rng_seed=11)
    out1, h1 = fsc_filter(ms, params)
    out2, h2 = fsc_filter(ms, params)
    assert np.array_equal(out1.inlier, out2.inlier) and np.array_equal(h1, h2)
    grid = np.array([(x, y) for x in np.linspace(0, 400, 7) for y in np.linspace(0, 400, 7)])
    err = np.sqrt(((apply_affine(h1, grid) - apply_affine(h, grid)) ** 2).sum(1))
    assert err.mean() < 0.5
    res = residuals(h1, ms.xy_a, ms.xy_b)
    assert np.array_equal(out1.inlier, res < params.delta)


def test_fsc_errors(rng):
    ms, _, _ = affine_matches(rng, 2)
    with pytest.raises(InsufficientMatches):
        fsc_filter(ms)
    src = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    line = MatchSet(np.arange(10), np.arange(10), np.zeros(10), xy_a=src, xy_b=src)
    with pytest.raises(DegenerateGeometry):
        fsc_filter(line)
    noise = MatchSet(np.arange(30), np.arange(30), np.zeros(30),
                     xy_a=rng.uniform(0, 500, (30, 2)), xy_b=rng.uniform(0, 500, (30, 2)))
    with pytest.raises(NoConsensus):
        fsc_filter(noise, ConsensusParams(delta=0.5, min_inliers=10))


def test_rotation_angle():
    c, s = math.cos(0.7), math.sin(0.7)
    assert rotation_angle(np.array([[2 * c, -2 * s, 0], [2 * s, 2 * c, 0], [0, 0, 1]])) == pytest.approx(0.7)


def test_gradient_ramp_constant_and_oracle(rng):
    ramp = np.tile(np.arange(10.0), (8, 1))
    gx, gy = gradient_maps(ramp)
    assert np.all(gx[:, 1:-1] == 2.0) and not gy.any()
    gx, gy = gradient_maps(np.full((5, 5), 3.0))
    assert not gx.any() and not gy.any()
    p = rng.uniform(size=(9, 11))
    gx, gy = gradient_maps(p)
    for y in range(9):
        for x in range(11):
            assert gx[y, x] == p[y, min(x + 1, 10)] - p[y, max(x - 1, 0)]
            assert gy[y, x] == p[min(y + 1, 8), x] - p[max(y - 1, 0), x]


def test_main_direction_cases():
    n = 101
    yy, xx = np.mgrid[0:n, 0:n].astype(float)
    p = FeaturePoint(50, 50, 0)
    mag, ang = gradient_polar(*gradient_maps(xx))
    assert abs(main_direction(p, mag, ang, 20)) <= math.radians(5) + 1e-12
    t = math.radians(40)
    mag, ang = gradient_polar(*gradient_maps(math.cos(t) * xx + math.sin(t) * yy))
    assert abs(main_direction(p, mag, ang, 20) - t) <= math.radians(10)
    zero = np.zeros((n, n))
    assert main_direction(p, zero, zero, 20) is None


def test_main_directions_batch_matches_reference(rng):
    img = rng.uniform(size=(90, 90))
    mag, ang = gradient_polar(*gradient_maps(img))
    mag[30:60, 30:60] = 0
    pts = [FeaturePoint(float(x), float(y), 0) for x, y in rng.integers(20, 70, size=(30, 2))]
    pts.append(FeaturePoint(45, 45, 0))
    batch = main_directions(pts, mag, ang, 12, 36)
    for p, d in zip(pts, batch):
        ref = main_direction(p, mag, ang, 12, 36)
        assert (ref is None and np.isnan(d)) or ref == d
    assert np.isnan(batch[-1])


def test_global_rotation_identity_and_rotated(pair_50):
    a, b, _ = pair_50
    assert abs(math.degrees(estimate_global_rotation(a, a))) < 2
    assert abs(math.degrees(estimate_global_rotation(a, b)) - 50) < 10


def test_match_images_self_and_pair(pair_50):
    a, b, gt = pair_50
    ms, h, diag = match_images(a, a)
    assert ms.n_inliers == len(ms) and np.abs(h - np.eye(3)).max() < 1e-6
    assert ms.n_inliers >= 0.9 * diag["n_points_a"]
    ms, h, diag = match_images(a, b)
    inl = ms.inlier
    ncm = count_correct(ms.xy_a[inl], ms.xy_b[inl], gt.h_true)
    assert ncm >= 50 and ncm / ms.n_inliers >= 0.9
    assert np.all(residuals(h, ms.xy_a[inl], ms.xy_b[inl]) < 3.0)
    assert np.all(residuals(h, ms.xy_a[~inl], ms.xy_b[~inl]) >= 3.0)


def test_pipeline_config_guard():
    from filer.descriptor import LogPolarGrid
    from filer.errors import InvalidConfig
    with pytest.raises(InvalidConfig):
        PipelineConfig(grid=LogPolarGrid(radius=60))
