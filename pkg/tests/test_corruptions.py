import math

import numpy as np
import pytest

from pcadapt.corruptions import KINDS, NOISE_KINDS, CorruptionSpec, corrupt
from pcadapt.errors import EmptyResult, ShapeMismatch

from helpers import random_cloud


def _cloud(seed=0, n=200):
    pts = random_cloud(seed, n=n)
    pts -= pts.mean(axis=0)
    return pts / np.linalg.norm(pts, axis=1).max()


def test_spec_validation_and_json():
    with pytest.raises(ShapeMismatch):
        CorruptionSpec("fog", 3)
    with pytest.raises(ShapeMismatch):
        CorruptionSpec("gaussian", 7)
    spec = CorruptionSpec.from_json('{"kind":"gaussian","severity":5,"seed":2}')
    assert spec.kind == "gaussian" and spec.severity == 5 and spec.seed == 2
    assert spec.key == "gaussian:5"


def test_gaussian_severity_zero_is_identity():
    pts = _cloud(1)
    out = corrupt(pts, CorruptionSpec("gaussian", 0, seed=3))
    assert (out.points == pts).all()


def test_determinism_per_spec():
    pts = _cloud(2)
    for kind in KINDS:
        spec = CorruptionSpec(kind, 3, seed=11)
        a = corrupt(pts, spec)
        b = corrupt(pts, spec)
        assert (a.points == b.points).all(), kind
        c = corrupt(pts, CorruptionSpec(kind, 3, seed=12))
        assert not (a.points.shape == c.points.shape and (a.points == c.points).all()), kind


def test_point_count_laws():
    n = 1000
    pts = _cloud(3, n=n)
    for s in range(1, 6):
        assert corrupt(pts, CorruptionSpec("uniform", s)).n == n
        assert corrupt(pts, CorruptionSpec("gaussian", s)).n == n
        assert corrupt(pts, CorruptionSpec("impulse", s)).n == n
        assert corrupt(pts, CorruptionSpec("density_inc", s)).n == n
        assert corrupt(pts, CorruptionSpec("rotation", s)).n == n
        assert corrupt(pts, CorruptionSpec("shear", s)).n == n
        assert corrupt(pts, CorruptionSpec("rbf_distortion", s)).n == n
        assert corrupt(pts, CorruptionSpec("background", s)).n == n + math.ceil(0.02 * s * n)
        assert corrupt(pts, CorruptionSpec("upsampling", s)).n == n + math.ceil(0.1 * s * n)
        assert corrupt(pts, CorruptionSpec("cutout", s)).n == n - math.ceil(0.05 * s * n)
        assert corrupt(pts, CorruptionSpec("density_dec", s)).n == math.ceil((1 - 0.15 * s) * n)


def test_density_dec_severity_two_exact_count():
    pts = _cloud(4, n=1000)
    assert corrupt(pts, CorruptionSpec("density_dec", 2)).n == 700


def test_rotation_is_isometry():
    pts = _cloud(5, n=80)
    out = corrupt(pts, CorruptionSpec("rotation", 5, seed=6)).points
    d0 = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    d1 = np.linalg.norm(out[:, None] - out[None, :], axis=2)
    assert np.abs(d0 - d1).max() < 1e-9


def test_rotation_angle_scales_with_severity():
    pts = _cloud(6, n=60)
    # severity 1 keeps angles within pi/5: mean displacement clearly below
    # a full random rotation's
    small = [np.linalg.norm(corrupt(pts, CorruptionSpec("rotation", 1, seed=i)).points - pts)
             for i in range(20)]
    big = [np.linalg.norm(corrupt(pts, CorruptionSpec("rotation", 5, seed=i)).points - pts)
           for i in range(20)]
    assert np.mean(small) < np.mean(big)


def test_impulse_moves_exact_subset():
    n = 500
    pts = _cloud(7, n=n)
    for s in (1, 5):
        out = corrupt(pts, CorruptionSpec("impulse", s, seed=8))
        moved = (out.points != pts).any(axis=1).sum()
        assert moved == math.ceil(0.02 * s * n)


def test_background_points_inside_bounding_box_and_mask():
    pts = _cloud(8, n=300)
    out = corrupt(pts, CorruptionSpec("background", 5, seed=9))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extra = out.points[~out.source_mask]
    assert len(extra) == math.ceil(0.02 * 5 * 300)
    assert (extra >= lo - 1e-12).all() and (extra <= hi + 1e-12).all()
    assert (out.points[out.source_mask] == pts).all()


def test_upsampling_mask_identifies_originals():
    from pcadapt.corruptions import PARAMS

    pts = _cloud(9, n=200)
    out = corrupt(pts, CorruptionSpec("upsampling", 3, seed=10))
    assert out.source_mask.sum() == 200
    assert (out.points[:200] == pts).all()
    # jittered duplicates land near original points (within ~6 sigma)
    extra = out.points[200:]
    d = np.linalg.norm(extra[:, None] - pts[None, :], axis=2).min(axis=1)
    assert d.max() < 6 * PARAMS["upsampling_jitter"]


def test_noise_kinds_keep_original_indices_identifiable():
    pts = _cloud(10, n=150)
    for kind in NOISE_KINDS:
        out = corrupt(pts, CorruptionSpec(kind, 4, seed=11))
        assert out.source_mask is not None
        assert out.source_mask.sum() == 150


def test_cutout_removes_a_ball():
    pts = _cloud(11, n=400)
    out = corrupt(pts, CorruptionSpec("cutout", 5, seed=12))
    # the removed points form the neighborhood of some anchor: the nearest
    # removed point to any kept point is farther than within the removed set
    removed_count = 400 - out.n
    assert removed_count == math.ceil(0.05 * 5 * 400)


def test_cutout_and_density_reject_tiny_clouds():
    pts = _cloud(12, n=9)
    with pytest.raises(EmptyResult):
        corrupt(pts, CorruptionSpec("cutout", 5))
    with pytest.raises(EmptyResult):
        corrupt(pts, CorruptionSpec("density_dec", 5))


def test_occlusion_keeps_halfspace():
    pts = _cloud(13, n=500)
    out = corrupt(pts, CorruptionSpec("occlusion_halfspace", 5, seed=14))
    assert 8 <= out.n < 500
    # severity 1 removes fewer points than severity 5 on average
    kept1 = [corrupt(pts, CorruptionSpec("occlusion_halfspace", 1, seed=i)).n for i in range(10)]
    kept5 = [corrupt(pts, CorruptionSpec("occlusion_halfspace", 5, seed=i)).n for i in range(10)]
    assert np.mean(kept1) > np.mean(kept5)


def test_shear_unit_diagonal():
    pts = _cloud(14, n=100)
    out = corrupt(pts, CorruptionSpec("shear", 2, seed=15)).points
    # a shear with unit diagonal preserves volume sign and is invertible;
    # recover the matrix by least squares and check its diagonal
    m, *_ = np.linalg.lstsq(pts, out, rcond=None)
    assert np.abs(np.diag(m.T) - 1.0).max() < 1e-9
    off = m.T - np.diag(np.diag(m.T))
    assert np.abs(off).max() <= 0.2 + 1e-9


def test_rbf_distortion_bounded_displacement():
    pts = _cloud(15, n=300)
    for s in (1, 5):
        out = corrupt(pts, CorruptionSpec("rbf_distortion", s, seed=16)).points
        disp = np.linalg.norm(out - pts, axis=1)
        assert disp.max() <= 5 * 0.03 * s + 1e-9  # 5 kernels, each bounded


def test_density_inc_resamples_original_points():
    pts = _cloud(16, n=200)
    out = corrupt(pts, CorruptionSpec("density_inc", 4, seed=17))
    assert out.n == 200
    # every output point is one of the inputs
    d = np.linalg.norm(out.points[:, None] - pts[None, :], axis=2).min(axis=1)
    assert d.max() == 0.0
    # duplicates exist (resampling with replacement concentrates points)
    unique = np.unique(out.points, axis=0)
    assert len(unique) < 200
