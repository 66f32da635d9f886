import math

import numpy as np
import pytest

from tabletop.camera import (
    BBox2,
    BBox3,
    CameraModel,
    expand_bbox,
    project_bbox,
    project_point,
    project_points,
)
from tabletop.errors import BehindCamera, DegenerateProjection, FullyBehindCamera


def matrix_oracle(camera, p):
    """Independent 3x4 homogeneous projection oracle."""
    k = np.array([[camera.f_i, 0, camera.c_i],
                  [0, camera.f_j, camera.c_j],
                  [0, 0, 1.0]])
    rt = np.hstack([camera.rotation, camera.translation.reshape(3, 1)])
    homo = k @ rt @ np.array([p[0], p[1], p[2], 1.0])
    return homo[0] / homo[2], homo[1] / homo[2]


def random_camera(rng):
    # random orthonormal rotation via QR
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return CameraModel(
        f_i=float(rng.uniform(300, 900)), f_j=float(rng.uniform(300, 900)),
        c_i=float(rng.uniform(200, 440)), c_j=float(rng.uniform(150, 330)),
        rotation=q, translation=rng.uniform(-0.1, 0.1, 3))


def test_principal_point(trivial_camera):
    i, j = project_point(trivial_camera, [0, 0, 1])
    assert (i, j) == (319.5, 239.5)


def test_offset_point(trivial_camera):
    i, j = project_point(trivial_camera, [0.1, -0.05, 1.0])
    assert i == pytest.approx(372.0, abs=1e-12)
    assert j == pytest.approx(213.25, abs=1e-12)


def test_behind_camera(trivial_camera):
    with pytest.raises(BehindCamera):
        project_point(trivial_camera, [0, 0, -1])
    with pytest.raises(BehindCamera):
        project_point(trivial_camera, [0, 0, 0])


def test_matches_matrix_oracle(rng):
    for _ in range(200):
        camera = random_camera(rng)
        # draw points in front of the camera: pick pixel + depth, invert
        depth = rng.uniform(0.3, 5.0)
        cam_pt = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), depth])
        p = camera.rotation.T @ (cam_pt - camera.translation)
        i, j = project_point(camera, p)
        oi, oj = matrix_oracle(camera, p)
        assert i == pytest.approx(oi, rel=1e-9)
        assert j == pytest.approx(oj, rel=1e-9)


def test_project_points_vector_matches_scalar(rng, trivial_camera):
    pts = rng.uniform(-0.5, 0.5, (100, 3)) + [0, 0, 2.0]
    pix, valid = project_points(trivial_camera, pts)
    assert valid.all()
    for k in range(100):
        i, j = project_point(trivial_camera, pts[k])
        assert pix[k, 0] == i and pix[k, 1] == j


def test_degenerate_box_projects_to_one_pixel(trivial_camera):
    box = BBox3([0, 0, 1], [0, 0, 1])
    out = project_bbox(trivial_camera, box)
    assert out.as_list() == [319, 239, 320, 240]


def test_project_bbox_matches_corner_oracle(trivial_camera):
    box = BBox3([-0.1, -0.1, 0.9], [0.1, 0.1, 1.1])
    out = project_bbox(trivial_camera, box)
    pix = np.array([matrix_oracle(trivial_camera, c) for c in box.corners()])
    assert out.u_min == math.floor(pix[:, 0].min())
    assert out.v_min == math.floor(pix[:, 1].min())
    assert out.u_max == math.ceil(pix[:, 0].max())
    assert out.v_max == math.ceil(pix[:, 1].max())


def test_fully_behind_camera(trivial_camera):
    box = BBox3([-0.1, -0.1, -1.1], [0.1, 0.1, -0.9])
    with pytest.raises(FullyBehindCamera):
        project_bbox(trivial_camera, box)


def test_partially_behind_uses_valid_corners(trivial_camera):
    box = BBox3([-0.05, -0.05, -0.5], [0.05, 0.05, 1.0])
    out = project_bbox(trivial_camera, box)
    assert out.u_min < out.u_max and out.v_min < out.v_max


def test_offscreen_box_degenerate(trivial_camera):
    box = BBox3([10.0, 10.0, 1.0], [10.1, 10.1, 1.1])
    with pytest.raises(DegenerateProjection):
        project_bbox(trivial_camera, box)


def test_bbox3_corner_convention():
    box = BBox3([0, 0, 1], [0.1, 0.2, 1.2])
    np.testing.assert_allclose(box.upper, [0, 0.2, 1.2])
    np.testing.assert_allclose(box.lower, [0.1, 0, 1.2])


def test_expand_zero_fraction_identity(trivial_camera):
    box = BBox2(100, 120, 200, 240)
    assert expand_bbox(box, 0.0, trivial_camera) == box


def test_expand_forty_percent(trivial_camera):
    out = expand_bbox(BBox2(100, 100, 200, 200), 0.4, trivial_camera)
    assert out.as_list() == [80, 80, 220, 220]


def test_expand_clamps_at_edges(trivial_camera):
    out = expand_bbox(BBox2(0, 0, 100, 100), 0.4, trivial_camera)
    assert out.as_list() == [0, 0, 120, 120]


def test_expand_rejects_negative(trivial_camera):
    with pytest.raises(ValueError):
        expand_bbox(BBox2(0, 0, 10, 10), -0.1, trivial_camera)


def test_translation_equivariance(rng, trivial_camera):
    """Shifting points and compensating in the extrinsics is exact."""
    pts = rng.uniform(-0.3, 0.3, (50, 3)) + [0, 0, 1.5]
    box = BBox3(pts.min(axis=0), pts.max(axis=0))
    base = project_bbox(trivial_camera, box)
    delta = rng.uniform(-0.5, 0.5, 3)
    moved = BBox3(box.min_xyz + delta, box.max_xyz + delta)
    compensated = CameraModel(
        f_i=trivial_camera.f_i, f_j=trivial_camera.f_j,
        c_i=trivial_camera.c_i, c_j=trivial_camera.c_j,
        rotation=trivial_camera.rotation,
        translation=trivial_camera.translation - trivial_camera.rotation @ delta)
    assert project_bbox(compensated, moved) == base


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraModel(f_i=-1, f_j=525, c_i=320, c_j=240).validate()
    with pytest.raises(ValueError):
        CameraModel(f_i=525, f_j=525, c_i=320, c_j=240,
                    rotation=np.ones((3, 3))).validate()
    with pytest.raises(ValueError):
        CameraModel(f_i=525, f_j=525, c_i=700, c_j=240).validate()
