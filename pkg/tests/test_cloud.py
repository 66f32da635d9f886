import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tabletop.cloud import (
    LeafCalibration,
    PassthroughBounds,
    PointCloud,
    _voxel_downsample_numpy,
    calibrate_leaf,
    load_pcd,
    passthrough,
    save_pcd,
    voxel_downsample,
)
from tabletop.errors import (
    AlphaOutOfRange,
    EmptyCloud,
    InvalidBounds,
    MalformedHeader,
    MissingFile,
    NonAsciiData,
    NonPositiveLeaf,
    RejectedInvalidPoint,
)

from conftest import random_cloud


# --- oracles ----------------------------------------------------------------

def voxel_oracle(cloud, leaf):
    """Brute-force binning over a dict of floor(coord/leaf) cells."""
    cells = {}
    for i in range(len(cloud)):
        key = tuple(int(np.floor(c / leaf)) for c in cloud.xyz[i])
        cells.setdefault(key, []).append(i)
    out = []
    for (cx, cy, cz), members in cells.items():
        xyz = cloud.xyz[members].mean(axis=0)
        rgb = np.floor(cloud.rgb[members].astype(float).mean(axis=0) + 0.5)
        out.append(((cz, cy, cx), xyz, rgb))
    out.sort(key=lambda row: row[0])
    return out


def passthrough_oracle(cloud, bounds):
    keep = []
    for i in range(len(cloud)):
        x, y, z = cloud.xyz[i]
        ok = True
        for value, lo, hi in [(x, bounds.x_min, bounds.x_max),
                              (y, bounds.y_min, bounds.y_max),
                              (z, bounds.z_min, bounds.z_max)]:
            if lo is not None and value < lo:
                ok = False
            if hi is not None and value > hi:
                ok = False
        if ok:
            keep.append(i)
    return keep


# --- PCD I/O ------------------------------------------------------------------

def test_load_single_point_decodes_packed_rgb(tmp_path):
    path = tmp_path / "one.pcd"
    path.write_text(
        "VERSION .7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F U\n"
        "COUNT 1 1 1 1\nWIDTH 1\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
        "POINTS 1\nDATA ascii\n0 0 1 16711680\n")
    cloud = load_pcd(path)
    assert len(cloud) == 1
    np.testing.assert_allclose(cloud.xyz[0], [0, 0, 1])
    assert tuple(cloud.rgb[0]) == (255, 0, 0)


def test_point_count_mismatch_is_malformed(tmp_path):
    path = tmp_path / "bad.pcd"
    path.write_text(
        "VERSION .7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F U\n"
        "COUNT 1 1 1 1\nWIDTH 2\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
        "POINTS 2\nDATA ascii\n0 0 1 0\n")
    with pytest.raises(MalformedHeader):
        load_pcd(path)


def test_roundtrip_1000_random_points(tmp_path, rng):
    cloud = random_cloud(rng, 1000)
    path = tmp_path / "cloud.pcd"
    save_pcd(cloud, path)
    loaded = load_pcd(path)
    assert len(loaded) == 1000
    np.testing.assert_allclose(loaded.xyz, cloud.xyz, atol=1e-6)
    np.testing.assert_array_equal(loaded.rgb, cloud.rgb)


def test_save_empty_cloud(tmp_path):
    path = tmp_path / "empty.pcd"
    save_pcd(PointCloud.empty(), path)
    assert "POINTS 0" in path.read_text()
    assert len(load_pcd(path)) == 0


def test_save_rejects_nan(tmp_path):
    cloud = PointCloud(np.array([[0.0, np.nan, 1.0]]),
                       np.zeros((1, 3), dtype=np.uint8))
    with pytest.raises(RejectedInvalidPoint):
        save_pcd(cloud, tmp_path / "nan.pcd")


def test_data_section_row_count(tmp_path, rng):
    cloud = random_cloud(rng, 3)
    path = tmp_path / "three.pcd"
    save_pcd(cloud, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 10 + 3


def test_nan_rows_dropped_with_warning(tmp_path, caplog):
    path = tmp_path / "nanrow.pcd"
    path.write_text(
        "VERSION .7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F U\n"
        "COUNT 1 1 1 1\nWIDTH 2\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
        "POINTS 2\nDATA ascii\n0 0 1 0\nnan 0 1 0\n")
    with caplog.at_level(logging.WARNING, logger="tabletop"):
        cloud = load_pcd(path)
    assert len(cloud) == 1
    assert "dropped 1" in caplog.text


def test_missing_file():
    with pytest.raises(MissingFile):
        load_pcd("/nonexistent/none.pcd")


def test_binary_data_rejected(tmp_path):
    path = tmp_path / "bin.pcd"
    path.write_text(
        "VERSION .7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F U\n"
        "COUNT 1 1 1 1\nWIDTH 0\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
        "POINTS 0\nDATA binary\n")
    with pytest.raises(NonAsciiData):
        load_pcd(path)


def test_unknown_fields_layout_rejected(tmp_path):
    path = tmp_path / "fields.pcd"
    path.write_text(
        "VERSION .7\nFIELDS x y z\nSIZE 4 4 4 4\nTYPE F F F U\n"
        "COUNT 1 1 1 1\nWIDTH 0\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
        "POINTS 0\nDATA ascii\n")
    with pytest.raises(MalformedHeader):
        load_pcd(path)


def test_rgb_out_of_range_rejected(tmp_path):
    path = tmp_path / "rgb.pcd"
    path.write_text(
        "VERSION .7\nFIELDS x y z rgb\nSIZE 4 4 4 4\nTYPE F F F U\n"
        "COUNT 1 1 1 1\nWIDTH 1\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
        "POINTS 1\nDATA ascii\n0 0 1 16777216\n")
    with pytest.raises(MalformedHeader):
        load_pcd(path)


# --- voxel downsampling -------------------------------------------------------

def test_voxel_empty_cloud():
    out = voxel_downsample(PointCloud.empty(), 0.01)
    assert len(out) == 0


def test_voxel_rejects_nonpositive_leaf(make_cloud):
    with pytest.raises(NonPositiveLeaf):
        voxel_downsample(make_cloud(5), 0.0)


def test_cube_corners_merge_to_center():
    corners = np.array([[x, y, z] for x in (0.01, 0.06)
                        for y in (0.01, 0.06) for z in (0.01, 0.06)])
    cloud = PointCloud.from_xyz(corners, color=(10, 20, 30))
    out = voxel_downsample(cloud, 0.1)
    assert len(out) == 1
    np.testing.assert_allclose(out.xyz[0], [0.035, 0.035, 0.035], atol=1e-12)
    oracle = voxel_oracle(cloud, 0.1)
    np.testing.assert_allclose(out.xyz[0], oracle[0][1], atol=1e-12)


def test_voxel_matches_oracle_random(rng):
    for _ in range(20):
        cloud = random_cloud(rng, int(rng.integers(1, 400)))
        leaf = float(rng.uniform(0.05, 0.5))
        out = voxel_downsample(cloud, leaf)
        oracle = voxel_oracle(cloud, leaf)
        assert len(out) == len(oracle)
        for i, (_, xyz, rgb) in enumerate(oracle):
            np.testing.assert_allclose(out.xyz[i], xyz, atol=1e-9)
            np.testing.assert_array_equal(out.rgb[i], rgb)


def test_voxel_matches_oracle_large(rng):
    cloud = random_cloud(rng, 100_000)
    leaf = 0.07
    out = voxel_downsample(cloud, leaf)
    oracle = voxel_oracle(cloud, leaf)
    assert len(out) == len(oracle)
    ref_xyz = np.array([row[1] for row in oracle])
    np.testing.assert_allclose(out.xyz, ref_xyz, atol=1e-9)


def test_voxel_output_canonically_sorted(rng):
    cloud = random_cloud(rng, 5000)
    leaf = 0.2
    out = voxel_downsample(cloud, leaf)
    cells = np.floor(out.xyz / leaf).astype(int)
    keys = list(map(tuple, cells[:, ::-1]))  # (z, y, x)
    assert keys == sorted(keys)


def test_voxel_idempotent(rng):
    cloud = random_cloud(rng, 3000)
    leaf = 0.15
    once = voxel_downsample(cloud, leaf)
    # each output point must sit in its own source cell for idempotence
    assert len(voxel_downsample(once, leaf)) == len(once)
    twice = voxel_downsample(once, leaf)
    np.testing.assert_allclose(twice.xyz, once.xyz, atol=1e-12)
    np.testing.assert_array_equal(twice.rgb, once.rgb)


def test_voxel_color_rounds_half_up():
    cloud = PointCloud(np.zeros((2, 3)),
                       np.array([[10, 0, 1], [11, 1, 2]], dtype=np.uint8))
    out = voxel_downsample(cloud, 1.0)
    assert tuple(out.rgb[0]) == (11, 1, 2)  # means 10.5, 0.5, 1.5 round up


def test_kernel_matches_numpy_fallback(rng):
    cloud = random_cloud(rng, 2000)
    fast = voxel_downsample(cloud, 0.1)
    slow = _voxel_downsample_numpy(cloud, 0.1)
    np.testing.assert_allclose(fast.xyz, slow.xyz, atol=1e-9)
    np.testing.assert_array_equal(fast.rgb, slow.rgb)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 120), st.floats(0.05, 0.8), st.integers(0, 2 ** 31))
def test_voxel_oracle_property(n, leaf, seed):
    cloud = random_cloud(np.random.default_rng(seed), n)
    out = voxel_downsample(cloud, leaf)
    oracle = voxel_oracle(cloud, leaf)
    assert len(out) == len(oracle)
    for i, (_, xyz, _) in enumerate(oracle):
        np.testing.assert_allclose(out.xyz[i], xyz, atol=1e-9)


# --- leaf calibration ---------------------------------------------------------

def test_calibrate_alpha_one_returns_lower_endpoint(make_cloud):
    result = calibrate_leaf(make_cloud(50), alpha=1.0)
    assert result.leaf == pytest.approx(1e-4)
    assert result.converged


def test_calibrate_grid_quarter_ratio():
    xs = np.arange(100) * 0.01
    gx, gy = np.meshgrid(xs, xs)
    cloud = PointCloud.from_xyz(
        np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1))
    result = calibrate_leaf(cloud, alpha=0.25)
    assert result.converged
    assert 0.2 <= result.achieved_ratio <= 0.3
    assert 0.015 <= result.leaf <= 0.03  # ~0.02 merges 2x2 grid points


def test_calibrate_standard_scene_alpha_point_one():
    from tabletop import suite, synth
    cloud = synth.synth_cloud(suite.make_scene(3), 0)
    result = calibrate_leaf(cloud, alpha=0.1)
    assert result.converged
    assert 0.08 <= result.achieved_ratio <= 0.12


def test_calibrate_errors(make_cloud):
    with pytest.raises(EmptyCloud):
        calibrate_leaf(PointCloud.empty(), 0.5)
    with pytest.raises(AlphaOutOfRange):
        calibrate_leaf(make_cloud(10), 0.0)
    with pytest.raises(AlphaOutOfRange):
        calibrate_leaf(make_cloud(10), 1.5)


def test_calibrate_unreachable_alpha_flags_not_converged():
    cloud = PointCloud.from_xyz(np.array([[0, 0, 0], [0.5, 0, 0],
                                          [0, 0.5, 0], [0, 0, 0.5]]))
    result = calibrate_leaf(cloud, alpha=0.01)
    assert not result.converged
    assert result.leaf == pytest.approx(1.0)  # closest endpoint


# --- passthrough ---------------------------------------------------------------

def test_passthrough_unbounded_is_identity(make_cloud):
    cloud = make_cloud(100)
    out = passthrough(cloud, PassthroughBounds())
    np.testing.assert_array_equal(out.xyz, cloud.xyz)


def test_passthrough_z_interval():
    cloud = PointCloud.from_xyz(np.array([[0, 0, 0.5], [0, 0, 2.0]]))
    out = passthrough(cloud, PassthroughBounds(z_min=0.0, z_max=1.0))
    assert len(out) == 1
    assert out.xyz[0, 2] == 0.5


def test_passthrough_matches_scan_oracle(rng):
    cloud = random_cloud(rng, 10_000)
    bounds = PassthroughBounds(x_min=-0.5, x_max=0.7, z_min=-0.2)
    out = passthrough(cloud, bounds)
    keep = passthrough_oracle(cloud, bounds)
    np.testing.assert_array_equal(out.xyz, cloud.xyz[keep])
    np.testing.assert_array_equal(out.rgb, cloud.rgb[keep])


def test_passthrough_boundary_closed():
    cloud = PointCloud.from_xyz(np.array([[0.0, 0, 0], [1.0, 0, 0]]))
    out = passthrough(cloud, PassthroughBounds(x_min=0.0, x_max=1.0))
    assert len(out) == 2


def test_invalid_bounds():
    with pytest.raises(InvalidBounds):
        passthrough(PointCloud.empty(), PassthroughBounds(x_min=1.0, x_max=1.0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_passthrough_composition(seed):
    rng = np.random.default_rng(seed)
    cloud = random_cloud(rng, 200)
    b1 = PassthroughBounds(x_min=-0.8, x_max=0.9, y_min=-0.7)
    b2 = PassthroughBounds(x_min=-0.5, y_max=0.6, z_min=-0.9, z_max=0.8)
    seq = passthrough(passthrough(cloud, b1), b2)
    combined = passthrough(cloud, b1.intersect(b2))
    np.testing.assert_array_equal(seq.xyz, combined.xyz)


def test_cloud_rejects_mismatched_arrays():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), np.zeros((2, 3), dtype=np.uint8))
