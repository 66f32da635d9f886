import numpy as np
import pytest

from tabletop import _kernels
from tabletop.cloud import PointCloud
from tabletop.errors import DegenerateCloud, IndexOutOfRange, NoPlaneFound
from tabletop.plane import (
    Lcg64,
    PlaneModel,
    RansacParams,
    canonical_sign,
    ransac_plane,
    sample_triplets,
    split_plane,
)

from conftest import random_cloud


def noisy_plane_cloud(seed=7, n_plane=800, n_outliers=200, z=0.8, sigma=0.002):
    """Plane z = const with Gaussian noise plus uniform outliers in a slab."""
    rng = np.random.default_rng(seed)
    plane_xy = rng.uniform(-0.5, 0.5, (n_plane, 2))
    plane = np.column_stack([plane_xy, z + rng.normal(0, sigma, n_plane)])
    outliers = np.column_stack([
        rng.uniform(-0.5, 0.5, (n_outliers, 2)),
        z + rng.uniform(0.03, 0.33, n_outliers)])
    pts = np.concatenate([plane, outliers])
    truth_mask = np.zeros(len(pts), dtype=bool)
    truth_mask[:n_plane] = True
    return PointCloud.from_xyz(pts), truth_mask


def least_squares_plane(xyz):
    """Oracle: SVD fit returning canonical (normal, offset)."""
    centroid = xyz.mean(axis=0)
    _, _, vt = np.linalg.svd(xyz - centroid)
    normal = vt[2]
    return canonical_sign(normal, -normal @ centroid)


def test_lcg_constants_and_sequence():
    gen = Lcg64(0)
    first = gen.next_u64()
    assert first == 1442695040888963407  # 0 * mult + inc
    second = gen.next_u64()
    assert second == (Lcg64.MULT * first + Lcg64.INC) % 2 ** 64


def test_lcg_kernel_matches_reference():
    ref = sample_triplets(321, 100, 99)
    got = _kernels.lcg_triplets(321, 100, 99)
    np.testing.assert_array_equal(ref, got)


def test_exact_plane_recovery():
    rng = np.random.default_rng(3)
    xy = rng.uniform(-0.5, 0.5, (100, 2))
    cloud = PointCloud.from_xyz(
        np.column_stack([xy, np.full(100, 0.8)]))
    model = ransac_plane(cloud, RansacParams(distance_threshold=0.01))
    np.testing.assert_allclose(model.normal, [0, 0, -1], atol=1e-12)
    assert model.offset == pytest.approx(0.8, abs=1e-12)
    assert len(model.inliers) == 100


def test_noisy_plane_with_outliers_seed7():
    cloud, truth_mask = noisy_plane_cloud(seed=7)
    params = RansacParams(distance_threshold=0.01, max_iterations=500,
                          rng_seed=7)
    model = ransac_plane(cloud, params)
    oracle_normal, oracle_offset = least_squares_plane(cloud.xyz[truth_mask])
    angle = np.degrees(np.arccos(min(1.0, abs(model.normal @ oracle_normal))))
    assert angle <= 1.0
    assert abs(model.offset - 0.8) <= 0.002


def test_degenerate_cloud_too_few_points():
    cloud = PointCloud.from_xyz(np.array([[0, 0, 0], [1, 0, 0]]))
    with pytest.raises(DegenerateCloud):
        ransac_plane(cloud, RansacParams())


def test_degenerate_cloud_collinear():
    t = np.linspace(0, 1, 100)
    cloud = PointCloud.from_xyz(np.column_stack([t, 2 * t, -t]))
    with pytest.raises(DegenerateCloud):
        ransac_plane(cloud, RansacParams())


def test_deterministic_given_seed():
    cloud, _ = noisy_plane_cloud(seed=11)
    params = RansacParams(rng_seed=42)
    a = ransac_plane(cloud, params)
    b = ransac_plane(cloud, RansacParams(rng_seed=42))
    np.testing.assert_array_equal(a.inliers, b.inliers)
    np.testing.assert_array_equal(a.normal, b.normal)
    assert a.offset == b.offset


def test_inlier_characterization():
    cloud, _ = noisy_plane_cloud(seed=5)
    params = RansacParams(distance_threshold=0.01, rng_seed=5)
    model = ransac_plane(cloud, params)
    dist = np.abs(cloud.xyz @ model.normal + model.offset)
    inlier_mask = np.zeros(len(cloud), dtype=bool)
    inlier_mask[model.inliers] = True
    assert (dist[inlier_mask] <= params.distance_threshold).all()
    assert (dist[~inlier_mask] > params.distance_threshold).all()


def test_noise_free_plane_all_inliers_any_threshold():
    rng = np.random.default_rng(8)
    xy = rng.uniform(-1, 1, (300, 2))
    cloud = PointCloud.from_xyz(np.column_stack([xy, np.full(300, 1.5)]))
    for thresh in (1e-6, 1e-3, 0.05):
        model = ransac_plane(cloud, RansacParams(distance_threshold=thresh))
        assert len(model.inliers) == 300


def test_canonical_sign_idempotent_under_negation(rng):
    for _ in range(200):
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        d = float(rng.uniform(-2, 2))
        n1, d1 = canonical_sign(n.copy(), d)
        n2, d2 = canonical_sign(-n.copy(), -d)
        np.testing.assert_allclose(n1, n2, atol=0)
        assert d1 == d2
        assert n1[2] <= 1e-12


def test_canonical_sign_vertical_plane():
    rng = np.random.default_rng(2)
    yz = rng.uniform(-0.5, 0.5, (100, 2))
    cloud = PointCloud.from_xyz(
        np.column_stack([np.full(100, 0.3), yz]))
    model = ransac_plane(cloud, RansacParams())
    np.testing.assert_allclose(model.normal, [-1, 0, 0], atol=1e-12)


def test_min_inlier_fraction_gate():
    rng = np.random.default_rng(4)
    cloud = PointCloud.from_xyz(rng.uniform(-1, 1, (500, 3)))
    params = RansacParams(distance_threshold=1e-4, min_inlier_fraction=0.9)
    with pytest.raises(NoPlaneFound):
        ransac_plane(cloud, params)


def test_split_empty_and_full(make_cloud):
    cloud = make_cloud(20)
    inl, out = split_plane(cloud, PlaneModel([0, 0, -1], 0.0, []))
    assert len(inl) == 0 and len(out) == 20
    inl, out = split_plane(cloud, PlaneModel([0, 0, -1], 0.0, np.arange(20)))
    assert len(inl) == 20 and len(out) == 0


def test_split_matches_set_difference_oracle(rng):
    cloud = random_cloud(rng, 500)
    idx = np.sort(rng.choice(500, size=180, replace=False))
    inl, out = split_plane(cloud, PlaneModel([0, 0, -1], 0.0, idx))
    assert len(inl) + len(out) == 500
    other = sorted(set(range(500)) - set(idx.tolist()))
    np.testing.assert_array_equal(inl.xyz, cloud.xyz[idx])
    np.testing.assert_array_equal(out.xyz, cloud.xyz[other])


def test_split_rejects_bad_indices(make_cloud):
    cloud = make_cloud(10)
    with pytest.raises(IndexOutOfRange):
        split_plane(cloud, PlaneModel([0, 0, -1], 0.0, [3, 11]))
    with pytest.raises(IndexOutOfRange):
        split_plane(cloud, PlaneModel([0, 0, -1], 0.0, [3, 3]))


def test_params_validation():
    with pytest.raises(ValueError):
        RansacParams(distance_threshold=0.0).validate()
    with pytest.raises(ValueError):
        RansacParams(max_iterations=0).validate()
    with pytest.raises(ValueError):
        RansacParams(min_inlier_fraction=0.0).validate()
