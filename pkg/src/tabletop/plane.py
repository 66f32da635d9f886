"""Dominant-plane extraction by RANSAC and inlier/outlier splitting."""

from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateCloud, IndexOutOfRange, NoPlaneFound
from .cloud import PointCloud

_COLLINEAR_EPS = 1e-9


class Lcg64:
    """64-bit linear congruential generator used for RANSAC sampling.

    The generator is part of the external contract so ports reproduce
    inlier sets exactly:

        state <- (6364136223846793005 * state + 1442695040888963407) mod 2**64

    starting from ``state = seed mod 2**64``; each draw advances the state
    once and yields ``(state >> 33) mod n``.
    """

    MULT = 6364136223846793005
    INC = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.MULT * self.state + self.INC) & self.MASK
        return self.state

    def next_index(self, n: int) -> int:
        return (self.next_u64() >> 33) % n


@dataclass
class RansacParams:
    distance_threshold: float = 0.01
    max_iterations: int = 500
    min_inlier_fraction: float = 0.15
    rng_seed: int = 0

    def validate(self) -> None:
        if not self.distance_threshold > 0:
            raise ValueError("distance_threshold must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.min_inlier_fraction <= 1:
            raise ValueError("min_inlier_fraction must be in (0, 1]")


@dataclass
class PlaneModel:
    """Plane n.p + d = 0 with canonical sign and its inlier index set.

    Canonical sign: n.z < 0 preferred; for vertical planes (|n.z| <= 1e-12)
    n.y < 0, then n.x < 0.
    """

    normal: np.ndarray
    offset: float
    inliers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=np.float64).reshape(3)
        self.inliers = np.asarray(self.inliers, dtype=np.int64)

    def distances(self, xyz: np.ndarray) -> np.ndarray:
        return np.abs(xyz @ self.normal + self.offset)


def canonical_sign(normal: np.ndarray, offset: float):
    """Flip (n, d) into the canonical half-space; no-op if already there."""
    nx, ny, nz = normal
    flip = False
    if nz > 1e-12:
        flip = True
    elif abs(nz) <= 1e-12:
        if ny > 1e-12:
            flip = True
        elif abs(ny) <= 1e-12 and nx > 0:
            flip = True
    if flip:
        return -normal, -offset
    return normal, offset


def sample_triplets(n: int, iterations: int, seed: int) -> np.ndarray:
    """Draw ``iterations`` rows of 3 distinct indices with the contract LCG."""
    rng = Lcg64(seed)
    out = np.empty((iterations, 3), dtype=np.int64)
    for j in range(iterations):
        i1 = rng.next_index(n)
        i2 = rng.next_index(n)
        while i2 == i1:
            i2 = rng.next_index(n)
        i3 = rng.next_index(n)
        while i3 == i1 or i3 == i2:
            i3 = rng.next_index(n)
        out[j] = (i1, i2, i3)
    return out


def _spread_ok(xyz: np.ndarray) -> bool:
    # Non-collinear iff the second-largest RMS spread is at least the
    # epsilon; SVD of the centered coordinates keeps full precision where
    # a covariance eigendecomposition would square the condition number.
    centered = xyz - xyz.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[1] / math.sqrt(len(xyz)) >= _COLLINEAR_EPS


def _is_collinear(xyz: np.ndarray) -> bool:
    # A non-collinear subsample proves the cloud non-collinear; only
    # (nearly) collinear clouds pay for the full pass.
    if len(xyz) > 2048 and _spread_ok(xyz[:2048]):
        return False
    return not _spread_ok(xyz)


def ransac_plane(cloud: PointCloud, params: RansacParams) -> PlaneModel:
    """Best plane over ``max_iterations`` 3-point samples, by inlier count.

    Ties keep the earliest-found model; the model is returned as sampled
    (no least-squares refit). Deterministic given ``params.rng_seed``.
    """
    params.validate()
    n = len(cloud)
    if n < 3:
        raise DegenerateCloud(f"need >= 3 points, got {n}")
    if _is_collinear(cloud.xyz):
        raise DegenerateCloud("all points collinear")

    samples = _kernels.lcg_triplets(n, params.max_iterations,
                                    params.rng_seed & Lcg64.MASK)
    px = np.ascontiguousarray(cloud.xyz[:, 0])
    py = np.ascontiguousarray(cloud.xyz[:, 1])
    pz = np.ascontiguousarray(cloud.xyz[:, 2])
    normals, offsets, counts = _kernels.plane_candidates(
        px, py, pz, samples, float(params.distance_threshold))

    best = int(np.argmax(counts))  # first occurrence wins ties
    if counts[best] < 0:
        raise NoPlaneFound("every sampled triplet was degenerate")
    if counts[best] / n < params.min_inlier_fraction:
        raise NoPlaneFound(
            f"best inlier fraction {counts[best] / n:.3f} "
            f"< {params.min_inlier_fraction}")

    normal, offset = canonical_sign(normals[best], float(offsets[best]))
    dist = np.abs(cloud.xyz @ normal + offset)
    inliers = np.flatnonzero(dist <= params.distance_threshold)
    return PlaneModel(normal, offset, inliers)


def split_plane(cloud: PointCloud, plane: PlaneModel):
    """Partition the cloud into (inliers, outliers), order preserved in each."""
    idx = plane.inliers
    if len(idx) and (idx.min() < 0 or idx.max() >= len(cloud)):
        raise IndexOutOfRange(
            f"inlier indices outside [0, {len(cloud)})")
    # ransac_plane emits strictly increasing indices; only unsorted input
    # pays for a uniqueness sort.
    if len(idx) and not (np.diff(idx) > 0).all():
        if len(np.unique(idx)) != len(idx):
            raise IndexOutOfRange("duplicate inlier indices")
    mask = np.zeros(len(cloud), dtype=bool)
    mask[idx] = True
    return cloud.select(mask), cloud.select(~mask)
