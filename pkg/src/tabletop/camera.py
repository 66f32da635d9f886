"""Pinhole projection between the depth frame and RGB pixel space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, DegenerateProjection, FullyBehindCamera

# Points must sit at least this far in front of the RGB camera to project.
MIN_DEPTH = 1e-6


@dataclass
class CameraModel:
    """Intrinsics (f, c) plus the depth->RGB extrinsic transform (R, t)."""

    f_i: float
    f_j: float
    c_i: float
    c_j: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    image_width: int = 640
    image_height: int = 480

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def validate(self) -> None:
        if not (self.f_i > 0 and self.f_j > 0):
            raise ValueError("focal lengths must be > 0")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if not (0 < self.c_i < self.image_width and 0 < self.c_j < self.image_height):
            raise ValueError("principal point outside the image")


@dataclass
class BBox3:
    """Axis-aligned 3D extents; U/L expose the legacy front-face corners."""

    min_xyz: np.ndarray
    max_xyz: np.ndarray

    def __post_init__(self):
        self.min_xyz = np.asarray(self.min_xyz, dtype=np.float64).reshape(3)
        self.max_xyz = np.asarray(self.max_xyz, dtype=np.float64).reshape(3)

    @property
    def upper(self) -> np.ndarray:
        """(x_min, y_max, z_max) corner."""
        return np.array([self.min_xyz[0], self.max_xyz[1], self.max_xyz[2]])

    @property
    def lower(self) -> np.ndarray:
        """(x_max, y_min, z_max) corner."""
        return np.array([self.max_xyz[0], self.min_xyz[1], self.max_xyz[2]])

    def corners(self) -> np.ndarray:
        """All 8 corners of the extents, shape (8, 3)."""
        mn, mx = self.min_xyz, self.max_xyz
        return np.array([[x, y, z] for x in (mn[0], mx[0])
                         for y in (mn[1], mx[1])
                         for z in (mn[2], mx[2])])


@dataclass
class BBox2:
    """Integer pixel box, clamped to the image: 0 <= min < max <= dim."""

    u_min: int
    v_min: int
    u_max: int
    v_max: int

    @property
    def width(self) -> int:
        return self.u_max - self.u_min

    @property
    def height(self) -> int:
        return self.v_max - self.v_min

    def as_list(self) -> list[int]:
        return [self.u_min, self.v_min, self.u_max, self.v_max]


def project_point(camera: CameraModel, p) -> tuple[float, float]:
    """Map one 3D point to continuous pixel coordinates (i, j)."""
    q = camera.rotation @ np.asarray(p, dtype=np.float64) + camera.translation
    if q[2] <= MIN_DEPTH:
        raise BehindCamera(f"transformed depth {q[2]:.3g} <= {MIN_DEPTH}")
    return (camera.f_i * q[0] / q[2] + camera.c_i,
            camera.f_j * q[1] / q[2] + camera.c_j)


def project_points(camera: CameraModel, xyz: np.ndarray):
    """Vectorized projection.

    Returns (pix, valid): pix is (n, 2) with rows only meaningful where
    valid (depth > MIN_DEPTH) is True.
    """
    q = xyz @ camera.rotation.T + camera.translation
    valid = q[:, 2] > MIN_DEPTH
    z = np.where(valid, q[:, 2], 1.0)
    pix = np.stack([camera.f_i * q[:, 0] / z + camera.c_i,
                    camera.f_j * q[:, 1] / z + camera.c_j], axis=1)
    return pix, valid


def project_bbox(camera: CameraModel, box: BBox3) -> BBox2:
    """Project the 8 extent corners, round outward, clamp to the image."""
    pix, valid = project_points(camera, box.corners())
    if not valid.any():
        raise FullyBehindCamera("no box corner projects in front of the camera")
    pix = pix[valid]
    u_min = math.floor(pix[:, 0].min())
    v_min = math.floor(pix[:, 1].min())
    u_max = math.ceil(pix[:, 0].max())
    v_max = math.ceil(pix[:, 1].max())
    u_min = min(max(u_min, 0), camera.image_width)
    u_max = min(max(u_max, 0), camera.image_width)
    v_min = min(max(v_min, 0), camera.image_height)
    v_max = min(max(v_max, 0), camera.image_height)
    if (u_max - u_min) * (v_max - v_min) < 1:
        raise DegenerateProjection("clamped box area < 1 px^2")
    return BBox2(u_min, v_min, u_max, v_max)


def expand_bbox(box: BBox2, fraction: float, camera: CameraModel) -> BBox2:
    """Grow width and height by ``fraction`` about the center, then clamp."""
    if fraction < 0:
        raise ValueError(f"fraction must be >= 0, got {fraction}")
    cu = (box.u_min + box.u_max) / 2
    cv = (box.v_min + box.v_max) / 2
    half_w = (1 + fraction) * box.width / 2
    half_h = (1 + fraction) * box.height / 2
    return BBox2(
        max(math.floor(cu - half_w), 0),
        max(math.floor(cv - half_h), 0),
        min(math.ceil(cu + half_w), camera.image_width),
        min(math.ceil(cv + half_h), camera.image_height),
    )
