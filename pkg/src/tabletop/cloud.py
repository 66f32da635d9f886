"""Point-cloud container, ASCII PCD I/O, voxel downsampling, passthrough.

Clouds live in the camera optical frame (x right, y down, z forward),
coordinates in meters. Points are stored as parallel numpy arrays:
``xyz`` as (n, 3) float64 and ``rgb`` as (n, 3) uint8.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import (
    AlphaOutOfRange,
    EmptyCloud,
    InvalidBounds,
    IoFailure,
    MalformedHeader,
    MissingFile,
    NonAsciiData,
    NonPositiveLeaf,
    RejectedInvalidPoint,
)

log = logging.getLogger("tabletop")

_MAX_CELL_SPAN = _kernels.MAX_CELL_SPAN


@dataclass
class PointCloud:
    """An ordered colored point set.

    Order is meaningful: serialization round-trips preserve it, and
    filters keep relative order.
    """

    xyz: np.ndarray
    rgb: np.ndarray
    frame_id: str = "camera"
    timestamp: float = 0.0

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        self.rgb = np.ascontiguousarray(self.rgb, dtype=np.uint8).reshape(-1, 3)
        if self.rgb.shape[0] != self.xyz.shape[0]:
            raise ValueError(
                f"xyz has {self.xyz.shape[0]} rows but rgb has {self.rgb.shape[0]}"
            )

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @classmethod
    def empty(cls, frame_id: str = "camera", timestamp: float = 0.0) -> "PointCloud":
        return cls(np.empty((0, 3)), np.empty((0, 3), dtype=np.uint8),
                   frame_id, timestamp)

    @classmethod
    def from_xyz(cls, xyz: np.ndarray, color=(255, 255, 255), **kw) -> "PointCloud":
        """Build a cloud with a single flat color."""
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        rgb = np.tile(np.asarray(color, dtype=np.uint8), (xyz.shape[0], 1))
        return cls(xyz, rgb, **kw)

    def select(self, indices) -> "PointCloud":
        """Row subset, preserving the order given by ``indices``."""
        return replace(self, xyz=self.xyz[indices], rgb=self.rgb[indices])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.xyz).all())


@dataclass
class PassthroughBounds:
    """Optional per-axis closed intervals; ``None`` means unbounded."""

    x_min: float | None = None
    x_max: float | None = None
    y_min: float | None = None
    y_max: float | None = None
    z_min: float | None = None
    z_max: float | None = None

    def validate(self) -> None:
        for axis in "xyz":
            lo = getattr(self, f"{axis}_min")
            hi = getattr(self, f"{axis}_max")
            if lo is not None and hi is not None and not lo < hi:
                raise InvalidBounds(f"{axis}: min {lo} >= max {hi}")

    def intersect(self, other: "PassthroughBounds") -> "PassthroughBounds":
        def lo(a, b):
            return b if a is None else a if b is None else max(a, b)

        def hi(a, b):
            return b if a is None else a if b is None else min(a, b)

        return PassthroughBounds(
            lo(self.x_min, other.x_min), hi(self.x_max, other.x_max),
            lo(self.y_min, other.y_min), hi(self.y_max, other.y_max),
            lo(self.z_min, other.z_min), hi(self.z_max, other.z_max),
        )


# --- ASCII PCD subset ----------------------------------------------------
#
# Header lines, in order: VERSION .7 / FIELDS x y z rgb / SIZE 4 4 4 4 /
# TYPE F F F U / COUNT 1 1 1 1 / WIDTH n / HEIGHT 1 /
# VIEWPOINT 0 0 0 1 0 0 0 / POINTS n / DATA ascii, then n rows of
# "x y z packed_rgb" with packed_rgb = r*65536 + g*256 + b.

_HEADER_FIXED = {
    "FIELDS": "x y z rgb",
    "SIZE": "4 4 4 4",
    "TYPE": "F F F U",
    "COUNT": "1 1 1 1",
    "HEIGHT": "1",
    "VIEWPOINT": "0 0 0 1 0 0 0",
}
_HEADER_ORDER = ["VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH",
                 "HEIGHT", "VIEWPOINT", "POINTS", "DATA"]


def load_pcd(path) -> PointCloud:
    """Read a cloud from the ASCII PCD subset written by :func:`save_pcd`.

    Rows with a non-finite coordinate are dropped (tallied in a warning);
    everything else about the file is validated strictly.
    """
    try:
        with open(path, "r", encoding="ascii") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError as exc:
        raise MissingFile(str(path)) from exc
    except UnicodeDecodeError as exc:
        raise NonAsciiData(f"{path}: not an ASCII file") from exc

    lines = [ln for ln in lines if ln.strip()]
    if len(lines) < len(_HEADER_ORDER):
        raise MalformedHeader(f"{path}: truncated header")

    fields = {}
    for expect, line in zip(_HEADER_ORDER, lines):
        key, _, value = line.partition(" ")
        if key != expect:
            raise MalformedHeader(f"{path}: expected {expect} line, got {key!r}")
        fields[key] = value.strip()

    if fields["VERSION"] not in (".7", "0.7"):
        raise MalformedHeader(f"{path}: unsupported VERSION {fields['VERSION']!r}")
    for key, want in _HEADER_FIXED.items():
        if fields[key].split() != want.split():
            raise MalformedHeader(f"{path}: {key} must be {want!r}, got {fields[key]!r}")
    if fields["DATA"] != "ascii":
        raise NonAsciiData(f"{path}: DATA {fields['DATA']!r} unsupported")
    try:
        width = int(fields["WIDTH"])
        npoints = int(fields["POINTS"])
    except ValueError as exc:
        raise MalformedHeader(f"{path}: non-integer WIDTH/POINTS") from exc
    if width != npoints or npoints < 0:
        raise MalformedHeader(f"{path}: WIDTH {width} != POINTS {npoints}")

    rows = lines[len(_HEADER_ORDER):]
    if len(rows) != npoints:
        raise MalformedHeader(
            f"{path}: POINTS {npoints} but {len(rows)} data rows")

    xyz = np.empty((npoints, 3), dtype=np.float64)
    rgb = np.empty((npoints, 3), dtype=np.uint8)
    for i, row in enumerate(rows):
        parts = row.split()
        if len(parts) != 4:
            raise MalformedHeader(f"{path}: row {i} has {len(parts)} columns")
        try:
            xyz[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
            packed = int(parts[3])
        except ValueError as exc:
            raise MalformedHeader(f"{path}: row {i} unparsable") from exc
        if not 0 <= packed < 1 << 24:
            raise MalformedHeader(f"{path}: row {i} rgb {packed} out of range")
        rgb[i] = [(packed >> 16) & 0xFF, (packed >> 8) & 0xFF, packed & 0xFF]

    keep = np.isfinite(xyz).all(axis=1)
    dropped = int(npoints - keep.sum())
    if dropped:
        log.warning("load_pcd: dropped %d non-finite point(s) from %s",
                    dropped, path)
        xyz, rgb = xyz[keep], rgb[keep]
    return PointCloud(xyz, rgb)


def save_pcd(cloud: PointCloud, path) -> None:
    """Write the ASCII PCD subset; refuses clouds with non-finite points."""
    if not cloud.is_finite():
        raise RejectedInvalidPoint("cloud contains NaN/Inf coordinates")
    n = len(cloud)
    packed = (cloud.rgb[:, 0].astype(np.uint32) << 16
              | cloud.rgb[:, 1].astype(np.uint32) << 8
              | cloud.rgb[:, 2].astype(np.uint32))
    try:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("VERSION .7\n")
            fh.write("FIELDS x y z rgb\n")
            fh.write("SIZE 4 4 4 4\n")
            fh.write("TYPE F F F U\n")
            fh.write("COUNT 1 1 1 1\n")
            fh.write(f"WIDTH {n}\n")
            fh.write("HEIGHT 1\n")
            fh.write("VIEWPOINT 0 0 0 1 0 0 0\n")
            fh.write(f"POINTS {n}\n")
            fh.write("DATA ascii\n")
            for i in range(n):
                x, y, z = cloud.xyz[i]
                fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r} {packed[i]}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --- voxel grid downsampling ---------------------------------------------

def voxel_downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    """Replace each occupied leaf-sized grid cell by the centroid of its points.

    Cell membership is floor(coord / leaf) per axis; colors are averaged
    per channel and rounded half-up. Output points are sorted by
    (cell_z, cell_y, cell_x) ascending.
    """
    if not leaf > 0:
        raise NonPositiveLeaf(f"leaf must be > 0, got {leaf}")
    n = len(cloud)
    if n == 0:
        return replace(cloud, xyz=cloud.xyz[:0], rgb=cloud.rgb[:0])

    packed = (cloud.rgb[:, 0].astype(np.int64) << 16
              | cloud.rgb[:, 1].astype(np.int64) << 8
              | cloud.rgb[:, 2].astype(np.int64))
    count, sx, sy, sz, sr, sg, sb = _kernels.voxel_accumulate(
        np.ascontiguousarray(cloud.xyz[:, 0]),
        np.ascontiguousarray(cloud.xyz[:, 1]),
        np.ascontiguousarray(cloud.xyz[:, 2]),
        packed, float(leaf))
    if len(count) == 0:  # cell span overflowed the packed-key budget
        return _voxel_downsample_numpy(cloud, leaf)
    cnt = count.astype(np.float64)
    xyz = np.stack([sx, sy, sz], axis=1) / cnt[:, None]
    rgb = np.stack([
        np.floor(sr / cnt + 0.5),
        np.floor(sg / cnt + 0.5),
        np.floor(sb / cnt + 0.5),
    ], axis=1).astype(np.uint8)
    return replace(cloud, xyz=xyz, rgb=rgb)


def _voxel_downsample_numpy(cloud: PointCloud, leaf: float) -> PointCloud:
    # Fallback for cell spans too wide for the packed-key kernel.
    cells = np.floor(cloud.xyz / leaf).astype(np.int64)
    order = np.lexsort((cells[:, 0], cells[:, 1], cells[:, 2]))
    cells_s = cells[order]
    new_cell = np.any(np.diff(cells_s, axis=0) != 0, axis=1)
    group = np.concatenate([[0], np.cumsum(new_cell)])
    m = group[-1] + 1 if len(group) else 0
    xyz = np.zeros((m, 3))
    rgb_sum = np.zeros((m, 3))
    cnt = np.bincount(group, minlength=m).astype(np.float64)
    for a in range(3):
        xyz[:, a] = np.bincount(group, weights=cloud.xyz[order, a], minlength=m)
        rgb_sum[:, a] = np.bincount(group, weights=cloud.rgb[order, a].astype(np.float64),
                                    minlength=m)
    xyz /= cnt[:, None]
    rgb = np.floor(rgb_sum / cnt[:, None] + 0.5).astype(np.uint8)
    return replace(cloud, xyz=xyz, rgb=rgb)


@dataclass
class LeafCalibration:
    """Result of :func:`calibrate_leaf`."""

    leaf: float
    achieved_ratio: float
    converged: bool
    iterations: int = 0


def calibrate_leaf(cloud: PointCloud, alpha: float,
                   lo: float = 1e-4, hi: float = 1.0,
                   max_iterations: int = 32) -> LeafCalibration:
    """Find a leaf size whose downsampling ratio is within +/-20% of ``alpha``.

    Bisects on leaf size over [lo, hi]; if the band is unreachable the
    closest endpoint is returned with ``converged=False``.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot calibrate on an empty cloud")
    if not 0 < alpha <= 1:
        raise AlphaOutOfRange(f"alpha must be in (0, 1], got {alpha}")

    n = len(cloud)
    band_lo, band_hi = 0.8 * alpha, 1.2 * alpha

    def ratio(leaf: float) -> float:
        return len(voxel_downsample(cloud, leaf)) / n

    r_lo = ratio(lo)
    if r_lo <= band_hi:
        # Ratio only decreases with leaf, so lo is the best we can do.
        return LeafCalibration(lo, r_lo, r_lo >= band_lo)
    r_hi = ratio(hi)
    if r_hi >= band_lo:
        return LeafCalibration(hi, r_hi, r_hi <= band_hi)

    a, b = lo, hi
    for it in range(1, max_iterations + 1):
        mid = math.sqrt(a * b)  # leaf spans decades; bisect in log space
        r = ratio(mid)
        if band_lo <= r <= band_hi:
            return LeafCalibration(mid, r, True, it)
        if r > band_hi:
            a = mid
        else:
            b = mid
    r_a, r_b = ratio(a), ratio(b)
    best = a if abs(r_a - alpha) <= abs(r_b - alpha) else b
    return LeafCalibration(best, ratio(best), False, max_iterations)


def passthrough(cloud: PointCloud, bounds: PassthroughBounds) -> PointCloud:
    """Keep points whose present-axis coordinates lie in the closed intervals."""
    bounds.validate()
    mask = np.ones(len(cloud), dtype=bool)
    for col, axis in enumerate("xyz"):
        lo = getattr(bounds, f"{axis}_min")
        hi = getattr(bounds, f"{axis}_max")
        if lo is not None:
            mask &= cloud.xyz[:, col] >= lo
        if hi is not None:
            mask &= cloud.xyz[:, col] <= hi
    return cloud.select(mask)
