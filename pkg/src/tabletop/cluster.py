"""Euclidean clustering: connected components under a distance tolerance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import _kernels
from .errors import NegativeRadius
from .cloud import PointCloud


@dataclass
class ClusterParams:
    tolerance: float = 0.02
    min_size: int = 50
    max_size: int = 25000

    def validate(self) -> None:
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not 1 <= self.min_size <= self.max_size:
            raise ValueError("need 1 <= min_size <= max_size")


@dataclass
class Cluster:
    """Sorted, unique indices into the clustered cloud."""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.indices)


class SpatialIndex:
    """Fixed-radius neighbor queries over an immutable point set.

    Backed by a scipy kd-tree; queries use closed-ball semantics
    (distance <= radius includes the boundary).
    """

    def __init__(self, xyz: np.ndarray):
        self.xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        self._tree = cKDTree(self.xyz) if len(self.xyz) else None

    def __len__(self) -> int:
        return len(self.xyz)

    def query(self, seed, radius: float) -> np.ndarray:
        if radius < 0:
            raise NegativeRadius(f"radius must be >= 0, got {radius}")
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        idx = self._tree.query_ball_point(np.asarray(seed, dtype=np.float64),
                                          radius)
        return np.sort(np.asarray(idx, dtype=np.int64))


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud.xyz)


def radius_neighbors(index: SpatialIndex, seed, radius: float) -> np.ndarray:
    """All indexed points within the closed ball of ``radius`` around ``seed``."""
    return index.query(seed, radius)


def euclidean_cluster(cloud: PointCloud, params: ClusterParams) -> list[Cluster]:
    """Connected components of the <= tolerance proximity graph.

    Components outside [min_size, max_size] are discarded; survivors are
    returned sorted by (size descending, smallest member index ascending),
    each with ascending indices.
    """
    params.validate()
    n = len(cloud)
    if n == 0:
        return []

    labels = _kernels.grid_cluster_labels(
        np.ascontiguousarray(cloud.xyz[:, 0]),
        np.ascontiguousarray(cloud.xyz[:, 1]),
        np.ascontiguousarray(cloud.xyz[:, 2]),
        float(params.tolerance))
    if len(labels) == 0:  # cell span overflowed the packed-key budget
        labels = _kdtree_labels(cloud.xyz, params.tolerance)

    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    boundaries = np.flatnonzero(np.diff(sorted_labels)) + 1
    groups = np.split(order, boundaries)

    clusters = [Cluster(np.sort(g)) for g in groups
                if params.min_size <= len(g) <= params.max_size]
    clusters.sort(key=lambda c: (-len(c), int(c.indices[0])))
    return clusters


def _kdtree_labels(xyz: np.ndarray, tolerance: float) -> np.ndarray:
    # Fallback for clouds too spread out for packed grid keys.
    n = len(xyz)
    pairs = cKDTree(xyz).query_pairs(tolerance, output_type="ndarray")
    if not len(pairs):
        return np.arange(n)
    adj = coo_matrix(
        (np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])),
        shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    return labels
