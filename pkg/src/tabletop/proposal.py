"""End-to-end geometric region proposals: one 3D box, centroid, and
expanded 2D box per object cluster."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .camera import BBox2, BBox3, CameraModel, expand_bbox, project_bbox
from .cloud import PointCloud, passthrough, voxel_downsample
from .cluster import Cluster, euclidean_cluster
from .config import PipelineConfig
from .errors import EmptyCloud, EmptyCluster, FullyBehindCamera, DegenerateProjection
from .plane import ransac_plane, split_plane

log = logging.getLogger("tabletop")


@dataclass
class Proposal:
    bbox3: BBox3
    centroid: np.ndarray
    bbox2: BBox2
    cluster_size: int

    def to_record(self, frame: int = 0) -> dict:
        return {
            "frame": frame,
            "bbox3": {"min": [float(v) for v in self.bbox3.min_xyz],
                      "max": [float(v) for v in self.bbox3.max_xyz]},
            "centroid": [float(v) for v in self.centroid],
            "bbox2": self.bbox2.as_list(),
            "cluster_size": self.cluster_size,
        }


def bbox3_of(cloud: PointCloud, cluster: Cluster) -> BBox3:
    """Exact per-axis min/max extents over the cluster's points."""
    if len(cluster) == 0:
        raise EmptyCluster("cannot box an empty cluster")
    pts = cloud.xyz[cluster.indices]
    return BBox3(pts.min(axis=0), pts.max(axis=0))


def centroid_of(cloud: PointCloud, cluster: Cluster) -> np.ndarray:
    """Arithmetic mean position of the cluster's points."""
    if len(cluster) == 0:
        raise EmptyCluster("cannot take the centroid of an empty cluster")
    return cloud.xyz[cluster.indices].mean(axis=0)


class _StageTimer:
    def __init__(self, timings: dict | None):
        self.timings = timings

    def __call__(self, stage: str):
        return _Stage(self.timings, stage)


class _Stage:
    def __init__(self, timings, stage):
        self.timings, self.stage = timings, stage

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        if self.timings is not None:
            dt = time.perf_counter() - self.t0
            self.timings[self.stage] = self.timings.get(self.stage, 0.0) + dt
        return False


def propose_regions(cloud: PointCloud, camera: CameraModel,
                    config: PipelineConfig,
                    timings: dict | None = None) -> list[Proposal]:
    """Run downsample, optional passthrough, plane removal, clustering, and
    per-cluster box/centroid/projection; one proposal per surviving cluster.

    Clusters whose projection fails are dropped (counted in a warning);
    plane-fit errors propagate. Deterministic given ``config.seed``. When a
    ``timings`` dict is supplied, per-stage wall times are accumulated into
    it under keys downsample/plane/cluster/project.
    """
    if len(cloud) == 0:
        raise EmptyCloud("propose_regions needs a non-empty cloud")
    stage = _StageTimer(timings)

    with stage("downsample"):
        leaf = config.effective_leaf(cloud)
        ds = voxel_downsample(cloud, leaf)
        if config.passthrough_enabled:
            ds = passthrough(ds, config.passthrough)

    with stage("plane"):
        plane = ransac_plane(ds, config.ransac)
        _, objects = split_plane(ds, plane)

    with stage("cluster"):
        clusters = euclidean_cluster(objects, config.cluster)

    proposals: list[Proposal] = []
    dropped = 0
    with stage("project"):
        for cl in clusters:
            box3 = bbox3_of(objects, cl)
            centroid = centroid_of(objects, cl)
            try:
                box2 = project_bbox(camera, box3)
                box2 = expand_bbox(box2, config.border_fraction, camera)
            except (FullyBehindCamera, DegenerateProjection):
                dropped += 1
                continue
            proposals.append(Proposal(box3, centroid, box2, len(cl)))
    if dropped:
        log.warning("propose_regions: dropped %d cluster(s) with failed "
                    "projections", dropped)
    return proposals
