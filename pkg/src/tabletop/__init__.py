"""Real-time tabletop object detection from RGB-D point clouds.

The pipeline removes the dominant table plane from a cloud, clusters the
residual points into objects, projects each cluster into image space as
an expanded region proposal, and classifies the resulting patches.
"""

__version__ = "0.1.0"

from .camera import BBox2, BBox3, CameraModel, expand_bbox, project_bbox, project_point
from .cloud import (
    LeafCalibration,
    PassthroughBounds,
    PointCloud,
    calibrate_leaf,
    load_pcd,
    passthrough,
    save_pcd,
    voxel_downsample,
)
from .cluster import Cluster, ClusterParams, SpatialIndex, build_index, \
    euclidean_cluster, radius_neighbors
from .client import RemoteClassifier
from .config import PipelineConfig, load_config
from .evaluation import BenchReport, FrameResult, bench, evaluate, match_detections
from .image import Patch, extract_patch, load_ppm, save_ppm, scale_patch
from .plane import PlaneModel, RansacParams, ransac_plane, split_plane
from .proposal import Proposal, bbox3_of, centroid_of, propose_regions
from .recognition import (
    BaselineModel,
    Detection,
    classify,
    detect,
    load_model,
    save_model,
    train_baseline,
)
from .synth import ObjectSpec, SceneSpec, TruthObject, synth_frame

__all__ = [name for name in dir() if not name.startswith("_")]
