"""Standard synthetic evaluation suite: a 19-class object palette, 40
scenes (20 baseline, 5 light table, 5 dark table, 10 moving camera),
plus acquisition streams and the dense benchmark scene."""

from __future__ import annotations

import math

import numpy as np

from .config import PipelineConfig
from .synth import ObjectSpec, SceneSpec, aabb_gap, render_image, synth_cloud

# Solid object colors sit at 4x4x4 histogram bin centers and avoid the
# table colors' bins, so every class is separable by color alone.
PALETTE = [
    ("red_box", (224, 32, 32)),
    ("green_box", (32, 224, 32)),
    ("blue_box", (32, 32, 224)),
    ("yellow_box", (224, 224, 32)),
    ("magenta_box", (224, 32, 224)),
    ("cyan_box", (32, 224, 224)),
    ("orange_box", (224, 96, 32)),
    ("mint_box", (96, 224, 96)),
    ("lime_ball", (160, 224, 32)),
    ("teal_ball", (32, 160, 160)),
    ("violet_ball", (96, 32, 224)),
    ("pink_ball", (224, 96, 160)),
    ("navy_ball", (32, 32, 96)),
    ("sky_ball", (96, 160, 224)),
    ("olive_can", (96, 96, 32)),
    ("maroon_can", (96, 32, 32)),
    ("aqua_can", (96, 224, 224)),
    ("gold_can", (224, 160, 32)),
    ("plum_can", (160, 32, 160)),
]
LABELS = sorted(lab for lab, _ in PALETTE)

WOOD = (150, 111, 60)
WHITE_CLOTH = (235, 235, 235)
DARK_WOOD = (55, 38, 26)

# Objects float this far above the tabletop so the plane-removal band
# (RANSAC threshold) never clips their lower surface.
BASE_CLEARANCE = 0.03
MIN_SURFACE_GAP = 0.065
EDGE_MARGIN = 0.03


def standard_config(seed: int = 0) -> PipelineConfig:
    """Pipeline settings matched to the suite's sampling density."""
    cfg = PipelineConfig(seed=seed)
    cfg.cluster.tolerance = 0.03  # > sqrt(3) * calibrated leaf at alpha 0.1
    return cfg


def _shape_for(label: str, rng) -> tuple[str, tuple]:
    if label.endswith("_box"):
        return "box", tuple(rng.uniform(0.055, 0.10, 3).round(3))
    if label.endswith("_ball"):
        return "sphere", (round(rng.uniform(0.032, 0.048), 3),)
    return "cylinder", (round(rng.uniform(0.03, 0.045), 3),
                        round(rng.uniform(0.09, 0.14), 3))


def _place_objects(labels, rng, table_width, table_depth,
                   region_x=None) -> list[ObjectSpec]:
    """Rejection-sample positions keeping an AABB gap above the suite gap."""
    color_of = dict(PALETTE)
    placed: list[ObjectSpec] = []
    for label in labels:
        shape, dims = _shape_for(label, rng)
        probe = ObjectSpec(shape, dims, np.zeros(3), color_of[label], label)
        lo, hi = probe.world_extents()
        half_xy = (hi - lo)[:2] / 2
        half_x = (table_width / 2 - half_xy[0] - EDGE_MARGIN
                  if region_x is None else region_x)
        half_y = table_depth / 2 - half_xy[1] - EDGE_MARGIN
        z = BASE_CLEARANCE + (probe.position[2] - lo[2])
        for _ in range(2000):
            pos = np.array([rng.uniform(-half_x, half_x),
                            rng.uniform(-half_y, half_y), z])
            cand = ObjectSpec(shape, dims, pos, color_of[label], label)
            if all(aabb_gap(cand, other) > MIN_SURFACE_GAP for other in placed):
                placed.append(cand)
                break
        else:
            raise RuntimeError(f"could not place {label!r}; table too crowded")
    return placed


def make_scene(index: int) -> SceneSpec:
    """Scene ``index`` in 0..39 of the standard suite."""
    if not 0 <= index < 40:
        raise ValueError(f"standard suite has scenes 0..39, got {index}")
    rng = np.random.default_rng([7100, index])
    n_objects = int(rng.integers(3, 9))
    labels = [str(v) for v in rng.choice(LABELS, size=n_objects, replace=False)]

    spec = SceneSpec(seed=1000 + index)
    if index < 20:
        spec.table_rgb = WOOD
    elif index < 25:
        spec.table_rgb = WHITE_CLOTH
    elif index < 30:
        spec.table_rgb = DARK_WOOD
    else:
        spec.table_rgb = WOOD
        spec.table_distance = 2.0
        spec.motion_frames = 100
        if index < 35:
            spec.motion_direction = np.array([1.0, 0.0, 0.0])
            spec.motion_total = 1.0
        else:
            spec.motion_direction = np.array([0.0, 0.0, 1.0])
            spec.motion_total = 0.8

    region_x = 0.30 if index >= 30 else None
    spec.objects = _place_objects(labels, rng, spec.table_width,
                                  spec.table_depth, region_x=region_x)
    return spec


def standard_suite() -> list[SceneSpec]:
    return [make_scene(i) for i in range(40)]


def make_localization_scene(seed: int = 4200,
                            noise_sigma: float = 0.003) -> SceneSpec:
    """1 m-wide table with 5 objects for the centroid-precision check."""
    rng = np.random.default_rng([seed])
    labels = [str(v) for v in rng.choice(LABELS, size=5, replace=False)]
    spec = SceneSpec(seed=seed, noise_sigma=noise_sigma)
    spec.objects = _place_objects(labels, rng, spec.table_width,
                                  spec.table_depth)
    return spec


def make_bench_scene(target_points: int = 307200, seed: int = 8800) -> SceneSpec:
    """Six-object scene whose raw cloud lands within 1% of target_points."""
    rng = np.random.default_rng([seed])
    labels = [str(v) for v in rng.choice(LABELS, size=6, replace=False)]
    spec = SceneSpec(seed=seed)
    spec.objects = _place_objects(labels, rng, spec.table_width,
                                  spec.table_depth)

    spec.spacing = 0.0016
    for _ in range(24):
        n = len(synth_cloud(spec, 0))
        if abs(n - target_points) <= target_points // 100:
            break
        spec.spacing *= math.sqrt(n / target_points)
    return spec


def acquisition_frames(label: str, count: int, noise_sigma: float = 0.002):
    """Stream ``count`` single-object frames with per-frame pose variation.

    Yields (PointCloud, image) pairs on the standard wood table, the same
    geometry the evaluation scenes use.
    """
    if label not in LABELS:
        raise ValueError(f"unknown label {label!r}; choose from {LABELS}")
    label_idx = LABELS.index(label)
    for k in range(count):
        rng = np.random.default_rng([9000 + label_idx, k])
        spec = SceneSpec(seed=9000 + label_idx, noise_sigma=noise_sigma)
        spec.objects = _place_objects([label], rng, spec.table_width,
                                      spec.table_depth)
        cloud = synth_cloud(spec, k)
        image = render_image(spec, k)
        yield cloud, image
