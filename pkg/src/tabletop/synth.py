"""Synthetic tabletop scenes with exact ground truth.

Scenes are authored in a world frame (x right, y away from the camera,
z up, tabletop surface at z = 0). A pitched camera above the near edge
observes the table; clouds are emitted in its optical frame. Camera
motion is simulated by translating the camera position per frame while
keeping its orientation fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import BBox2, CameraModel, project_points
from .cloud import PointCloud
from .config import default_camera
from .errors import InvalidSpec

RENDER_SUBPIXEL = 0.7  # render-sample spacing as a fraction of one pixel


@dataclass
class ObjectSpec:
    """One axis-aligned solid-colored object resting above the table.

    dimensions: box (dx, dy, dz); sphere (r,); cylinder (r, h).
    position is the shape centroid in world coordinates.
    """

    shape: str
    dimensions: tuple
    position: np.ndarray
    color: tuple
    label: str

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if self.shape not in ("box", "sphere", "cylinder"):
            raise InvalidSpec(f"unknown shape {self.shape!r}")
        want = {"box": 3, "sphere": 1, "cylinder": 2}[self.shape]
        if len(self.dimensions) != want:
            raise InvalidSpec(f"{self.shape} needs {want} dimensions")

    def world_extents(self):
        """(min, max) world-frame AABB of the shape."""
        p = self.position
        if self.shape == "box":
            half = np.asarray(self.dimensions) / 2
        elif self.shape == "sphere":
            half = np.full(3, self.dimensions[0])
        else:
            r, h = self.dimensions
            half = np.array([r, r, h / 2])
        return p - half, p + half

    def bounding_radius(self) -> float:
        lo, hi = self.world_extents()
        return float(np.linalg.norm(hi - lo) / 2)


def aabb_gap(a: ObjectSpec, b: ObjectSpec) -> float:
    """Distance between the two world AABBs (0 if they touch or overlap).

    Exact surface distance for boxes; a safe lower bound for the curved
    shapes, which sit inside their AABBs.
    """
    alo, ahi = a.world_extents()
    blo, bhi = b.world_extents()
    per_axis = np.maximum(0.0, np.maximum(blo - ahi, alo - bhi))
    return float(np.linalg.norm(per_axis))


@dataclass
class SceneSpec:
    table_width: float = 1.0
    table_depth: float = 0.6
    table_distance: float = 1.3
    objects: list = field(default_factory=list)
    spacing: float = 0.004
    noise_sigma: float = 0.002
    seed: int = 0
    camera: CameraModel = field(default_factory=default_camera)
    table_rgb: tuple = (150, 111, 60)
    pitch_deg: float = 35.0
    motion_direction: np.ndarray | None = None
    motion_total: float = 1.0
    motion_frames: int = 100

    def __post_init__(self):
        if self.motion_direction is not None:
            d = np.asarray(self.motion_direction, dtype=np.float64).reshape(3)
            norm = np.linalg.norm(d)
            if norm == 0:
                raise InvalidSpec("motion_direction must be non-zero")
            self.motion_direction = d / norm


@dataclass
class TruthObject:
    label: str
    centroid: np.ndarray            # camera frame
    extents_min: np.ndarray
    extents_max: np.ndarray
    bbox2: BBox2

    def to_record(self) -> dict:
        return {
            "label": self.label,
            "centroid": [float(v) for v in self.centroid],
            "extents": {"min": [float(v) for v in self.extents_min],
                        "max": [float(v) for v in self.extents_max]},
            "bbox2": self.bbox2.as_list(),
        }


class WorldCamera:
    """Fixed-orientation pitched camera; position may translate per frame."""

    def __init__(self, spec: SceneSpec):
        theta = math.radians(spec.pitch_deg)
        self.base_pos = np.array([0.0,
                                  -spec.table_distance * math.cos(theta),
                                  spec.table_distance * math.sin(theta)])
        x_axis = np.array([1.0, 0.0, 0.0])
        z_axis = np.array([0.0, math.cos(theta), -math.sin(theta)])
        y_axis = np.cross(z_axis, x_axis)
        self.rotation = np.stack([x_axis, y_axis, z_axis])  # world -> camera
        self.spec = spec

    def position(self, frame: int) -> np.ndarray:
        if self.spec.motion_direction is None:
            return self.base_pos
        steps = max(self.spec.motion_frames - 1, 1)
        t = min(frame, steps) / steps - 0.5
        return self.base_pos + self.spec.motion_direction * self.spec.motion_total * t

    def to_camera(self, world_xyz: np.ndarray, frame: int) -> np.ndarray:
        return (world_xyz - self.position(frame)) @ self.rotation.T


# --- surface samplers ------------------------------------------------------

def _axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    n = max(2, int(round((hi - lo) / spacing)) + 1)
    return np.linspace(lo, hi, n)


def sample_table(spec: SceneSpec, spacing: float) -> np.ndarray:
    xs = _axis(-spec.table_width / 2, spec.table_width / 2, spacing)
    ys = _axis(-spec.table_depth / 2, spec.table_depth / 2, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)


def sample_object(obj: ObjectSpec, spacing: float) -> np.ndarray:
    """Uniformly sample the closed surface of the shape (world frame)."""
    c = obj.position
    if obj.shape == "box":
        dx, dy, dz = obj.dimensions
        xs = _axis(c[0] - dx / 2, c[0] + dx / 2, spacing)
        ys = _axis(c[1] - dy / 2, c[1] + dy / 2, spacing)
        zs = _axis(c[2] - dz / 2, c[2] + dz / 2, spacing)
        faces = []
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        for z in (zs[0], zs[-1]):
            faces.append(np.stack([gx.ravel(), gy.ravel(),
                                   np.full(gx.size, z)], axis=1))
        gx, gz = np.meshgrid(xs, zs, indexing="ij")
        for y in (ys[0], ys[-1]):
            faces.append(np.stack([gx.ravel(), np.full(gx.size, y),
                                   gz.ravel()], axis=1))
        gy, gz = np.meshgrid(ys, zs, indexing="ij")
        for x in (xs[0], xs[-1]):
            faces.append(np.stack([np.full(gy.size, x), gy.ravel(),
                                   gz.ravel()], axis=1))
        return np.concatenate(faces)
    if obj.shape == "sphere":
        r = obj.dimensions[0]
        n = max(64, int(4 * math.pi * r * r / spacing ** 2))
        k = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * k / n)
        golden = math.pi * (1 + math.sqrt(5))
        theta = golden * k
        pts = np.stack([np.cos(theta) * np.sin(phi),
                        np.sin(theta) * np.sin(phi),
                        np.cos(phi)], axis=1) * r
        return pts + c
    # cylinder, axis along world z
    r, h = obj.dimensions
    m = max(8, int(round(2 * math.pi * r / spacing)))
    angles = np.arange(m) * (2 * math.pi / m)
    zs = _axis(c[2] - h / 2, c[2] + h / 2, spacing)
    ga, gz = np.meshgrid(angles, zs, indexing="ij")
    side = np.stack([c[0] + r * np.cos(ga.ravel()),
                     c[1] + r * np.sin(ga.ravel()),
                     gz.ravel()], axis=1)
    xs = _axis(-r, r, spacing)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    disc = gx.ravel() ** 2 + gy.ravel() ** 2 <= r * r
    dx, dy = gx.ravel()[disc], gy.ravel()[disc]
    caps = [np.stack([c[0] + dx, c[1] + dy,
                      np.full(dx.size, z)], axis=1)
            for z in (c[2] - h / 2, c[2] + h / 2)]
    return np.concatenate([side] + caps)


# --- ground truth ----------------------------------------------------------

def _camera_aabb(obj: ObjectSpec, world_cam: WorldCamera, frame: int):
    lo, hi = obj.world_extents()
    corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                        for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    cam = world_cam.to_camera(corners, frame)
    return cam.min(axis=0), cam.max(axis=0)


def _truth_bbox2(camera: CameraModel, ext_min, ext_max, clamp=True):
    corners = np.array([[x, y, z] for x in (ext_min[0], ext_max[0])
                        for y in (ext_min[1], ext_max[1])
                        for z in (ext_min[2], ext_max[2])])
    pix, valid = project_points(camera, corners)
    if not valid.all():
        return None
    u0, v0 = math.floor(pix[:, 0].min()), math.floor(pix[:, 1].min())
    u1, v1 = math.ceil(pix[:, 0].max()), math.ceil(pix[:, 1].max())
    if clamp:
        u0, v0 = max(u0, 0), max(v0, 0)
        u1 = min(u1, camera.image_width)
        v1 = min(v1, camera.image_height)
    return BBox2(u0, v0, u1, v1)


def ground_truth(spec: SceneSpec, frame: int) -> list[TruthObject]:
    world_cam = WorldCamera(spec)
    out = []
    for obj in spec.objects:
        ext_min, ext_max = _camera_aabb(obj, world_cam, frame)
        centroid = world_cam.to_camera(obj.position[None, :], frame)[0]
        box2 = _truth_bbox2(spec.camera, ext_min, ext_max)
        if box2 is None:
            raise InvalidSpec(f"object {obj.label!r} does not project in frame {frame}")
        out.append(TruthObject(obj.label, centroid, ext_min, ext_max, box2))
    return out


def validate_spec(spec: SceneSpec, cluster_tolerance: float = 0.02) -> None:
    """Gap, support, and frustum checks; raises InvalidSpec on violation."""
    if spec.table_width <= 0 or spec.table_depth <= 0 or spec.table_distance <= 0:
        raise InvalidSpec("table dimensions must be positive")
    if spec.spacing <= 0:
        raise InvalidSpec("spacing must be positive")
    if spec.noise_sigma < 0:
        raise InvalidSpec("noise_sigma must be >= 0")

    margin = 3 * spec.noise_sigma
    for i, a in enumerate(spec.objects):
        lo, hi = a.world_extents()
        if lo[2] < 0:
            raise InvalidSpec(f"object {a.label!r} extends below the table plane")
        if (abs(hi[0]) > spec.table_width / 2 or abs(lo[0]) > spec.table_width / 2
                or abs(hi[1]) > spec.table_depth / 2 or abs(lo[1]) > spec.table_depth / 2):
            raise InvalidSpec(f"object {a.label!r} overhangs the table")
        for b in spec.objects[i + 1:]:
            gap = aabb_gap(a, b)
            if gap <= cluster_tolerance + 2 * margin:
                raise InvalidSpec(
                    f"objects {a.label!r} and {b.label!r} gap {gap:.3f} m "
                    f"<= tolerance {cluster_tolerance} + margin {2 * margin:.3f}")

    check_frames = [0]
    if spec.motion_direction is not None:
        check_frames.append(spec.motion_frames - 1)
    for frame in check_frames:
        world_cam = WorldCamera(spec)
        for obj in spec.objects:
            ext_min, ext_max = _camera_aabb(obj, world_cam, frame)
            box = _truth_bbox2(spec.camera, ext_min, ext_max, clamp=False)
            if box is None or box.u_min < 0 or box.v_min < 0 \
                    or box.u_max > spec.camera.image_width \
                    or box.v_max > spec.camera.image_height:
                raise InvalidSpec(
                    f"object {obj.label!r} leaves the frustum in frame {frame}")


# --- frame synthesis -------------------------------------------------------

def _render_spacing(spec: SceneSpec) -> float:
    z_near = max(spec.table_distance - spec.table_depth, 0.3)
    footprint = z_near / max(spec.camera.f_i, spec.camera.f_j)
    return min(spec.spacing, RENDER_SUBPIXEL * footprint)


def render_image(spec: SceneSpec, frame: int) -> np.ndarray:
    """Rasterize the colored objects over the table color, far to near."""
    cam = spec.camera
    img = np.empty((cam.image_height, cam.image_width, 3), dtype=np.uint8)
    img[:] = np.asarray(spec.table_rgb, dtype=np.uint8)
    world_cam = WorldCamera(spec)
    spacing = _render_spacing(spec)

    order = sorted(spec.objects,
                   key=lambda o: -world_cam.to_camera(o.position[None, :], frame)[0, 2])
    for obj in order:
        pts = world_cam.to_camera(sample_object(obj, spacing), frame)
        pix, valid = project_points(cam, pts)
        pix = np.round(pix[valid]).astype(np.int64)
        keep = ((pix[:, 0] >= 0) & (pix[:, 0] < cam.image_width)
                & (pix[:, 1] >= 0) & (pix[:, 1] < cam.image_height))
        pix = pix[keep]
        img[pix[:, 1], pix[:, 0]] = np.asarray(obj.color, dtype=np.uint8)
    return img


def synth_cloud(spec: SceneSpec, frame: int) -> PointCloud:
    world_cam = WorldCamera(spec)
    chunks = [sample_table(spec, spec.spacing)]
    colors = [np.tile(np.asarray(spec.table_rgb, dtype=np.uint8),
                      (len(chunks[0]), 1))]
    for obj in spec.objects:
        pts = sample_object(obj, spec.spacing)
        chunks.append(pts)
        colors.append(np.tile(np.asarray(obj.color, dtype=np.uint8),
                              (len(pts), 1)))
    world = np.concatenate(chunks)
    xyz = world_cam.to_camera(world, frame)
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, frame])
        xyz = xyz + rng.standard_normal(xyz.shape) * spec.noise_sigma
    return PointCloud(xyz, np.concatenate(colors),
                      frame_id="camera", timestamp=frame / 5.0)


def synth_frame(spec: SceneSpec, frame: int):
    """One deterministic frame: (cloud, image, ground truth)."""
    validate_spec(spec)
    return synth_cloud(spec, frame), render_image(spec, frame), \
        ground_truth(spec, frame)


class FrameSource:
    """Frame iterator that validates once and reuses static renders."""

    def __init__(self, spec: SceneSpec, cluster_tolerance: float = 0.02):
        validate_spec(spec, cluster_tolerance)
        self.spec = spec
        self._static_image = None

    def frame(self, index: int):
        cloud = synth_cloud(self.spec, index)
        if self.spec.motion_direction is None:
            if self._static_image is None:
                self._static_image = render_image(self.spec, 0)
            image = self._static_image
        else:
            image = render_image(self.spec, index)
        return cloud, image, ground_truth(self.spec, index)


# --- flat scene-spec files ---------------------------------------------------

def format_scene(spec: SceneSpec) -> str:
    lines = [
        f"table.width = {spec.table_width!r}",
        f"table.depth = {spec.table_depth!r}",
        f"table.distance = {spec.table_distance!r}",
        f"table.rgb = {spec.table_rgb[0]},{spec.table_rgb[1]},{spec.table_rgb[2]}",
        f"pitch_deg = {spec.pitch_deg!r}",
        f"spacing = {spec.spacing!r}",
        f"noise_sigma = {spec.noise_sigma!r}",
        f"seed = {spec.seed}",
    ]
    if spec.motion_direction is not None:
        d = spec.motion_direction
        lines.append(f"motion.direction = {d[0]!r},{d[1]!r},{d[2]!r}")
        lines.append(f"motion.total = {spec.motion_total!r}")
        lines.append(f"motion.frames = {spec.motion_frames}")
    for k, obj in enumerate(spec.objects):
        dims = ",".join(repr(float(v)) for v in obj.dimensions)
        pos = ",".join(repr(float(v)) for v in obj.position)
        lines += [
            f"object.{k}.shape = {obj.shape}",
            f"object.{k}.dims = {dims}",
            f"object.{k}.position = {pos}",
            f"object.{k}.rgb = {obj.color[0]},{obj.color[1]},{obj.color[2]}",
            f"object.{k}.label = {obj.label}",
        ]
    cam = spec.camera
    lines += [
        f"camera.fi = {cam.f_i!r}", f"camera.fj = {cam.f_j!r}",
        f"camera.ci = {cam.c_i!r}", f"camera.cj = {cam.c_j!r}",
        f"camera.width = {cam.image_width}", f"camera.height = {cam.image_height}",
    ]
    return "\n".join(lines) + "\n"


def parse_scene(text: str, source: str = "<scene>") -> SceneSpec:
    kv: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise InvalidSpec(f"{source}:{lineno}: expected key = value")
        kv[key.strip()] = raw.strip()

    def triple(raw):
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != 3:
            raise InvalidSpec(f"{source}: expected 3 comma-separated values, "
                              f"got {raw!r}")
        return parts

    spec = SceneSpec()
    if "table.width" in kv:
        spec.table_width = float(kv["table.width"])
    if "table.depth" in kv:
        spec.table_depth = float(kv["table.depth"])
    if "table.distance" in kv:
        spec.table_distance = float(kv["table.distance"])
    if "table.rgb" in kv:
        spec.table_rgb = tuple(int(v) for v in triple(kv["table.rgb"]))
    if "pitch_deg" in kv:
        spec.pitch_deg = float(kv["pitch_deg"])
    if "spacing" in kv:
        spec.spacing = float(kv["spacing"])
    if "noise_sigma" in kv:
        spec.noise_sigma = float(kv["noise_sigma"])
    if "seed" in kv:
        spec.seed = int(kv["seed"])
    if "motion.direction" in kv:
        spec.motion_direction = np.array([float(v) for v in
                                          triple(kv["motion.direction"])])
        spec.__post_init__()
    if "motion.total" in kv:
        spec.motion_total = float(kv["motion.total"])
    if "motion.frames" in kv:
        spec.motion_frames = int(kv["motion.frames"])

    cam = spec.camera
    for attr, key in [("f_i", "camera.fi"), ("f_j", "camera.fj"),
                      ("c_i", "camera.ci"), ("c_j", "camera.cj")]:
        if key in kv:
            setattr(cam, attr, float(kv[key]))
    if "camera.width" in kv:
        cam.image_width = int(kv["camera.width"])
    if "camera.height" in kv:
        cam.image_height = int(kv["camera.height"])

    indices = sorted({int(k.split(".")[1]) for k in kv
                      if k.startswith("object.")})
    for k in indices:
        prefix = f"object.{k}."
        try:
            spec.objects.append(ObjectSpec(
                shape=kv[prefix + "shape"],
                dimensions=tuple(float(v) for v in
                                 kv[prefix + "dims"].split(",")),
                position=np.array([float(v) for v in
                                   triple(kv[prefix + "position"])]),
                color=tuple(int(v) for v in triple(kv[prefix + "rgb"])),
                label=kv[prefix + "label"],
            ))
        except KeyError as exc:
            raise InvalidSpec(f"{source}: object {k} missing {exc}") from exc
    return spec
