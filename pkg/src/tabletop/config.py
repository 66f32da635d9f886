"""Pipeline configuration: flat key=value files, env and flag overrides.

Precedence (lowest to highest): built-in defaults, config file, environment
variables ``GRP_<KEY>`` (key uppercased, dots replaced by underscores),
explicit overrides (CLI flags).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .camera import CameraModel
from .cloud import PassthroughBounds, PointCloud, calibrate_leaf
from .cluster import ClusterParams
from .errors import ConfigError
from .plane import RansacParams

CONFIG_SCHEMA_VERSION = 1

# Default passthrough volume: generously covers the standard synthetic
# table (including camera-motion scenes) while demonstrating the optional
# table-bounds crop.
DEFAULT_TABLE_BOUNDS = PassthroughBounds(
    x_min=-1.5, x_max=1.5, y_min=-1.5, y_max=1.5, z_min=0.2, z_max=3.5)


def default_camera() -> CameraModel:
    return CameraModel(f_i=525.0, f_j=525.0, c_i=319.5, c_j=239.5)


@dataclass
class PipelineConfig:
    leaf: float | None = None
    alpha: float | None = 0.1
    passthrough_enabled: bool = True
    passthrough: PassthroughBounds = field(
        default_factory=lambda: PassthroughBounds(**vars(DEFAULT_TABLE_BOUNDS)))
    ransac: RansacParams = field(default_factory=RansacParams)
    cluster: ClusterParams = field(default_factory=ClusterParams)
    border_fraction: float = 0.4
    classifier: str | None = None
    classifier_model: str | None = None
    classifier_input: int = 64
    camera: CameraModel = field(default_factory=default_camera)
    seed: int = 0
    _resolved_leaf: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.ransac.rng_seed = self.seed

    def validate(self) -> None:
        if self.leaf is not None and self.alpha is not None:
            raise ConfigError("leaf and alpha are mutually exclusive")
        if self.leaf is None and self.alpha is None:
            raise ConfigError("one of leaf or alpha is required")
        if self.leaf is not None and not self.leaf > 0:
            raise ConfigError("leaf must be > 0")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")
        if self.border_fraction < 0:
            raise ConfigError("border_fraction must be >= 0")
        if self.classifier_input < 1:
            raise ConfigError("classifier.input must be >= 1")
        self.passthrough.validate()
        self.ransac.validate()
        self.cluster.validate()
        self.camera.validate()

    def effective_leaf(self, cloud: PointCloud) -> float:
        """Leaf size to use; an alpha target is calibrated once and reused."""
        if self.leaf is not None:
            return self.leaf
        if self._resolved_leaf is None:
            self._resolved_leaf = calibrate_leaf(cloud, self.alpha).leaf
        return self._resolved_leaf


# --- flat key=value format -------------------------------------------------

_FLOAT_KEYS = {
    "leaf", "alpha", "border_fraction",
    "ransac.dist", "ransac.min_frac", "cluster.tol",
    "camera.fi", "camera.fj", "camera.ci", "camera.cj",
    "camera.t0", "camera.t1", "camera.t2",
    "passthrough.x_min", "passthrough.x_max",
    "passthrough.y_min", "passthrough.y_max",
    "passthrough.z_min", "passthrough.z_max",
} | {f"camera.r{r}{c}" for r in range(3) for c in range(3)}
_INT_KEYS = {"ransac.iters", "cluster.min", "cluster.max", "seed",
             "classifier.input", "camera.width", "camera.height"}
_BOOL_KEYS = {"passthrough.enabled"}
_STR_KEYS = {"classifier", "classifier.model"}
_ALL_KEYS = _FLOAT_KEYS | _INT_KEYS | _BOOL_KEYS | _STR_KEYS

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{key}: cannot parse {raw!r} as bool")
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines into a typed key dict."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key = key.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def env_key(key: str) -> str:
    return "GRP_" + key.upper().replace(".", "_")


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    values = {}
    for key in _ALL_KEYS:
        raw = environ.get(env_key(key))
        if raw is not None:
            values[key] = _parse_value(key, raw)
    return values


def _apply_keys(cfg: PipelineConfig, values: dict) -> None:
    rotation = cfg.camera.rotation.copy()
    translation = cfg.camera.translation.copy()
    for key, val in values.items():
        if key == "leaf":
            cfg.leaf = val
        elif key == "alpha":
            cfg.alpha = val
        elif key == "border_fraction":
            cfg.border_fraction = val
        elif key == "seed":
            cfg.seed = val
            cfg.ransac.rng_seed = val
        elif key == "classifier":
            cfg.classifier = val
        elif key == "classifier.model":
            cfg.classifier_model = val
        elif key == "classifier.input":
            cfg.classifier_input = val
        elif key == "passthrough.enabled":
            cfg.passthrough_enabled = val
        elif key.startswith("passthrough."):
            setattr(cfg.passthrough, key.split(".", 1)[1], val)
        elif key == "ransac.dist":
            cfg.ransac.distance_threshold = val
        elif key == "ransac.iters":
            cfg.ransac.max_iterations = val
        elif key == "ransac.min_frac":
            cfg.ransac.min_inlier_fraction = val
        elif key == "cluster.tol":
            cfg.cluster.tolerance = val
        elif key == "cluster.min":
            cfg.cluster.min_size = val
        elif key == "cluster.max":
            cfg.cluster.max_size = val
        elif key == "camera.fi":
            cfg.camera.f_i = val
        elif key == "camera.fj":
            cfg.camera.f_j = val
        elif key == "camera.ci":
            cfg.camera.c_i = val
        elif key == "camera.cj":
            cfg.camera.c_j = val
        elif key == "camera.width":
            cfg.camera.image_width = val
        elif key == "camera.height":
            cfg.camera.image_height = val
        elif key.startswith("camera.r"):
            r, c = int(key[8]), int(key[9])
            rotation[r, c] = val
        elif key.startswith("camera.t"):
            translation[int(key[8])] = val
        else:  # pragma: no cover - schema and dispatch kept in sync
            raise ConfigError(f"unhandled key {key!r}")
    cfg.camera.rotation = rotation
    cfg.camera.translation = translation


def load_config(path=None, environ=None, overrides: dict | None = None,
                defaults: PipelineConfig | None = None) -> PipelineConfig:
    """Build a validated config from file + environment + explicit overrides.

    If both ``leaf`` and ``alpha`` end up set, the higher-precedence source
    must have intended to switch modes, so the other is cleared.
    """
    cfg = defaults if defaults is not None else PipelineConfig()
    for values in (parse_config_text(open(path).read(), str(path)) if path else {},
                   env_overrides(environ),
                   overrides or {}):
        if not values:
            continue
        if "leaf" in values and "alpha" not in values and values["leaf"] is not None:
            cfg.alpha = None
        if "alpha" in values and "leaf" not in values and values["alpha"] is not None:
            cfg.leaf = None
        _apply_keys(cfg, values)
    cfg.validate()
    return cfg


def format_config(cfg: PipelineConfig) -> str:
    """Serialize to the flat key=value format (round-trips via load_config)."""
    lines = []

    def put(key, val):
        if val is None:
            return
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{key} = {val}")

    put("leaf", cfg.leaf)
    put("alpha", cfg.alpha)
    put("passthrough.enabled", cfg.passthrough_enabled)
    for axis in "xyz":
        for side in ("min", "max"):
            put(f"passthrough.{axis}_{side}", getattr(cfg.passthrough, f"{axis}_{side}"))
    put("ransac.dist", cfg.ransac.distance_threshold)
    put("ransac.iters", cfg.ransac.max_iterations)
    put("ransac.min_frac", cfg.ransac.min_inlier_fraction)
    put("cluster.tol", cfg.cluster.tolerance)
    put("cluster.min", cfg.cluster.min_size)
    put("cluster.max", cfg.cluster.max_size)
    put("border_fraction", cfg.border_fraction)
    put("classifier", cfg.classifier)
    put("classifier.model", cfg.classifier_model)
    put("classifier.input", cfg.classifier_input)
    put("seed", cfg.seed)
    put("camera.fi", cfg.camera.f_i)
    put("camera.fj", cfg.camera.f_j)
    put("camera.ci", cfg.camera.c_i)
    put("camera.cj", cfg.camera.c_j)
    for r in range(3):
        for c in range(3):
            put(f"camera.r{r}{c}", float(cfg.camera.rotation[r, c]))
    for k in range(3):
        put(f"camera.t{k}", float(cfg.camera.translation[k]))
    put("camera.width", cfg.camera.image_width)
    put("camera.height", cfg.camera.image_height)
    return "\n".join(lines) + "\n"
