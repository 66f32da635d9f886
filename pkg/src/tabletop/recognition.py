"""Patch classification: color-histogram baseline model and the detect
entry point joining proposals with class scores."""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel
from .cloud import PointCloud
from .config import PipelineConfig
from .errors import (
    EmptyClass,
    MalformedHeader,
    ShapeMismatch,
    SingleClass,
)
from .image import Patch, as_image, extract_patch, scale_patch
from .proposal import Proposal, propose_regions

log = logging.getLogger("tabletop")

HIST_BINS = 4          # per channel; 4**3 = 64 total
BASELINE_INPUT = 64    # baseline classifier consumes 64x64 patches
_MODEL_MAGIC = b"GBM1"


def patch_histogram(pixels: np.ndarray) -> np.ndarray:
    """L1-normalized 4x4x4 RGB histogram, flattened to 64 bins."""
    img = as_image(pixels).reshape(-1, 3)
    bins = (img // (256 // HIST_BINS)).astype(np.int64)
    flat = (bins[:, 0] * HIST_BINS + bins[:, 1]) * HIST_BINS + bins[:, 2]
    hist = np.bincount(flat, minlength=HIST_BINS ** 3).astype(np.float64)
    return hist / hist.sum()


def argmax_label(scores: dict[str, float]) -> str:
    """Highest-probability label; exact ties break lexicographically."""
    best = max(scores.values())
    return min(lab for lab, p in scores.items() if p == best)


def validate_scores(scores: dict[str, float], labels: list[str],
                    tol: float = 1e-6) -> None:
    if set(scores) != set(labels):
        raise ShapeMismatch("score labels do not match the model's label set")
    total = 0.0
    for lab, p in scores.items():
        if p < 0:
            raise ShapeMismatch(f"negative probability for {lab!r}")
        total += p
    if abs(total - 1.0) > tol:
        raise ShapeMismatch(f"probabilities sum to {total}, not 1")


@dataclass
class BaselineModel:
    """Per-class mean color histograms scored by softmax over -distance/T."""

    labels: list[str]
    centroids: np.ndarray
    temperature: float = 0.05

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)

    @property
    def input_size(self) -> tuple[int, int]:
        return (BASELINE_INPUT, BASELINE_INPUT)

    def classify(self, patch: Patch) -> dict[str, float]:
        if (patch.width, patch.height) != self.input_size:
            raise ShapeMismatch(
                f"baseline expects {BASELINE_INPUT}x{BASELINE_INPUT}, "
                f"got {patch.width}x{patch.height}")
        h = patch_histogram(patch.pixels)
        dist = np.linalg.norm(self.centroids - h, axis=1)
        logits = -dist / self.temperature
        logits -= logits.max()
        expd = np.exp(logits)
        probs = expd / expd.sum()
        scores = {lab: float(p) for lab, p in zip(self.labels, probs)}
        validate_scores(scores, self.labels)
        return scores


def train_baseline(dataset, temperature: float = 0.05) -> BaselineModel:
    """Average per-class histograms of patches scaled to the baseline input.

    ``dataset`` is a sequence of (Patch, label) pairs; labels are sorted
    lexicographically in the resulting model.
    """
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    by_label: dict[str, list[np.ndarray]] = {}
    for patch, label in dataset:
        scaled = scale_patch(patch, BASELINE_INPUT, BASELINE_INPUT)
        by_label.setdefault(label, []).append(patch_histogram(scaled.pixels))
    if not by_label:
        raise EmptyClass("dataset is empty")
    if len(by_label) < 2:
        raise SingleClass(f"need >= 2 classes, got {sorted(by_label)}")
    labels = sorted(by_label)
    centroids = np.stack([np.mean(by_label[lab], axis=0) for lab in labels])
    return BaselineModel(labels, centroids, temperature)


def classify(model, patch: Patch) -> dict[str, float]:
    """Dispatch to a baseline model or a remote classifier client."""
    return model.classify(patch)


def save_model(model: BaselineModel, path) -> None:
    """Binary model file: GBM1 magic, u32 label count, per label a u32
    byte length + UTF-8 label + 64 little-endian float64 bins, then a
    float64 temperature."""
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<I", len(model.labels)))
        for lab, cent in zip(model.labels, model.centroids):
            raw = lab.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack(f"<{HIST_BINS ** 3}d", *cent))
        fh.write(struct.pack("<d", model.temperature))


def load_model(path) -> BaselineModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MODEL_MAGIC:
        raise MalformedHeader(f"{path}: bad model magic {data[:4]!r}")
    pos = 4
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    labels, rows = [], []
    for _ in range(count):
        (nbytes,) = struct.unpack_from("<I", data, pos)
        pos += 4
        labels.append(data[pos:pos + nbytes].decode("utf-8"))
        pos += nbytes
        rows.append(struct.unpack_from(f"<{HIST_BINS ** 3}d", data, pos))
        pos += 8 * HIST_BINS ** 3
    (temperature,) = struct.unpack_from("<d", data, pos)
    centroids = np.array(rows)
    if np.abs(centroids.sum(axis=1) - 1.0).max() > 1e-6:
        raise MalformedHeader(f"{path}: centroid rows are not normalized")
    return BaselineModel(labels, centroids, temperature)


@dataclass
class Detection:
    """A proposal joined with its class label and per-class scores."""

    proposal: Proposal
    label: str
    scores: dict[str, float] = field(default_factory=dict)


def detect(cloud: PointCloud, image: np.ndarray, camera: CameraModel,
           config: PipelineConfig, classifier,
           timings: dict | None = None) -> list[Detection]:
    """Propose regions, then classify each patch; one Detection per proposal.

    A classifier failure on one patch yields label "error" with uniform
    scores instead of aborting the frame.
    """
    image = as_image(image)
    if image.shape[:2] != (camera.image_height, camera.image_width):
        raise ValueError(
            f"image is {image.shape[1]}x{image.shape[0]} but camera expects "
            f"{camera.image_width}x{camera.image_height}")
    proposals = propose_regions(cloud, camera, config, timings=timings)

    in_w, in_h = getattr(classifier, "input_size",
                         (config.classifier_input, config.classifier_input))
    detections = []
    for prop in proposals:
        t0 = time.perf_counter()
        patch = extract_patch(image, prop.bbox2)
        scaled = scale_patch(patch, in_w, in_h)
        try:
            scores = classifier.classify(scaled)
            label = argmax_label(scores)
        except Exception as exc:  # degrade per patch, never per frame
            log.warning("detect: classifier failed on patch %s: %s",
                        prop.bbox2, exc)
            labels = list(getattr(classifier, "labels", []))
            scores = {lab: 1.0 / len(labels) for lab in labels} if labels else {}
            label = "error"
        if timings is not None:
            timings["classify"] = (timings.get("classify", 0.0)
                                   + time.perf_counter() - t0)
        detections.append(Detection(prop, label, scores))
    return detections
