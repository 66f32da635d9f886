"""Supervised dataset capture: stream single-object frames through the
proposal pipeline and persist labeled patches.

Dataset layout: ``<root>/<label>/<index>.ppm`` (binary PPM P6) plus
``<root>/manifest.csv`` with header
``path,label,timestamp,u0,v0,u1,v1,cx,cy,cz``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .camera import BBox2, CameraModel
from .config import PipelineConfig
from .errors import MalformedManifestRow, MissingFile
from .image import Patch, extract_patch, load_ppm, save_ppm
from .proposal import propose_regions

log = logging.getLogger("tabletop")

MANIFEST_NAME = "manifest.csv"
MANIFEST_HEADER = "path,label,timestamp,u0,v0,u1,v1,cx,cy,cz"


@dataclass
class ManifestRow:
    path: str          # relative to the dataset root, forward slashes
    label: str
    timestamp: float
    bbox2: BBox2
    centroid: tuple

    def to_csv(self) -> str:
        b = self.bbox2
        cx, cy, cz = self.centroid
        return (f"{self.path},{self.label},{self.timestamp!r},"
                f"{b.u_min},{b.v_min},{b.u_max},{b.v_max},"
                f"{cx!r},{cy!r},{cz!r}")

    @classmethod
    def from_csv(cls, line: str) -> "ManifestRow":
        parts = line.split(",")
        if len(parts) != 10:
            raise MalformedManifestRow(f"expected 10 fields, got {len(parts)}: "
                                       f"{line!r}")
        try:
            return cls(
                path=parts[0],
                label=parts[1],
                timestamp=float(parts[2]),
                bbox2=BBox2(*(int(v) for v in parts[3:7])),
                centroid=tuple(float(v) for v in parts[7:10]),
            )
        except ValueError as exc:
            raise MalformedManifestRow(f"unparsable row {line!r}") from exc


@dataclass
class DatasetManifest:
    root: Path
    rows: list = field(default_factory=list)

    def labels(self) -> list[str]:
        return sorted({row.label for row in self.rows})

    def count(self, label: str) -> int:
        return sum(row.label == label for row in self.rows)


@dataclass
class AcquisitionSession:
    labels: list
    target_count: int
    border_fraction: float
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if self.border_fraction < 0:
            raise ValueError("border_fraction must be >= 0")


@dataclass
class AcquireStats:
    stored: int = 0
    skipped_empty: int = 0
    skipped_ambiguous: int = 0
    stream_ended: bool = False


def write_manifest(manifest: DatasetManifest) -> None:
    path = manifest.root / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MANIFEST_HEADER + "\n")
        for row in manifest.rows:
            fh.write(row.to_csv() + "\n")


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.exists():
        raise MissingFile(str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        raise MalformedManifestRow(f"{path}: bad or missing header")
    rows = [ManifestRow.from_csv(line) for line in lines[1:] if line.strip()]
    for row in rows:
        if not (root / row.path).exists():
            raise MissingFile(str(root / row.path))
    return DatasetManifest(root, rows)


def load_dataset(root) -> list[tuple[Patch, str]]:
    """Stored (unscaled) patches with their labels, in manifest order."""
    manifest = load_manifest(root)
    out = []
    for row in manifest.rows:
        pixels = load_ppm(manifest.root / row.path)
        out.append((Patch(pixels, row.bbox2), row.label))
    return out


def acquire_class(frames, label: str, session: AcquisitionSession,
                  camera: CameraModel, config: PipelineConfig) -> AcquireStats:
    """Consume frames until ``session.target_count`` patches are stored.

    A frame contributes only when the pipeline proposes exactly one
    region (the single placed object); other frames are tallied and
    skipped. The stored patch is the expanded bbox2 crop, the identical
    crop the detector would classify.
    """
    if session.border_fraction != config.border_fraction:
        raise ValueError(
            f"session border fraction {session.border_fraction} != pipeline "
            f"{config.border_fraction}; capture and runtime must match")

    try:
        manifest = load_manifest(session.root)
    except MissingFile:
        manifest = DatasetManifest(Path(session.root))
    label_dir = session.root / label
    os.makedirs(label_dir, exist_ok=True)

    stats = AcquireStats()
    index = manifest.count(label)
    for cloud, image in frames:
        if stats.stored >= session.target_count:
            break
        proposals = propose_regions(cloud, camera, config)
        if len(proposals) == 0:
            stats.skipped_empty += 1
            continue
        if len(proposals) > 1:
            stats.skipped_ambiguous += 1
            continue
        prop = proposals[0]
        patch = extract_patch(image, prop.bbox2)
        rel = f"{label}/{index:04d}.ppm"
        save_ppm(patch.pixels, session.root / rel)
        manifest.rows.append(ManifestRow(
            rel, label, cloud.timestamp, prop.bbox2,
            tuple(float(v) for v in prop.centroid)))
        stats.stored += 1
        index += 1

    if stats.stored < session.target_count:
        stats.stream_ended = True
        log.warning("acquire_class(%s): stream ended at %d/%d patches",
                    label, stats.stored, session.target_count)
    write_manifest(manifest)
    return stats
