"""8-bit RGB images as (h, w, 3) numpy arrays, PPM I/O, patch crop/scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import BBox2
from .errors import BoxOutOfBounds, IoFailure, MalformedHeader, MissingFile


def as_image(pixels: np.ndarray) -> np.ndarray:
    img = np.asarray(pixels, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB image, got shape {img.shape}")
    return img


@dataclass
class Patch:
    """An image crop plus the pixel box it came from."""

    pixels: np.ndarray
    box: BBox2

    def __post_init__(self):
        self.pixels = as_image(self.pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def extract_patch(image: np.ndarray, box: BBox2) -> Patch:
    """Pixel-exact crop of ``box`` from the image."""
    image = as_image(image)
    h, w = image.shape[:2]
    if not (0 <= box.u_min < box.u_max <= w and 0 <= box.v_min < box.v_max <= h):
        raise BoxOutOfBounds(f"{box} outside {w}x{h} image")
    return Patch(image[box.v_min:box.v_max, box.u_min:box.u_max].copy(), box)


def scale_patch(patch: Patch, out_w: int, out_h: int) -> Patch:
    """Nearest-neighbor resample; source index is floor(dst * src / out)."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    src_h, src_w = patch.pixels.shape[:2]
    rows = (np.arange(out_h, dtype=np.int64) * src_h) // out_h
    cols = (np.arange(out_w, dtype=np.int64) * src_w) // out_w
    return Patch(patch.pixels[rows[:, None], cols[None, :]], patch.box)


def save_ppm(image: np.ndarray, path) -> None:
    """Write binary PPM (P6, maxval 255)."""
    image = as_image(image)
    h, w = image.shape[:2]
    try:
        with open(path, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(image.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_ppm(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError as exc:
        raise MissingFile(str(path)) from exc

    if not data.startswith(b"P6"):
        raise MalformedHeader(f"{path}: not a P6 PPM")
    # Header is 4 whitespace-separated tokens: P6, width, height, maxval,
    # followed by exactly one whitespace byte before the raster.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeader(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # the single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MalformedHeader(f"{path}: bad PPM header tokens") from exc
    if maxval != 255:
        raise MalformedHeader(f"{path}: maxval {maxval} unsupported")
    raster = data[pos:pos + w * h * 3]
    if len(raster) != w * h * 3:
        raise MalformedHeader(f"{path}: expected {w * h * 3} raster bytes, "
                              f"got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3).copy()
