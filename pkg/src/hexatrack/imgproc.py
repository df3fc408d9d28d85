"""Raster primitives for the detection pipeline.

Conventions used throughout the package:
  - color frames are (h, w, 3) uint8 RGB arrays, wrapped in :class:`Frame`
    so they can carry their sequence index;
  - grayscale images are (h, w) uint8 arrays;
  - binary images are (h, w) uint8 arrays whose values are exactly 0 or 255
    (255 = foreground).

Pixel coordinates are (x, y) with x = column, y = row.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


class ImageError(ValueError):
    """Invalid image input or parameter."""


@dataclass
class Frame:
    """One RGB video frame plus its position in the sequence."""

    pixels: np.ndarray  # (h, w, 3) uint8
    index: int = 0

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ImageError(f"frame pixels must be (h, w, 3), got {self.pixels.shape}")
        if self.pixels.shape[0] <= 0 or self.pixels.shape[1] <= 0:
            raise ImageError("frame must be non-empty")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class HsvColor:
    """HSV triple with every component scaled to [0, 255]."""

    h: float
    s: float
    v: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.h, self.s, self.v)


def _gray_array(img) -> np.ndarray:
    a = img.pixels if isinstance(img, Frame) else np.asarray(img)
    if a.ndim != 2:
        raise ImageError(f"expected a 2-d grayscale image, got shape {a.shape}")
    return a


def to_grayscale(f: Frame | np.ndarray) -> np.ndarray:
    """Rec.601 luma: round(0.299 R + 0.587 G + 0.114 B), clamped to [0, 255]."""
    rgb = f.pixels if isinstance(f, Frame) else np.asarray(f)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ImageError(f"expected (h, w, 3) RGB, got shape {rgb.shape}")
    luma = rgb.astype(np.float32) @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def rgb_to_hsv(rgb: tuple[float, float, float]) -> HsvColor:
    """Standard RGB->HSV; H rescaled from [0, 360) to [0, 255], S and V to [0, 255]."""
    r, g, b = (float(c) / 255.0 for c in rgb)
    h, s, v = colorsys.rgb_to_hsv(r, g, b)
    return HsvColor(round(h * 255.0), round(s * 255.0), round(v * 255.0))


def hsv_to_rgb(hsv: HsvColor | tuple[float, float, float]) -> tuple[int, int, int]:
    """Inverse of :func:`rgb_to_hsv` (used by the scene renderer)."""
    h, s, v = hsv.as_tuple() if isinstance(hsv, HsvColor) else hsv
    r, g, b = colorsys.hsv_to_rgb(h / 255.0, s / 255.0, v / 255.0)
    return (round(r * 255.0), round(g * 255.0), round(b * 255.0))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-d Gaussian with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ImageError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(g: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Separable Gaussian blur; edges handled by clamping coordinates."""
    a = _gray_array(g)
    work = np.float32 if a.dtype == np.uint8 else np.float64
    k = gaussian_kernel1d(sigma).astype(work)
    out = ndimage.correlate1d(a.astype(work), k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    if a.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out


def abs_diff_threshold(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Binary mask: 255 where |a - b| > t, else 0."""
    ga, gb = _gray_array(a), _gray_array(b)
    if ga.shape != gb.shape:
        raise ImageError(f"dimension mismatch: {ga.shape} vs {gb.shape}")
    d = np.abs(ga.astype(np.int16) - gb.astype(np.int16))
    return np.where(d > t, 255, 0).astype(np.uint8)


_SE3 = np.ones((3, 3), dtype=bool)


def morph_open_3x3(b: np.ndarray) -> np.ndarray:
    """Opening (erode then dilate) with a full 3x3 element, borders treated as 0."""
    mask = _gray_array(b) > 0
    opened = ndimage.binary_dilation(
        ndimage.binary_erosion(mask, structure=_SE3, border_value=0),
        structure=_SE3,
        border_value=0,
    )
    return np.where(opened, 255, 0).astype(np.uint8)


def connected_components(b: np.ndarray) -> list[np.ndarray]:
    """8-connected components of the foreground.

    Returns one (n, 2) int array of (x, y) pixel coordinates per component;
    the arrays are disjoint and together cover every foreground pixel.
    """
    mask = _gray_array(b) > 0
    labels, count = ndimage.label(mask, structure=_SE3)
    comps: list[np.ndarray] = []
    if count == 0:
        return comps
    order = np.argsort(labels[mask], kind="stable")
    ys, xs = np.nonzero(mask)
    ys, xs = ys[order], xs[order]
    sizes = np.bincount(labels[mask])[1:]
    start = 0
    for size in sizes:
        sel = slice(start, start + size)
        comps.append(np.column_stack([xs[sel], ys[sel]]))
        start += size
    return comps


# --- file I/O for corpus tests and CLI output ---------------------------------


def write_image(path: str | Path, img: Frame | np.ndarray) -> None:
    """Write PGM/PPM/PNG depending on extension and array rank."""
    a = img.pixels if isinstance(img, Frame) else np.asarray(img, dtype=np.uint8)
    Image.fromarray(a).save(str(path))


def read_image(path: str | Path) -> np.ndarray:
    """Read an 8-bit image; returns (h, w) for grayscale or (h, w, 3) for color."""
    with Image.open(str(path)) as im:
        if im.mode in ("L", "1", "I", "I;16"):
            return np.asarray(im.convert("L"), dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)
