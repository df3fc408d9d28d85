"""Kernelized correlation filter tracking on raw grayscale features.

Ridge regression over all cyclic shifts of the target window becomes
pointwise division in the Fourier domain, so one train/detect step costs a
handful of 2D transforms.  The transforms here are an iterative radix-2
Cooley-Tukey implementation (window sizes are powers of two by
construction); numpy's FFT serves only as a test oracle.

Conventions:
  - windows are (rows, cols) arrays; shifts are (row, col) offsets;
  - the regression target peaks at the window center, so a static target
    answers with its response maximum at the center;
  - the template and model coefficients are blended with factor eta after
    every update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgproc import Frame, to_grayscale


class TrackError(RuntimeError):
    pass


class LostTarget(TrackError):
    """Search window no longer overlaps the frame."""


# --- 2D DFT on power-of-two grids ----------------------------------------------

_rev_cache: dict[int, np.ndarray] = {}


def _bit_reverse(n: int) -> np.ndarray:
    rev = _rev_cache.get(n)
    if rev is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        rev = np.zeros(n, dtype=np.intp)
        for _ in range(bits):
            rev = (rev << 1) | (idx & 1)
            idx >>= 1
        _rev_cache[n] = rev
    return rev


def _fft_last_axis(a: np.ndarray, inverse: bool) -> np.ndarray:
    n = a.shape[-1]
    if n == 1:
        return a.astype(np.complex128)
    y = np.ascontiguousarray(a[..., _bit_reverse(n)], dtype=np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        ang = (2j if inverse else -2j) * np.pi / size
        tw = np.exp(ang * np.arange(half))
        y = y.reshape(*y.shape[:-1], n // size, size)
        even = y[..., :half].copy()
        odd = y[..., half:] * tw
        y[..., :half] = even + odd
        y[..., half:] = even - odd
        y = y.reshape(*y.shape[:-2], n)
        size *= 2
    return y


def _check_pow2(shape: tuple[int, ...]) -> None:
    for n in shape[-2:]:
        if n < 1 or n & (n - 1):
            raise ValueError(f"dimensions must be powers of two, got {shape}")


def dft2(x: np.ndarray) -> np.ndarray:
    """Unscaled 2D DFT of a real or complex (rows, cols) array."""
    a = np.asarray(x)
    _check_pow2(a.shape)
    return _fft_last_axis(_fft_last_axis(a, False).swapaxes(-1, -2), False).swapaxes(-1, -2)


def idft2(x: np.ndarray) -> np.ndarray:
    """Inverse 2D DFT; returns the real part (inputs stem from real signals)."""
    a = np.asarray(x)
    _check_pow2(a.shape)
    y = _fft_last_axis(_fft_last_axis(a, True).swapaxes(-1, -2), True).swapaxes(-1, -2)
    return y.real / (a.shape[-1] * a.shape[-2])


def gaussian_correlation(x: np.ndarray, z: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel between x and every cyclic shift of z.

    The (i, j) entry is k(x, z shifted by (i, j)); for z = x the maximum 1.0
    sits at (0, 0).  Multi-channel inputs (rows, cols, ch) are summed over
    channels.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {z.shape}")
    if x.ndim == 2:
        x = x[:, :, None]
        z = z[:, :, None]
    _check_pow2(x.shape[:2])
    cross = np.zeros(x.shape[:2])
    for ch in range(x.shape[2]):
        cross += idft2(np.conj(dft2(x[:, :, ch])) * dft2(z[:, :, ch]))
    d = (x * x).sum() + (z * z).sum() - 2.0 * cross
    n = x.size
    return np.exp(-np.maximum(d, 0.0) / (sigma * sigma * n))


# --- tracker -------------------------------------------------------------------


@dataclass(frozen=True)
class TrackParams:
    padding: float = 2.5  # window size relative to the target box
    sigma: float = 0.5  # kernel bandwidth on [0,1] features
    lam: float = 1e-4  # ridge regularizer
    eta: float = 0.075  # model interpolation factor
    min_box_area: float = 16.0


@dataclass
class TrackState:
    center: tuple[float, float]  # (cx, cy) in image px
    size: tuple[float, float]  # (w, h) of the target box
    window: tuple[int, int]  # padded window in image px (ww, wh)
    grid: tuple[int, int]  # power-of-two working grid (cols, rows)
    cos_window: np.ndarray
    template: np.ndarray  # windowed features x
    alphaf: np.ndarray  # model coefficients, frequency domain
    yf: np.ndarray  # regression target, frequency domain
    params: TrackParams

    @property
    def box(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        w, h = self.size
        return (cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass
class TrackResult:
    box: tuple[float, float, float, float]
    peak: float
    peak_loc: tuple[int, int]  # response argmax on the working grid (row, col)


def _pow2_near(n: float) -> int:
    return int(2 ** min(max(round(math.log2(max(n, 1.0))), 3), 8))


def _subwindow(gray: np.ndarray, center: tuple[float, float], size: tuple[int, int]) -> np.ndarray:
    """Window around center with border replication, like the usual KCF crop."""
    h, w = gray.shape
    ww, wh = size
    xs = np.floor(center[0]) + np.arange(ww) - ww // 2
    ys = np.floor(center[1]) + np.arange(wh) - wh // 2
    xs = np.clip(xs, 0, w - 1).astype(int)
    ys = np.clip(ys, 0, h - 1).astype(int)
    return gray[np.ix_(ys, xs)]


def _resize(patch: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    nx, ny = grid
    h, w = patch.shape
    if (w, h) == (nx, ny):
        return patch.astype(np.float64)
    cols = np.linspace(0, w - 1, nx)
    rows = np.linspace(0, h - 1, ny)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(patch.astype(np.float64), [rr, cc], order=1, mode="nearest")


def _features(patch: np.ndarray, cos_window: np.ndarray) -> np.ndarray:
    f = patch / 255.0
    f = f - f.mean()
    return f * cos_window


def _gaussian_target(grid: tuple[int, int], target_size: tuple[float, float]) -> np.ndarray:
    nx, ny = grid
    bw = math.sqrt(target_size[0] * target_size[1]) / 10.0
    ys = np.arange(ny) - ny // 2
    xs = np.arange(nx) - nx // 2
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.exp(-0.5 * (xx * xx + yy * yy) / (bw * bw))


def init_track(f: Frame, box: tuple[float, float, float, float], params: TrackParams | None = None) -> TrackState:
    """Train a fresh model on the operator-selected box (x, y, w, h)."""
    params = params or TrackParams()
    x, y, w, h = box
    if w * h < params.min_box_area:
        raise TrackError(f"box too small: {w}x{h}")
    if x < 0 or y < 0 or x + w > f.width or y + h > f.height:
        raise TrackError(f"box {box} outside {f.width}x{f.height} frame")

    gray = to_grayscale(f)
    center = (x + w / 2.0, y + h / 2.0)
    ww = max(int(round(w * params.padding)), 8)
    wh = max(int(round(h * params.padding)), 8)
    grid = (_pow2_near(ww), _pow2_near(wh))
    sx, sy = grid[0] / ww, grid[1] / wh

    cos_window = np.outer(np.hanning(grid[1]), np.hanning(grid[0]))
    patch = _resize(_subwindow(gray, center, (ww, wh)), grid)
    feat = _features(patch, cos_window)
    yf = dft2(_gaussian_target(grid, (w * sx, h * sy)))
    k = gaussian_correlation(feat, feat, params.sigma)
    # the target is centered, the kernel map peaks at zero shift: re-center it
    k = np.roll(k, (grid[1] // 2, grid[0] // 2), axis=(0, 1))
    alphaf = yf / (dft2(k) + params.lam)
    return TrackState(
        center=center,
        size=(float(w), float(h)),
        window=(ww, wh),
        grid=grid,
        cos_window=cos_window,
        template=feat,
        alphaf=alphaf,
        yf=yf,
        params=params,
    )


def update_track(state: TrackState, f: Frame) -> TrackResult:
    """Locate the target in a new frame and refresh the model in place."""
    gray = to_grayscale(f)
    ww, wh = state.window
    cx, cy = state.center
    if cx + ww / 2.0 < 0 or cx - ww / 2.0 > f.width or cy + wh / 2.0 < 0 or cy - wh / 2.0 > f.height:
        raise LostTarget(f"window at {state.center} outside {f.width}x{f.height} frame")

    patch = _resize(_subwindow(gray, state.center, (ww, wh)), state.grid)
    feat = _features(patch, state.cos_window)
    k = gaussian_correlation(state.template, feat, state.params.sigma)
    k = np.roll(k, (state.grid[1] // 2, state.grid[0] // 2), axis=(0, 1))
    response = idft2(dft2(k) * state.alphaf)

    row, col = np.unravel_index(int(response.argmax()), response.shape)
    dy_grid = row - state.grid[1] // 2
    dx_grid = col - state.grid[0] // 2
    dx = dx_grid * ww / state.grid[0]
    dy = dy_grid * wh / state.grid[1]
    state.center = (cx + dx, cy + dy)

    # retrain at the new location and blend
    patch = _resize(_subwindow(gray, state.center, (ww, wh)), state.grid)
    feat = _features(patch, state.cos_window)
    k = gaussian_correlation(feat, feat, state.params.sigma)
    k = np.roll(k, (state.grid[1] // 2, state.grid[0] // 2), axis=(0, 1))
    alphaf_new = state.yf / (dft2(k) + state.params.lam)
    eta = state.params.eta
    state.template = (1.0 - eta) * state.template + eta * feat
    state.alphaf = (1.0 - eta) * state.alphaf + eta * alphaf_new

    return TrackResult(box=state.box, peak=float(response.max()), peak_loc=(int(row), int(col)))
