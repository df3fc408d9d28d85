"""Interest points and symmetric KNN matching between consecutive frames.

The detector scores pixels by the absolute determinant of the Hessian of a
smoothed image and keeps 3x3 local maxima; descriptors are an 8x8 grid of
mean intensities over a 16x16 patch, mean-subtracted and L2-normalized.
This is deliberately translation-only machinery: the camera shake in scope
is a few pixels of translation per frame, so scale/rotation invariance would
buy nothing.

Matching runs k=2 nearest-neighbour with Lowe's ratio test in both
directions and keeps only mutual pairs, which is what makes it symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgproc import ImageError, gaussian_kernel1d

DESCRIPTOR_PATCH = 16  # px, so keypoints keep an 8 px margin from borders
DESCRIPTOR_DIM = 64
DEFAULT_MAX_POINTS = 400
DEFAULT_KNN_RATIO = 0.7
_RESPONSE_FLOOR = 3e-6  # on [0,1]-scaled intensities; rejects flat/low-contrast areas
_STRATIFY_CELL = 80  # px; per-cell cap spreads the budget over the whole image


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    response: float


@dataclass(frozen=True)
class MatchPair:
    """Correspondence between a point in the earlier frame and one in the later."""

    prev_pt: tuple[float, float]
    curr_pt: tuple[float, float]
    distance: float


def _smooth(img: np.ndarray, sigma: float = 1.2) -> np.ndarray:
    k = gaussian_kernel1d(sigma).astype(np.float32)
    out = ndimage.correlate1d(img.astype(np.float32) / 255.0, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def detect_and_describe(
    g: np.ndarray, max_points: int = DEFAULT_MAX_POINTS
) -> list[tuple[Keypoint, np.ndarray]]:
    """Interest points ordered by response, each with its 64-d descriptor."""
    img = np.asarray(g)
    if img.ndim != 2:
        raise ImageError(f"expected grayscale image, got shape {img.shape}")
    h, w = img.shape
    if h < 32 or w < 32:
        raise ImageError(f"image too small for detection: {w}x{h} (need >= 32x32)")

    s = _smooth(img)
    d2 = np.array([1.0, -2.0, 1.0], dtype=np.float32)
    d1 = np.array([0.5, 0.0, -0.5], dtype=np.float32)
    dxx = ndimage.correlate1d(s, d2, axis=1, mode="nearest")
    dyy = ndimage.correlate1d(s, d2, axis=0, mode="nearest")
    dx = ndimage.correlate1d(s, d1, axis=1, mode="nearest")
    dxy = ndimage.correlate1d(dx, d1, axis=0, mode="nearest")
    resp = np.abs(dxx * dyy - dxy * dxy).astype(np.float64)

    margin = DESCRIPTOR_PATCH // 2
    local_max = resp == ndimage.maximum_filter(resp, size=3, mode="constant")
    peaks = local_max & (resp > _RESPONSE_FLOOR)
    peaks[:margin, :] = peaks[-margin:, :] = False
    peaks[:, :margin] = peaks[:, -margin:] = False
    ys, xs = np.nonzero(peaks)
    if xs.size == 0:
        return []
    order = np.argsort(resp[ys, xs])[::-1]
    ys, xs = ys[order], xs[order]
    ys, xs = _stratified_cap(ys, xs, (h, w), max_points)

    descs = _describe(s, xs, ys)
    sub_x = xs + _subpixel_offset(resp[ys, xs - 1], resp[ys, xs], resp[ys, xs + 1])
    sub_y = ys + _subpixel_offset(resp[ys - 1, xs], resp[ys, xs], resp[ys + 1, xs])
    return [
        (Keypoint(float(px), float(py), float(resp[y, x])), d)
        for px, py, x, y, d in zip(sub_x, sub_y, xs, ys, descs)
    ]


def _subpixel_offset(left: np.ndarray, center: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Quadratic peak interpolation; matching needs better than the +-0.5 px
    the integer lattice gives (background jitter and target motion are only a
    few px apart)."""
    denom = left - 2.0 * center + right
    off = np.where(np.abs(denom) > 1e-12, 0.5 * (left - right) / np.where(denom == 0, 1, denom), 0.0)
    return np.clip(off, -0.5, 0.5)


def _stratified_cap(
    ys: np.ndarray, xs: np.ndarray, shape: tuple[int, int], max_points: int
) -> tuple[np.ndarray, np.ndarray]:
    """Cap keypoints per grid cell so one high-contrast object cannot hog the
    budget; candidates must arrive ordered by response.  Keeps response order.
    """
    h, w = shape
    cells_x = max(w // _STRATIFY_CELL, 1)
    cells_y = max(h // _STRATIFY_CELL, 1)
    cap = max(max_points // (cells_x * cells_y), 1)
    counts: dict[tuple[int, int], int] = {}
    keep_idx = []
    for i in range(len(xs)):
        cell = (min(int(xs[i]) * cells_x // w, cells_x - 1),
                min(int(ys[i]) * cells_y // h, cells_y - 1))
        c = counts.get(cell, 0)
        if c < cap:
            counts[cell] = c + 1
            keep_idx.append(i)
            if len(keep_idx) >= max_points:
                break
    keep = np.array(keep_idx, dtype=np.intp)
    return ys[keep], xs[keep]


def _describe(s: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    half = DESCRIPTOR_PATCH // 2
    off = np.arange(-half, half)
    rows = ys[:, None, None] + off[None, :, None]
    cols = xs[:, None, None] + off[None, None, :]
    patches = s[rows, cols]  # (n, 16, 16)
    cells = patches.reshape(-1, 8, 2, 8, 2).mean(axis=(2, 4)).reshape(-1, DESCRIPTOR_DIM)
    cells -= cells.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(cells, axis=1, keepdims=True)
    safe = norms > 1e-12
    return np.where(safe, cells / np.where(safe, norms, 1.0), 0.0)


def _best_two(d2: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per row of a squared-distance matrix: argmin, min, second-min (inf if none)."""
    n = d2.shape[1]
    best = np.argmin(d2, axis=1)
    bd = d2[np.arange(d2.shape[0]), best]
    if n < 2:
        return best, bd, np.full(d2.shape[0], np.inf)
    masked = d2.copy()
    masked[np.arange(d2.shape[0]), best] = np.inf
    sd = masked.min(axis=1)
    return best, bd, sd


def symmetric_knn_match(
    a: list[tuple[Keypoint, np.ndarray]],
    b: list[tuple[Keypoint, np.ndarray]],
    ratio: float = DEFAULT_KNN_RATIO,
) -> list[MatchPair]:
    """Mutual k=2 ratio-test matches from ``a`` (earlier frame) to ``b`` (later)."""
    if not a or not b:
        return []
    da = np.stack([d for _, d in a])
    db = np.stack([d for _, d in b])
    # squared L2 via the expansion; clip tiny negatives from cancellation
    d2 = np.clip(
        (da * da).sum(1)[:, None] + (db * db).sum(1)[None, :] - 2.0 * (da @ db.T), 0.0, None
    )

    fwd_best, fwd_d1, fwd_d2 = _best_two(d2)
    bwd_best, bwd_d1, bwd_d2 = _best_two(d2.T)

    def accepted(d1: np.ndarray, d2nd: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            ok = np.sqrt(d1) < ratio * np.sqrt(d2nd)
        ok |= np.isinf(d2nd)  # single candidate: nothing to be ambiguous with
        return ok

    fwd_ok = accepted(fwd_d1, fwd_d2)
    bwd_ok = accepted(bwd_d1, bwd_d2)

    pairs: list[MatchPair] = []
    for i in range(len(a)):
        j = fwd_best[i]
        if fwd_ok[i] and bwd_ok[j] and bwd_best[j] == i:
            ka, kb = a[i][0], b[j][0]
            pairs.append(
                MatchPair((ka.x, ka.y), (kb.x, kb.y), float(np.sqrt(d2[i, j])))
            )
    return pairs


def keypoints_to_csv(kps: list[tuple[Keypoint, np.ndarray]]) -> str:
    """Debug dump: one "x,y,response" line per keypoint."""
    lines = ["x,y,response"]
    lines += [f"{k.x:.2f},{k.y:.2f},{k.response:.6g}" for k, _ in kps]
    return "\n".join(lines) + "\n"
