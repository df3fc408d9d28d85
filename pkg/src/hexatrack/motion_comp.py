"""Background motion estimation and compensation.

Matched feature pairs contain both background points (moving only with the
camera) and foreground points (independently moving targets).  The filter
below alternates between fitting an affine motion model and discarding the
pairs whose residuals exceed a threshold derived from the current residual
statistics, until the partition stabilizes.  Whatever survives is treated as
background and defines the warp that aligns frame n with frame n-1.

Two robustness measures beyond plain fit-and-reject are needed because the
foreground can be a large coherent cluster (tracked people are ~20-40 % of
the matches and move together).  First, the rejection threshold is
median + c * 1.4826 * MAD instead of mean + c * std, so the cut tracks the
background mode instead of the blended distribution.  Second, a full affine
fit can absorb the foreground cluster (the 6-dof fit shears toward it and
the residual modes merge), so the first round also measures residuals
against the median motion vector, a majority vote that sits on the
background, and scores against whichever reference fits the majority more
tightly.  A final pass reclassifies every pair against the converged fit,
which restores pairs the first rounds rejected over-eagerly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .feature_match import MatchPair
from .imgproc import Frame

MIN_FILTER_PAIRS = 6
DEFAULT_REJECT_C = 2.0
MAX_FILTER_ITERATIONS = 10
_MAD_TO_SIGMA = 1.4826


class DegenerateInput(ValueError):
    """Too few or collinear points for an affine fit."""


class InsufficientData(ValueError):
    """Fewer pairs than the filter needs."""


class DegenerateFilter(RuntimeError):
    """Outlier rejection collapsed below the minimum viable inlier set."""


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix [a b tx; c d ty] mapping (x, y) -> (a x + b y + tx, c x + d y + ty)."""

    a: float = 1.0
    b: float = 0.0
    tx: float = 0.0
    c: float = 0.0
    d: float = 1.0
    ty: float = 0.0

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls()

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(tx=tx, ty=ty)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b, self.tx], [self.c, self.d, self.ty]])

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Transform (n, 2) points."""
        p = np.asarray(pts, dtype=np.float64)
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty])

    def translation_part(self) -> tuple[float, float]:
        return (self.tx, self.ty)


@dataclass
class FilterResult:
    inliers: list[MatchPair]
    outliers: list[MatchPair]
    transform: AffineTransform
    iterations: int


def _pair_arrays(pairs: list[MatchPair]) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([p.prev_pt for p in pairs], dtype=np.float64)
    dst = np.array([p.curr_pt for p in pairs], dtype=np.float64)
    return src, dst


def fit_affine_lsq(pairs: list[MatchPair]) -> AffineTransform:
    """Least-squares affine minimizing sum ||T(prev) - curr||^2; exact on consistent input."""
    if len(pairs) < 3:
        raise DegenerateInput(f"need >= 3 pairs, got {len(pairs)}")
    src, dst = _pair_arrays(pairs)
    return _fit_affine(src, dst)


def _fit_affine(src: np.ndarray, dst: np.ndarray) -> AffineTransform:
    design = np.column_stack([src, np.ones(len(src))])
    if np.linalg.matrix_rank(design) < 3:
        raise DegenerateInput("source points are collinear")
    sol, *_ = np.linalg.lstsq(design, dst, rcond=None)
    (a, c), (b, d), (tx, ty) = sol
    return AffineTransform(a=a, b=b, tx=tx, c=c, d=d, ty=ty)


def _residuals(t: AffineTransform, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    return np.linalg.norm(t.apply(src) - dst, axis=1)


def _reject_threshold(res: np.ndarray, c: float, scheme: str, floor: float) -> float:
    if scheme == "median_mad":
        med = float(np.median(res))
        mad = float(np.median(np.abs(res - med)))
        return max(med + c * _MAD_TO_SIGMA * mad, floor)
    if scheme == "mean_std":
        return max(float(res.mean() + c * res.std()), floor)
    raise ValueError(f"unknown threshold scheme {scheme!r}")


def adaptive_outlier_filter(
    pairs: list[MatchPair],
    c: float = DEFAULT_REJECT_C,
    max_iterations: int = MAX_FILTER_ITERATIONS,
    scheme: str = "median_mad",
    floor: float = 0.35,
) -> FilterResult:
    """Partition matches into background inliers and foreground outliers.

    Repeats fit / threshold / drop until no pair is dropped or the iteration
    cap is reached; raises if fewer than six inliers remain at any point.
    ``floor`` is the smallest residual (px) ever treated as an outlier.
    """
    if len(pairs) < MIN_FILTER_PAIRS:
        raise InsufficientData(f"need >= {MIN_FILTER_PAIRS} pairs, got {len(pairs)}")
    src, dst = _pair_arrays(pairs)
    keep = np.ones(len(pairs), dtype=bool)
    iterations = 0
    while iterations < max_iterations:
        iterations += 1
        try:
            t = _fit_affine(src[keep], dst[keep])
        except DegenerateInput as e:
            raise DegenerateFilter(f"inlier set became degenerate: {e}") from e
        res = _residuals(t, src[keep], dst[keep])
        if iterations == 1:
            # A 6-dof fit over background + a coherent foreground cluster can
            # shear toward the cluster and blend the residual modes.  The
            # median motion vector is a majority vote immune to that; take
            # whichever reference explains the majority more tightly.
            ref = AffineTransform.translation(*np.median(dst[keep] - src[keep], axis=0))
            res_ref = _residuals(ref, src[keep], dst[keep])
            if np.median(res_ref) < np.median(res):
                res = res_ref
        thresh = _reject_threshold(res, c, scheme, floor)
        drop = res > thresh
        if not drop.any():
            break
        idx = np.nonzero(keep)[0][drop]
        keep[idx] = False
        if keep.sum() < MIN_FILTER_PAIRS:
            raise DegenerateFilter(
                f"inliers collapsed to {int(keep.sum())} (< {MIN_FILTER_PAIRS})"
            )
    # reclassify everything against the converged fit: pairs consistent with
    # the background motion return to the inlier set
    t = _fit_affine(src[keep], dst[keep])
    final_thresh = _reject_threshold(_residuals(t, src[keep], dst[keep]), c, scheme, floor)
    keep = _residuals(t, src, dst) <= final_thresh
    if keep.sum() < MIN_FILTER_PAIRS:
        raise DegenerateFilter(f"inliers collapsed to {int(keep.sum())} (< {MIN_FILTER_PAIRS})")
    t = _fit_affine(src[keep], dst[keep])
    inliers = [p for p, k in zip(pairs, keep) if k]
    outliers = [p for p, k in zip(pairs, keep) if not k]
    return FilterResult(inliers=inliers, outliers=outliers, transform=t, iterations=iterations)


def warp_affine(f: Frame | np.ndarray, t: AffineTransform):
    """Resample ``f`` so that output(x, y) = f(T(x, y)), bilinear, 0 outside.

    With T fitted from frame n-1 to frame n, warping frame n expresses it in
    frame n-1 coordinates.
    """
    if abs(t.det) <= 1e-6:
        raise DegenerateInput(f"transform is singular (det={t.det:.2e})")
    arr = f.pixels if isinstance(f, Frame) else np.asarray(f)
    # arrays are indexed [row, col] = [y, x], so the sampling matrix swaps axes
    matrix = np.array([[t.d, t.c], [t.b, t.a]])
    offset = (t.ty, t.tx)

    def warp_plane(plane: np.ndarray) -> np.ndarray:
        out = ndimage.affine_transform(
            plane.astype(np.float32), matrix, offset=offset, order=1, cval=0.0
        )
        return np.clip(np.rint(out), 0, 255).astype(arr.dtype)

    if arr.ndim == 2:
        out = warp_plane(arr)
    else:
        out = np.stack([warp_plane(arr[..., i]) for i in range(arr.shape[2])], axis=2)
    if isinstance(f, Frame):
        return Frame(out, index=f.index)
    return out


def warp_valid_mask(shape: tuple[int, int], t: AffineTransform) -> np.ndarray:
    """Boolean mask of output pixels whose source coordinates fall inside the image."""
    h, w = shape
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    sx = t.a * xs + t.b * ys + t.tx
    sy = t.c * xs + t.d * ys + t.ty
    return (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
