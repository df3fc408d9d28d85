"""Moving-target regions from compensated frame differences.

A non-rigid mover (a walking person, say) fragments into several foreground
blobs because its parts move differently.  Two merge passes reassemble them:

  1. within one frame, blobs whose centroids are close (< th1) and whose
     colors are close in HSV (< th2) become one region;
  2. across consecutive frames, regions are paired by centroid/color
     proximity (th3, th4); each pair carries a motion vector, and pairs that
     are close in the current frame (< th5) with consistent motion (< th6)
     are merged.

The motion-consistency score between two equivalence pairs is the Euclidean
distance between their motion vectors.  Color distances are squared
Euclidean over HSV triples on the [0, 255] scale, which is the scale the
default thresholds (th2=3000, th4=8000) assume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import feature_match, motion_comp
from .imgproc import (
    Frame,
    HsvColor,
    abs_diff_threshold,
    connected_components,
    gaussian_blur,
    morph_open_3x3,
    rgb_to_hsv,
    to_grayscale,
)


@dataclass(frozen=True)
class MergeParams:
    """Merge thresholds; distances in px, color distances squared on [0,255] HSV."""

    th1: float = 30.0
    th2: float = 3000.0
    th3: float = 30.0
    th4: float = 8000.0
    th5: float = 50.0
    th6: float = 30.0

    def __post_init__(self) -> None:
        for name in ("th1", "th2", "th3", "th4", "th5", "th6"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(eq=False)
class Region:
    """Connected foreground blob with its appearance and geometry summary."""

    pixels: np.ndarray  # (n, 2) int, columns (x, y)
    bbox: tuple[int, int, int, int]  # x, y, w, h
    centroid: tuple[float, float]
    mean_rgb: tuple[float, float, float]
    mean_hsv: HsvColor
    area: int
    motion: tuple[float, float] | None = None  # set once the region is paired


@dataclass(frozen=True)
class EquivalencePair:
    """A current-frame region matched to a previous-frame region."""

    curr: Region
    prev: Region
    motion: tuple[float, float]  # curr centroid - prev centroid


def _region_from(pixels: np.ndarray, mean_rgb: tuple[float, float, float]) -> Region:
    xs, ys = pixels[:, 0], pixels[:, 1]
    x0, y0 = int(xs.min()), int(ys.min())
    return Region(
        pixels=pixels,
        bbox=(x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1),
        centroid=(float(xs.mean()), float(ys.mean())),
        mean_rgb=mean_rgb,
        mean_hsv=rgb_to_hsv(mean_rgb),
        area=len(pixels),
    )


def extract_regions(
    b: np.ndarray, src: Frame | np.ndarray, min_area: int = 40
) -> list[Region]:
    """Connected components of the mask with centroid and mean color from ``src``."""
    rgb = src.pixels if isinstance(src, Frame) else np.asarray(src)
    mask = np.asarray(b)
    if rgb.shape[:2] != mask.shape:
        raise ValueError(f"dimension mismatch: mask {mask.shape} vs source {rgb.shape[:2]}")
    regions = []
    for comp in connected_components(mask):
        if len(comp) < min_area:
            continue
        colors = rgb[comp[:, 1], comp[:, 0]].astype(np.float64)
        regions.append(_region_from(comp, tuple(colors.mean(axis=0))))
    return regions


def extract_regions_transformed(
    b: np.ndarray,
    src_rgb: np.ndarray,
    t: motion_comp.AffineTransform,
    min_area: int = 40,
) -> list[Region]:
    """Like :func:`extract_regions`, but the mask lives in warped (reference)
    coordinates while colors are sampled from the unwarped source through the
    transform; avoids warping all color channels full-frame."""
    from scipy import ndimage

    mask = np.asarray(b)
    if src_rgb.shape[:2] != mask.shape:
        raise ValueError(f"dimension mismatch: mask {mask.shape} vs source {src_rgb.shape[:2]}")
    regions = []
    for comp in connected_components(mask):
        if len(comp) < min_area:
            continue
        pts = t.apply(comp.astype(np.float64))
        coords = [pts[:, 1], pts[:, 0]]
        colors = [
            ndimage.map_coordinates(src_rgb[..., ch].astype(np.float32), coords, order=1, mode="nearest")
            for ch in range(3)
        ]
        mean_rgb = tuple(float(c.mean()) for c in colors)
        regions.append(_region_from(comp, mean_rgb))
    return regions


def hsv_distance2(a: HsvColor, b: HsvColor) -> float:
    """Squared Euclidean distance between HSV triples on the [0, 255] scale."""
    return (a.h - b.h) ** 2 + (a.s - b.s) ** 2 + (a.v - b.v) ** 2


def _centroid_dist(a: Region, b: Region) -> float:
    return math.hypot(a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1])


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _merge_region_group(group: list[Region]) -> Region:
    if len(group) == 1:
        return group[0]
    pixels = np.vstack([r.pixels for r in group])
    total = sum(r.area for r in group)
    mean_rgb = tuple(
        sum(r.mean_rgb[i] * r.area for r in group) / total for i in range(3)
    )
    return _region_from(pixels, mean_rgb)


def _merge_groups(items: list[Region], uf: _UnionFind) -> list[Region]:
    groups: dict[int, list[Region]] = {}
    for i, r in enumerate(items):
        groups.setdefault(uf.find(i), []).append(r)
    # roots are minima of their groups, so ordering by root preserves input order
    return [_merge_region_group(groups[k]) for k in sorted(groups)]


def merge_intra_frame(regions: list[Region], p: MergeParams) -> list[Region]:
    """Union close, similarly-colored regions of one frame (transitively)."""
    uf = _UnionFind(len(regions))
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            if (
                _centroid_dist(regions[i], regions[j]) < p.th1
                and hsv_distance2(regions[i].mean_hsv, regions[j].mean_hsv) < p.th2
            ):
                uf.union(i, j)
    return _merge_groups(regions, uf)


def pair_inter_frame(
    regs_n: list[Region], regs_prev: list[Region], p: MergeParams
) -> list[EquivalencePair]:
    """Greedy one-to-one assignment of current to previous regions by distance."""
    candidates = []
    for i, rn in enumerate(regs_n):
        for j, rp in enumerate(regs_prev):
            d = _centroid_dist(rn, rp)
            if d < p.th3 and hsv_distance2(rn.mean_hsv, rp.mean_hsv) < p.th4:
                candidates.append((d, i, j))
    candidates.sort(key=lambda c: c[0])
    used_n: set[int] = set()
    used_p: set[int] = set()
    pairs = []
    for _, i, j in candidates:
        if i in used_n or j in used_p:
            continue
        used_n.add(i)
        used_p.add(j)
        rn, rp = regs_n[i], regs_prev[j]
        pairs.append(
            EquivalencePair(
                curr=rn,
                prev=rp,
                motion=(rn.centroid[0] - rp.centroid[0], rn.centroid[1] - rp.centroid[1]),
            )
        )
    return pairs


def motion_consistency(pi: EquivalencePair, pj: EquivalencePair) -> float:
    """Euclidean distance between the two pairs' motion vectors."""
    return math.hypot(pi.motion[0] - pj.motion[0], pi.motion[1] - pj.motion[1])


def merge_by_motion(
    pairs: list[EquivalencePair],
    p: MergeParams,
    unpaired: list[Region] = (),
) -> list[Region]:
    """Merge current-frame regions of pairs that are close and move together.

    Regions without an inter-frame pair pass through unmerged.
    """
    uf = _UnionFind(len(pairs))
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            if (
                _centroid_dist(pairs[i].curr, pairs[j].curr) < p.th5
                and motion_consistency(pairs[i], pairs[j]) < p.th6
            ):
                uf.union(i, j)
    groups: dict[int, list[EquivalencePair]] = {}
    for i, pr in enumerate(pairs):
        groups.setdefault(uf.find(i), []).append(pr)
    merged = []
    for k in sorted(groups):
        group = groups[k]
        region = _merge_region_group([pr.curr for pr in group])
        total = sum(pr.curr.area for pr in group)
        region.motion = (
            sum(pr.motion[0] * pr.curr.area for pr in group) / total,
            sum(pr.motion[1] * pr.curr.area for pr in group) / total,
        )
        merged.append(region)
    return merged + list(unpaired)


# --- full per-frame pipeline ---------------------------------------------------


@dataclass(frozen=True)
class PipelineParams:
    blur_sigma: float = 1.0
    diff_threshold: float = 30.0
    min_area: int = 40
    max_points: int = feature_match.DEFAULT_MAX_POINTS
    knn_ratio: float = feature_match.DEFAULT_KNN_RATIO
    merging: bool = True


@dataclass
class DetectionResult:
    """Regions are in the coordinates of the earlier (reference) frame."""

    regions: list[Region]
    compensated: bool
    transform: motion_comp.AffineTransform
    pairs: list[EquivalencePair] = field(default_factory=list)
    match_count: int = 0
    inlier_count: int = 0


class MotionDetector:
    """Stateful detection pipeline; drive one instance per frame stream.

    Keeps the previous step's regions so inter-frame pairing and the motion
    merge can run; the memory resets whenever compensation falls back to the
    identity warp, because motion vectors across an uncompensated step are
    meaningless.
    """

    def __init__(self, merge_params: MergeParams | None = None, params: PipelineParams | None = None):
        self.merge_params = merge_params or MergeParams()
        self.params = params or PipelineParams()
        self._prev_regions: list[Region] = []
        self._kp_cache_frame: Frame | None = None
        self._kp_cache: list | None = None
        self._gray_cache: np.ndarray | None = None

    def reset(self) -> None:
        self._prev_regions = []

    def _gray_and_keypoints(self, frame: Frame):
        if frame is self._kp_cache_frame:
            return self._gray_cache, self._kp_cache
        gray = to_grayscale(frame)
        kps = feature_match.detect_and_describe(gray, self.params.max_points)
        return gray, kps

    def detect_step(self, prev: Frame, curr: Frame) -> DetectionResult:
        if prev.pixels.shape != curr.pixels.shape:
            raise ValueError("frame dimensions differ")
        cfg = self.params
        # in streaming use `prev` is the last step's `curr`: reuse its features
        gray_prev, kp_prev = self._gray_and_keypoints(prev)
        gray_curr, kp_curr = self._gray_and_keypoints(curr)
        self._kp_cache_frame, self._gray_cache, self._kp_cache = curr, gray_curr, kp_curr
        matches = feature_match.symmetric_knn_match(kp_prev, kp_curr, cfg.knn_ratio)

        compensated = True
        transform = motion_comp.AffineTransform.identity()
        inliers = 0
        try:
            filt = motion_comp.adaptive_outlier_filter(matches)
            transform = filt.transform
            inliers = len(filt.inliers)
        except (motion_comp.InsufficientData, motion_comp.DegenerateFilter):
            compensated = False
            self.reset()

        if compensated:
            warped_gray = motion_comp.warp_affine(gray_curr, transform)
            valid = motion_comp.warp_valid_mask(gray_curr.shape, transform)
        else:
            warped_gray = gray_curr
            valid = None

        diff = abs_diff_threshold(
            gaussian_blur(gray_prev, cfg.blur_sigma),
            gaussian_blur(warped_gray, cfg.blur_sigma),
            cfg.diff_threshold,
        )
        if valid is not None:
            diff[~valid] = 0
        mask = morph_open_3x3(diff)
        # region colors come from the current frame sampled through the
        # transform; cheaper than warping all three channels full-frame
        regions = extract_regions_transformed(mask, curr.pixels, transform, cfg.min_area)

        pairs: list[EquivalencePair] = []
        if cfg.merging:
            regions = merge_intra_frame(regions, self.merge_params)
            pairs = pair_inter_frame(regions, self._prev_regions, self.merge_params)
            paired = {id(pr.curr) for pr in pairs}
            unpaired = [r for r in regions if id(r) not in paired]
            regions = merge_by_motion(pairs, self.merge_params, unpaired)

        self._prev_regions = regions
        return DetectionResult(
            regions=regions,
            compensated=compensated,
            transform=transform,
            pairs=pairs,
            match_count=len(matches),
            inlier_count=inliers,
        )


def detect_step(
    prev: Frame,
    curr: Frame,
    p: MergeParams | None = None,
    cfg: PipelineParams | None = None,
) -> DetectionResult:
    """Single-shot detection without inter-frame memory (first step of a stream)."""
    return MotionDetector(p, cfg).detect_step(prev, curr)
