"""Synthetic world generator with ground truth.

The world is a large wrapping noise texture ("mural") sampled by a moving
view window, which stands in for the robot camera:

  - heading theta pans the view horizontally by ``focal_px * theta`` pixels
    (for the small per-frame angles in scope this equals focal*tan(theta));
  - the body's world x coordinate pans horizontally by ``px_per_unit`` px per
    unit (depth motion along y has no image effect: the backdrop is distant);
  - gimbal pitch pans vertically by ``focal_px * pitch`` (positive = down);
  - camera shake adds a per-frame uniform translation within the jitter
    amplitude, plus an optional small rotation.

Targets live at world-plane pixel positions given by their trajectories and
are drawn over the background in list order.  Each target is a set of parts
(rectangles or ellipses) with an optional per-part random wobble, so merging
of fragmented non-rigid movers can be exercised.  Per-part static texture is
modulated onto the fill color; without it a flat-colored moving part would
only light up its leading and trailing edges under frame differencing.

Rendering is a pure function of (config, pose, gimbal, frame index): all
randomness is derived from the scene seed and the frame number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .gait import BodyPose
from .imgproc import Frame, hsv_to_rgb

Trajectory = Callable[[int], tuple[float, float]]


@dataclass
class PartSpec:
    """One rigid piece of a target."""

    shape: str = "rect"  # "rect" | "ellipse"
    offset: tuple[float, float] = (0.0, 0.0)
    size: tuple[float, float] = (30.0, 30.0)
    hsv: tuple[float, float, float] = (90.0, 200.0, 200.0)


@dataclass
class TargetSpec:
    target_id: str = "t0"
    parts: list[PartSpec] = field(default_factory=lambda: [PartSpec()])
    trajectory: dict | Trajectory = field(
        default_factory=lambda: {"kind": "static", "pos": [512.0, 384.0]}
    )
    rigidity: float = 0.0  # per-part wobble amplitude, px
    texture_amp: float = 90.0  # luma modulation amplitude of the part fill


@dataclass
class SceneConfig:
    width: int = 640
    height: int = 480
    focal_px: float = 500.0
    px_per_unit: float = 100.0
    jitter_amp: float = 0.0
    rot_jitter_amp: float = 0.0  # radians; 0 disables rotational shake
    seed: int = 0
    texture_octaves: int = 4
    texture_contrast: float = 40.0
    targets: list[TargetSpec] = field(default_factory=list)


@dataclass
class TargetTruth:
    target_id: str
    box: tuple[int, int, int, int]  # x, y, w, h in image coordinates
    visible: bool


@dataclass
class GroundTruthEntry:
    frame: int
    view: tuple[float, float]  # texture coordinates at image center
    targets: list[TargetTruth]


def trajectory_position(t: dict | Trajectory, n: int) -> tuple[float, float]:
    """World-plane pixel position of a target at frame ``n``."""
    if callable(t):
        x, y = t(n)
        return float(x), float(y)
    kind = t.get("kind", "static")
    if kind == "static":
        x, y = t["pos"]
        return float(x), float(y)
    if kind == "linear":
        (x0, y0), (vx, vy) = t["start"], t["vel"]
        return float(x0) + n * float(vx), float(y0) + n * float(vy)
    if kind == "piecewise":
        # segments: [{"until": n_end, "vel": [vx, vy]}, ...]; last segment open-ended
        x, y = (float(v) for v in t["start"])
        prev = 0
        for seg in t["segments"]:
            until = int(seg.get("until", n))
            steps = min(n, until) - prev
            if steps <= 0:
                break
            vx, vy = seg["vel"]
            x += steps * float(vx)
            y += steps * float(vy)
            prev = until
        return x, y
    raise ValueError(f"unknown trajectory kind {kind!r}")


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, *(k & 0xFFFFFFFF for k in keys)])


_TEX_SIZE = 1024


def background_texture(cfg: SceneConfig) -> np.ndarray:
    """Seeded multi-octave value noise, (size, size) uint8, mean ~128.

    Octaves are upsampled with wrapping bilinear interpolation so the texture
    tiles seamlessly (the view window wraps around it).
    """
    rng = _rng(cfg.seed, 1)
    acc = np.zeros((_TEX_SIZE, _TEX_SIZE), dtype=np.float64)
    coords1d = np.arange(_TEX_SIZE, dtype=np.float64)
    amp_total = 0.0
    for octave in range(cfg.texture_octaves):
        cells = 8 * (2**octave)
        amp = 1.0 / (1.4**octave)
        grid = rng.standard_normal((cells, cells))
        c = coords1d * (cells / _TEX_SIZE)
        rr, cc = np.meshgrid(c, c, indexing="ij")
        acc += amp * ndimage.map_coordinates(grid, [rr, cc], order=1, mode="grid-wrap")
        amp_total += amp
    acc /= amp_total
    std = acc.std() or 1.0
    tex = 128.0 + acc * (cfg.texture_contrast / std)
    return np.clip(tex, 0, 255).astype(np.uint8)


class SceneRenderer:
    """Caches the background texture and per-part fill patterns for a config."""

    def __init__(self, cfg: SceneConfig):
        self.cfg = cfg
        self.texture = background_texture(cfg).astype(np.float64)
        self._part_noise: dict[tuple[int, int], np.ndarray] = {}

    def _part_pattern(self, ti: int, pi: int, h: int, w: int) -> np.ndarray:
        # band-limited noise with 4-8 px features: a few px of motion
        # decorrelates it into spatially coherent difference blobs (frame
        # differencing must see the interior move, not only the silhouette,
        # and isolated exceedances would not survive the 3x3 opening)
        key = (ti, pi)
        pat = self._part_noise.get(key)
        if pat is None or pat.shape[0] < h or pat.shape[1] < w:
            rng = _rng(self.cfg.seed, 2, ti, pi)
            side = max(h, w, 64)
            raw = rng.standard_normal((side, side))
            pat = ndimage.gaussian_filter(raw, 2.0, mode="wrap")
            # tanh keeps the swing bounded (bright fills must not clip, or the
            # channel ratios bend and fragment colors destabilize) without the
            # flat plateaus a hard clip would leave, which difference to zero
            # under motion
            pat = np.tanh(pat / (pat.std() or 1.0))
            self._part_noise[key] = pat
        return pat[:h, :w]

    def view_center(self, pose: BodyPose, gimbal_pitch: float, n: int) -> tuple[float, float]:
        cfg = self.cfg
        jx = jy = 0.0
        if cfg.jitter_amp > 0:
            rng = _rng(cfg.seed, 3, n)
            jx, jy = rng.uniform(-cfg.jitter_amp, cfg.jitter_amp, size=2)
        vu = cfg.focal_px * pose.theta + cfg.px_per_unit * pose.x + jx
        vv = cfg.focal_px * gimbal_pitch + jy
        return vu, vv

    def render_frame(
        self, pose: BodyPose, gimbal_pitch: float, n: int
    ) -> tuple[Frame, GroundTruthEntry]:
        cfg = self.cfg
        w, h = cfg.width, cfg.height
        vu, vv = self.view_center(pose, gimbal_pitch, n)

        cols = np.arange(w, dtype=np.float64) - w / 2.0 + vu
        rows = np.arange(h, dtype=np.float64) - h / 2.0 + vv
        cc, rr = np.meshgrid(cols, rows)
        if cfg.rot_jitter_amp > 0:
            ang = float(_rng(cfg.seed, 4, n).uniform(-cfg.rot_jitter_amp, cfg.rot_jitter_amp))
            ca, sa = np.cos(ang), np.sin(ang)
            cu, cv = vu, vv
            du, dv = cc - cu, rr - cv
            cc = cu + ca * du - sa * dv
            rr = cv + sa * du + ca * dv
        bg = ndimage.map_coordinates(self.texture, [rr, cc], order=1, mode="grid-wrap")
        img = np.repeat(bg[:, :, None], 3, axis=2)

        truths: list[TargetTruth] = []
        for ti, tgt in enumerate(cfg.targets):
            tu, tv = trajectory_position(tgt.trajectory, n)
            boxes: list[tuple[float, float, float, float]] = []
            for pi, part in enumerate(tgt.parts):
                px = tu + part.offset[0] - vu + w / 2.0
                py = tv + part.offset[1] - vv + h / 2.0
                if tgt.rigidity > 0:
                    wob = _rng(cfg.seed, 5, ti, pi, n).uniform(-tgt.rigidity, tgt.rigidity, 2)
                    px += wob[0]
                    py += wob[1]
                pw, ph = part.size
                self._draw_part(img, ti, pi, part, px, py)
                boxes.append((px - pw / 2.0, py - ph / 2.0, pw, ph))
            truths.append(self._truth_box(tgt.target_id, boxes, w, h))

        frame = Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8), index=n)
        return frame, GroundTruthEntry(frame=n, view=(vu, vv), targets=truths)

    def _draw_part(
        self, img: np.ndarray, ti: int, pi: int, part: PartSpec, px: float, py: float
    ) -> None:
        h_img, w_img = img.shape[:2]
        pw, ph = part.size
        x0, x1 = int(np.floor(px - pw / 2.0)), int(np.ceil(px + pw / 2.0))
        y0, y1 = int(np.floor(py - ph / 2.0)), int(np.ceil(py + ph / 2.0))
        cx0, cx1 = max(x0, 0), min(x1, w_img)
        cy0, cy1 = max(y0, 0), min(y1, h_img)
        if cx0 >= cx1 or cy0 >= cy1:
            return
        ys, xs = np.mgrid[cy0:cy1, cx0:cx1]
        if part.shape == "ellipse":
            mask = ((xs + 0.5 - px) / (pw / 2.0)) ** 2 + ((ys + 0.5 - py) / (ph / 2.0)) ** 2 <= 1.0
        else:
            mask = np.ones(xs.shape, dtype=bool)
        if not mask.any():
            return
        rgb = np.array(hsv_to_rgb(part.hsv), dtype=np.float64)
        tile = np.empty((*xs.shape, 3), dtype=np.float64)
        tile[:] = rgb
        tgt = self.cfg.targets[ti]
        if tgt.texture_amp > 0:
            pat = self._part_pattern(ti, pi, y1 - y0, x1 - x0)
            pat = pat[cy0 - y0 : cy1 - y0, cx0 - x0 : cx1 - x0]
            # multiplicative shading: channel ratios (hue/saturation) stay
            # fixed while the luma swings ~texture_amp, so merge gates that
            # compare region colors stay meaningful on the fragments
            luma = max(rgb @ np.array([0.299, 0.587, 0.114]), 1.0)
            tile *= 1.0 + (tgt.texture_amp / luma) * pat[:, :, None]
        region = img[cy0:cy1, cx0:cx1]
        region[mask] = np.clip(tile[mask], 0, 255)

    @staticmethod
    def _truth_box(
        target_id: str, boxes: Sequence[tuple[float, float, float, float]], w: int, h: int
    ) -> TargetTruth:
        xs0 = min(b[0] for b in boxes)
        ys0 = min(b[1] for b in boxes)
        xs1 = max(b[0] + b[2] for b in boxes)
        ys1 = max(b[1] + b[3] for b in boxes)
        cx0, cy0 = max(xs0, 0.0), max(ys0, 0.0)
        cx1, cy1 = min(xs1, float(w)), min(ys1, float(h))
        if cx0 >= cx1 or cy0 >= cy1:
            return TargetTruth(target_id, (0, 0, 0, 0), visible=False)
        return TargetTruth(
            target_id,
            (int(round(cx0)), int(round(cy0)), int(round(cx1 - cx0)), int(round(cy1 - cy0))),
            visible=True,
        )


def render_frame(
    cfg: SceneConfig, pose: BodyPose, gimbal_pitch: float, n: int
) -> tuple[Frame, GroundTruthEntry]:
    """One-shot render; prefer :class:`SceneRenderer` for sequences."""
    if n < 0:
        raise ValueError("frame index must be >= 0")
    return SceneRenderer(cfg).render_frame(pose, gimbal_pitch, n)


def generate_sequence(
    cfg: SceneConfig,
    poses: Sequence[BodyPose],
    n_frames: int,
    gimbal_pitches: Sequence[float] | None = None,
) -> tuple[list[Frame], list[GroundTruthEntry]]:
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if len(poses) != n_frames:
        raise ValueError(f"poses length {len(poses)} != frame count {n_frames}")
    if gimbal_pitches is None:
        gimbal_pitches = [0.0] * n_frames
    r = SceneRenderer(cfg)
    frames: list[Frame] = []
    truth: list[GroundTruthEntry] = []
    for i in range(n_frames):
        f, g = r.render_frame(poses[i], gimbal_pitches[i], i)
        frames.append(f)
        truth.append(g)
    return frames, truth


# --- presets and serialization -------------------------------------------------


def preset_config(name: str, seed: int = 0) -> SceneConfig:
    """Built-in scenes: 'simple' (smooth backdrop, one mover) and 'complex'
    (feature-dense backdrop, two movers plus a static figure, camera shake)."""
    if name == "simple":
        return SceneConfig(
            seed=seed,
            jitter_amp=1.0,
            texture_octaves=4,
            texture_contrast=21.0,
            targets=[
                TargetSpec(
                    target_id="walker",
                    parts=[PartSpec("ellipse", (0.0, 0.0), (30.0, 70.0), (60.0, 90.0, 150.0))],
                    trajectory={"kind": "linear", "start": [-140.0, 0.0], "vel": [3.0, 0.0]},
                )
            ],
        )
    if name == "complex":
        return SceneConfig(
            seed=seed,
            jitter_amp=3.0,
            texture_octaves=5,
            texture_contrast=42.0,
            targets=[
                TargetSpec(
                    target_id="walker_a",
                    parts=[
                        PartSpec("rect", (0.0, -20.0), (26.0, 34.0), (45.0, 100.0, 160.0)),
                        PartSpec("rect", (0.0, 18.0), (30.0, 30.0), (45.0, 100.0, 160.0)),
                    ],
                    trajectory={"kind": "linear", "start": [-80.0, -30.0], "vel": [4.0, 0.0]},
                    rigidity=2.0,
                ),
                TargetSpec(
                    target_id="walker_b",
                    parts=[
                        PartSpec("ellipse", (0.0, -18.0), (28.0, 30.0), (90.0, 100.0, 160.0)),
                        PartSpec("rect", (0.0, 16.0), (32.0, 34.0), (90.0, 100.0, 160.0)),
                    ],
                    trajectory={"kind": "linear", "start": [120.0, 40.0], "vel": [-3.0, 0.0]},
                    rigidity=2.0,
                ),
                TargetSpec(
                    target_id="seated",
                    parts=[PartSpec("rect", (0.0, 0.0), (34.0, 50.0), (60.0, 90.0, 150.0))],
                    trajectory={"kind": "static", "pos": [0.0, 150.0]},
                ),
            ],
        )
    raise ValueError(f"unknown preset {name!r}")


def config_to_json(cfg: SceneConfig) -> str:
    for t in cfg.targets:
        if callable(t.trajectory):
            raise ValueError(f"target {t.target_id}: callable trajectories are not serializable")
    return json.dumps(asdict(cfg), indent=2)


def config_from_json(text: str) -> SceneConfig:
    raw = json.loads(text)
    targets = []
    for t in raw.pop("targets", []):
        parts = [
            PartSpec(p["shape"], tuple(p["offset"]), tuple(p["size"]), tuple(p["hsv"]))
            for p in t.pop("parts")
        ]
        targets.append(TargetSpec(parts=parts, **t))
    return SceneConfig(targets=targets, **raw)


def save_config(cfg: SceneConfig, path: str | Path) -> None:
    Path(path).write_text(config_to_json(cfg))


def load_config(path: str | Path) -> SceneConfig:
    return config_from_json(Path(path).read_text())


def export_sequence(
    cfg: SceneConfig,
    n_frames: int,
    out_dir: str | Path,
    fmt: str = "png",
    poses: Sequence[BodyPose] | None = None,
) -> list[Path]:
    """Render and write numbered frames plus a ground-truth CSV.

    Produces ``frame_0000.<fmt>`` ... and ``ground_truth.csv`` with columns
    frame, target_id, x, y, w, h, visible.
    """
    from .imgproc import write_image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if poses is None:
        poses = [BodyPose()] * n_frames
    frames, truth = generate_sequence(cfg, poses, n_frames)
    paths = []
    for f in frames:
        p = out / f"frame_{f.index:04d}.{fmt}"
        write_image(p, f)
        paths.append(p)
    lines = ["frame,target_id,x,y,w,h,visible"]
    for e in truth:
        for t in e.targets:
            lines.append(f"{e.frame},{t.target_id},{t.box[0]},{t.box[1]},{t.box[2]},{t.box[3]},{int(t.visible)}")
    (out / "ground_truth.csv").write_text("\n".join(lines) + "\n")
    return paths
