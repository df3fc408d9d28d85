import numpy as np
import pytest

from hexatrack import scene_sim
from hexatrack.gait import BodyPose


def iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    x0, y0 = max(ax, bx), max(ay, by)
    x1, y1 = min(ax + aw, bx + bw), min(ay + ah, by + bh)
    inter = max(0.0, x1 - x0) * max(0.0, y1 - y0)
    return inter / (aw * ah + bw * bh - inter) if inter > 0 else 0.0


def region_on_target(region, truth_box) -> bool:
    """A detection counts if it overlaps the truth box or its centroid lands inside."""
    if iou(region.bbox, truth_box) >= 0.25:
        return True
    cx, cy = region.centroid
    x, y, w, h = truth_box
    return x <= cx <= x + w and y <= cy <= y + h


def render_static_sequence(cfg: scene_sim.SceneConfig, n: int):
    """Frames + truth for a stationary robot."""
    r = scene_sim.SceneRenderer(cfg)
    frames, truths = [], []
    for i in range(n):
        f, t = r.render_frame(BodyPose(), 0.0, i)
        frames.append(f)
        truths.append(t)
    return frames, truths


@pytest.fixture(scope="session")
def simple_scene_frames():
    return render_static_sequence(scene_sim.preset_config("simple"), 12)
