"""Delimited outputs and rendered figures for the CLI report paths.

Every run writes plain CSV next to PNG charts rendered with matplotlib's Agg
backend, so reports work headless.  CSV content is deterministic for fixed
seeds; wall-clock timings stay out of the CSVs and live in the run report.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .gait import GaitState, stance_bitmask
from .imgproc import Frame, write_image
from .region_detect import Region
from .scene_sim import GroundTruthEntry


@dataclass
class RunReport:
    """What a CLI run produced and how long the stages took."""

    frames: int = 0
    timings_ms: dict[str, float] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)

    def fps(self, stage: str = "total") -> float:
        ms = self.timings_ms.get(stage, 0.0)
        return self.frames / (ms / 1000.0) if ms > 0 else 0.0

    def save(self, path: str | Path) -> None:
        payload = {
            "frames": self.frames,
            "timings_ms": self.timings_ms,
            "fps": {k: self.frames / (v / 1000.0) for k, v in self.timings_ms.items() if v > 0},
            "metrics": self.metrics,
            "outputs": self.outputs,
        }
        Path(path).write_text(json.dumps(payload, indent=2))


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def region_rows(frame_idx: int, regions: list[Region]) -> list[list]:
    rows = []
    for rid, r in enumerate(regions):
        x, y, w, h = r.bbox
        dx = f"{r.motion[0]:.2f}" if r.motion else ""
        dy = f"{r.motion[1]:.2f}" if r.motion else ""
        rows.append([frame_idx, rid, x, y, w, h, dx, dy])
    return rows


REGION_HEADER = ["frame", "region_id", "x", "y", "w", "h", "dx", "dy"]
TRACK_HEADER = ["frame", "cx", "cy", "w", "h", "peak"]
OFFSET_HEADER = ["frame", "dx", "dy"]
POSE_HEADER = ["cycle", "phase", "x", "y", "theta", "stance"]
TRUTH_HEADER = ["frame", "target_id", "x", "y", "w", "h", "visible"]


def truth_rows(entries: list[GroundTruthEntry]) -> list[list]:
    rows = []
    for e in entries:
        for t in e.targets:
            rows.append([e.frame, t.target_id, *t.box, int(t.visible)])
    return rows


def pose_row(cycle: int, state: GaitState, x: float, y: float, theta: float) -> list:
    return [cycle, state.phase, f"{x:.6f}", f"{y:.6f}", f"{theta:.6f}", stance_bitmask(state)]


def annotate_frame(frame: Frame, boxes: list[tuple[int, int, int, int]],
                   track_box: tuple[float, float, float, float] | None = None) -> np.ndarray:
    """Copy of the frame with green detection boxes and a yellow track box."""
    img = frame.pixels.copy()
    for box in boxes:
        _draw_box(img, box, (0, 255, 0))
    if track_box is not None:
        _draw_box(img, track_box, (255, 220, 0))
    return img


def _draw_box(img: np.ndarray, box, color) -> None:
    h, w = img.shape[:2]
    x, y, bw, bh = (int(round(v)) for v in box)
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + bw, w - 1), min(y + bh, h - 1)
    if x0 >= x1 or y0 >= y1:
        return
    img[y0, x0 : x1 + 1] = color
    img[y1, x0 : x1 + 1] = color
    img[y0 : y1 + 1, x0] = color
    img[y0 : y1 + 1, x1] = color


def save_annotated(path: str | Path, frame: Frame, boxes, track_box=None) -> None:
    write_image(path, annotate_frame(frame, boxes, track_box))


def offset_trace_figure(path: str | Path, rows: list[tuple[int, float, float]],
                        deadband: float = 80.0) -> None:
    """Per-frame x/y pixel offsets of the tracked target, with the deadband marked."""
    frames = [r[0] for r in rows]
    dxs = [r[1] for r in rows]
    dys = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(frames, dxs, label="dx", lw=1.2)
    ax.plot(frames, dys, label="dy", lw=1.2)
    ax.axhline(deadband, color="gray", ls="--", lw=0.8)
    ax.axhline(-deadband, color="gray", ls="--", lw=0.8)
    ax.set_xlabel("frame")
    ax.set_ylabel("offset from image center (px)")
    ax.set_ylim(-340, 340)
    ax.legend(loc="upper right")
    ax.set_title("target tracking offset")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def detection_count_figure(path: str | Path, counts: list[int]) -> None:
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(range(len(counts)), counts, lw=1.2)
    ax.set_xlabel("frame")
    ax.set_ylabel("regions")
    ax.set_title("detected regions per frame")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def bench_figure(path: str | Path, results: dict[str, dict[str, float]]) -> None:
    """Grouped bars of detect/track fps per scene preset."""
    presets = list(results)
    stages = ["detect", "track"]
    xs = np.arange(len(presets))
    width = 0.35
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, stage in enumerate(stages):
        vals = [results[p][stage] for p in presets]
        bars = ax.bar(xs + (i - 0.5) * width, vals, width, label=stage)
        ax.bar_label(bars, fmt="%.1f")
    ax.set_xticks(xs, presets)
    ax.set_ylabel("frames / s")
    ax.set_title("pipeline throughput by scene preset")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
