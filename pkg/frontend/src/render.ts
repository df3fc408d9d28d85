// Canvas drawing: latest frame, detection boxes in green, the tracked box
// highlighted, the off-center marker and a stale-frame badge.

import { ConsoleState } from "./console.js";
import { FRAME_HEIGHT, FRAME_WIDTH } from "./console.js";

export function renderFeed(ctx: CanvasRenderingContext2D, state: ConsoleState, image: HTMLImageElement | null): void {
  ctx.fillStyle = "#181818";
  ctx.fillRect(0, 0, FRAME_WIDTH, FRAME_HEIGHT);
  if (image && image.complete && image.naturalWidth > 0) {
    ctx.drawImage(image, 0, 0, FRAME_WIDTH, FRAME_HEIGHT);
  }
  const frame = state.lastFrame;
  if (frame) {
    ctx.lineWidth = 2;
    ctx.strokeStyle = "#2ecc40";
    for (const [x, y, w, h] of frame.boxes) ctx.strokeRect(x, y, w, h);
    if (frame.track_box) {
      ctx.strokeStyle = "#ffdc00";
      const [x, y, w, h] = frame.track_box;
      ctx.strokeRect(x, y, w, h);
    }
    if (frame.dx !== undefined && frame.dy !== undefined) {
      ctx.strokeStyle = "#ff4136";
      ctx.beginPath();
      ctx.moveTo(FRAME_WIDTH / 2, FRAME_HEIGHT / 2);
      ctx.lineTo(FRAME_WIDTH / 2 + frame.dx, FRAME_HEIGHT / 2 + frame.dy);
      ctx.stroke();
    }
  }
  if (state.selection) {
    const s = state.selection;
    ctx.strokeStyle = "#7fdbff";
    ctx.setLineDash([4, 3]);
    ctx.strokeRect(Math.min(s.x0, s.x1), Math.min(s.y0, s.y1), Math.abs(s.x1 - s.x0), Math.abs(s.y1 - s.y0));
    ctx.setLineDash([]);
  }
  if (state.staleFrame) {
    ctx.fillStyle = "#ff851b";
    ctx.font = "14px monospace";
    ctx.fillText("stale frame", 10, 20);
  }
}

export function offsetReadout(state: ConsoleState): string {
  const f = state.lastFrame;
  if (!f || f.dx === undefined || f.dy === undefined) return "dx: -   dy: -";
  return `dx: ${f.dx.toFixed(0)}   dy: ${f.dy.toFixed(0)}`;
}
