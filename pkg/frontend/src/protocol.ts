// Wire protocol between the console and the teleoperation service.
// Messages are JSON objects tagged with `kind`; these runtime guards keep the
// browser bundle dependency-free (the test suite cross-checks them against a
// zod schema and recorded server traffic).

export type Box = [number, number, number, number]; // x, y, w, h

export interface FrameMessage {
  kind: "frame";
  frame: number;
  boxes: Box[];
  track_box: Box | null;
  dx?: number;
  dy?: number;
  image?: string; // base64 PNG
}

export interface StatusMessage {
  kind: "status";
  mode: "monitoring" | "tracking" | "manual";
  frame: number;
  pose: { x: number; y: number; theta: number };
  gimbal_pitch: number;
  fps: number;
  rcp_total: number;
  rcp_controller: number;
  tracking_active: boolean;
}

export interface ErrorMessage {
  kind: "error";
  text: string;
}

export type ServerMessage = FrameMessage | StatusMessage | ErrorMessage;

export type ManualDirection = "forward" | "left" | "right" | "cam_up" | "cam_down" | "stop";

export type OperatorMessage =
  | { kind: "select_target"; box: Box }
  | { kind: "set_mode"; mode: StatusMessage["mode"] }
  | { kind: "manual_cmd"; direction: ManualDirection }
  | { kind: "set_params"; params: Record<string, number> }
  | { kind: "ping" };

// mirrors the server-side ranges; the form blocks out-of-range values locally
export const PARAM_RANGES: Record<string, [number, number]> = {
  th1: [0, 640],
  th2: [0, 195075],
  th3: [0, 640],
  th4: [0, 195075],
  th5: [0, 640],
  th6: [0, 640],
  deadband: [0, 320],
  k_yaw: [1e-6, 1],
  k_pitch: [1e-6, 1],
  diff_threshold: [0, 255],
  blur_sigma: [0.05, 10],
  min_area: [1, 10000],
};

const MODES = new Set(["monitoring", "tracking", "manual"]);

function isBox(v: unknown): v is Box {
  return Array.isArray(v) && v.length === 4 && v.every((n) => typeof n === "number" && isFinite(n));
}

export function parseServerMessage(raw: unknown): ServerMessage | null {
  if (typeof raw !== "object" || raw === null) return null;
  const m = raw as Record<string, unknown>;
  switch (m.kind) {
    case "frame": {
      if (typeof m.frame !== "number") return null;
      if (!Array.isArray(m.boxes) || !m.boxes.every(isBox)) return null;
      if (m.track_box !== null && m.track_box !== undefined && !isBox(m.track_box)) return null;
      if (m.dx !== undefined && typeof m.dx !== "number") return null;
      if (m.dy !== undefined && typeof m.dy !== "number") return null;
      if (m.image !== undefined && typeof m.image !== "string") return null;
      return {
        kind: "frame",
        frame: m.frame,
        boxes: m.boxes as Box[],
        track_box: (m.track_box ?? null) as Box | null,
        dx: m.dx as number | undefined,
        dy: m.dy as number | undefined,
        image: m.image as string | undefined,
      };
    }
    case "status": {
      const pose = m.pose as Record<string, unknown> | undefined;
      if (typeof m.mode !== "string" || !MODES.has(m.mode)) return null;
      if (typeof m.frame !== "number" || typeof m.fps !== "number") return null;
      if (!pose || typeof pose.x !== "number" || typeof pose.y !== "number" || typeof pose.theta !== "number")
        return null;
      if (typeof m.gimbal_pitch !== "number") return null;
      if (typeof m.rcp_total !== "number" || typeof m.rcp_controller !== "number") return null;
      if (typeof m.tracking_active !== "boolean") return null;
      return {
        kind: "status",
        mode: m.mode as StatusMessage["mode"],
        frame: m.frame,
        pose: { x: pose.x as number, y: pose.y as number, theta: pose.theta as number },
        gimbal_pitch: m.gimbal_pitch,
        fps: m.fps,
        rcp_total: m.rcp_total,
        rcp_controller: m.rcp_controller,
        tracking_active: m.tracking_active,
      };
    }
    case "error":
      return typeof m.text === "string" ? { kind: "error", text: m.text } : null;
    default:
      return null;
  }
}

export function validateParams(params: Record<string, number>): string | null {
  for (const [name, value] of Object.entries(params)) {
    const range = PARAM_RANGES[name];
    if (!range) return `unknown parameter ${name}`;
    if (!isFinite(value) || value < range[0] || value > range[1])
      return `${name}=${value} outside [${range[0]}, ${range[1]}]`;
  }
  return null;
}
