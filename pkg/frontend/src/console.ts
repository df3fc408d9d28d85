// Operator console state machine, independent of the DOM so it can be tested
// headless. The browser layer feeds it pointer/keyboard events and server
// messages; it emits validated operator messages through the send callback.

import {
  Box,
  FrameMessage,
  OperatorMessage,
  ServerMessage,
  StatusMessage,
  parseServerMessage,
  validateParams,
} from "./protocol.js";

export const FRAME_WIDTH = 640;
export const FRAME_HEIGHT = 480;
export const MIN_SELECT_SIZE = 8;

export interface ConsoleState {
  connected: boolean;
  /** mode as confirmed by the last STATUS; never set optimistically */
  mode: StatusMessage["mode"] | "unknown";
  /** set after we request a mode change, cleared by the next STATUS */
  pendingMode: StatusMessage["mode"] | null;
  lastFrame: FrameMessage | null;
  lastStatus: StatusMessage | null;
  /** true when the latest payload failed to decode; the view keeps the
   * previous frame and shows a warning badge */
  staleFrame: boolean;
  lastError: string | null;
  /** local hint, e.g. a rejected drag */
  hint: string | null;
  selection: { x0: number; y0: number; x1: number; y1: number } | null;
}

export class ConsoleCore {
  state: ConsoleState = {
    connected: false,
    mode: "unknown",
    pendingMode: null,
    lastFrame: null,
    lastStatus: null,
    staleFrame: false,
    lastError: null,
    hint: null,
    selection: null,
  };

  constructor(private send: (m: OperatorMessage) => void) {}

  private emit(m: OperatorMessage): void {
    this.send(m);
  }

  // --- server events --------------------------------------------------------

  onOpen(): void {
    this.state.connected = true;
  }

  onClose(): void {
    this.state.connected = false;
  }

  onServerMessage(raw: unknown): ServerMessage | null {
    const msg = parseServerMessage(raw);
    if (msg === null) {
      this.state.staleFrame = true;
      return null;
    }
    switch (msg.kind) {
      case "frame":
        this.state.lastFrame = msg;
        this.state.staleFrame = false;
        break;
      case "status":
        this.state.lastStatus = msg;
        this.state.mode = msg.mode;
        if (this.state.pendingMode === msg.mode) this.state.pendingMode = null;
        break;
      case "error":
        this.state.lastError = msg.text;
        break;
    }
    return msg;
  }

  // --- target selection -----------------------------------------------------

  dragStart(x: number, y: number): void {
    if (!this.state.connected || this.state.lastFrame === null) return;
    this.state.selection = { x0: x, y0: y, x1: x, y1: y };
  }

  dragMove(x: number, y: number): void {
    if (this.state.selection) {
      this.state.selection.x1 = x;
      this.state.selection.y1 = y;
    }
  }

  /** Finish the drag: returns the clamped box that was sent, or null. */
  dragEnd(): Box | null {
    const sel = this.state.selection;
    this.state.selection = null;
    if (!sel) return null;
    const x0 = Math.max(0, Math.min(sel.x0, sel.x1));
    const y0 = Math.max(0, Math.min(sel.y0, sel.y1));
    const x1 = Math.min(FRAME_WIDTH, Math.max(sel.x0, sel.x1));
    const y1 = Math.min(FRAME_HEIGHT, Math.max(sel.y0, sel.y1));
    const box: Box = [x0, y0, x1 - x0, y1 - y0];
    if (box[2] < MIN_SELECT_SIZE || box[3] < MIN_SELECT_SIZE) {
      this.state.hint = `selection smaller than ${MIN_SELECT_SIZE}x${MIN_SELECT_SIZE} px ignored`;
      return null;
    }
    this.state.hint = null;
    this.state.pendingMode = "tracking";
    this.emit({ kind: "select_target", box });
    return box;
  }

  // --- keyboard -------------------------------------------------------------

  /** Fixed bindings: arrows steer, W/S tilt the camera, space stops,
   *  T toggles auto-tracking. Returns the message sent, if any. */
  onKey(key: string): OperatorMessage | null {
    if (!this.state.connected) return null;
    let msg: OperatorMessage | null = null;
    switch (key) {
      case "ArrowUp":
        msg = { kind: "manual_cmd", direction: "forward" };
        break;
      case "ArrowLeft":
        msg = { kind: "manual_cmd", direction: "left" };
        break;
      case "ArrowRight":
        msg = { kind: "manual_cmd", direction: "right" };
        break;
      case "ArrowDown":
      case " ":
        msg = { kind: "manual_cmd", direction: "stop" };
        break;
      case "w":
      case "W":
        msg = { kind: "manual_cmd", direction: "cam_up" };
        break;
      case "s":
      case "S":
        msg = { kind: "manual_cmd", direction: "cam_down" };
        break;
      case "t":
      case "T":
        msg = { kind: "set_mode", mode: this.state.mode === "tracking" ? "monitoring" : "tracking" };
        break;
      default:
        return null;
    }
    if (msg.kind === "manual_cmd") {
      // manual input interrupts whatever the robot was doing
      this.state.pendingMode = "manual";
    } else if (msg.kind === "set_mode") {
      this.state.pendingMode = msg.mode;
    }
    this.emit(msg);
    return msg;
  }

  // --- parameter form -------------------------------------------------------

  /** Validates locally (mirroring the server ranges) before sending.
   *  Returns an error text, or null when the message went out. */
  submitParams(params: Record<string, number>): string | null {
    const err = validateParams(params);
    if (err) {
      this.state.hint = err;
      return err;
    }
    this.state.hint = null;
    this.emit({ kind: "set_params", params });
    return null;
  }

  displayedMode(): string {
    if (this.state.pendingMode) return `${this.state.mode} → ${this.state.pendingMode}?`;
    return this.state.mode;
  }
}
