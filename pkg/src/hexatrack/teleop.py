"""Closed-loop session and the operator-facing service.

One :class:`TeleopSession` owns the whole loop: render the synthetic scene at
the current body pose, run detection or tracking on the frame, turn tracked
offsets into rotation commands, push them through the real RCP codec (the
encode -> framed stream -> decode hop runs in-process, so the wire format is
exercised end to end), drive the gait, and feed the updated pose back into
the renderer.

Operator input always wins: a manual command forces manual mode, and in
manual mode the controller originates no RCP traffic (the ``rcp_log`` keeps
the origin of every frame so that law is checkable).  Commands arriving over
the network are queued and applied between ticks, never mid-tick.

The service is a FastAPI app: JSON messages over the ``/ws`` websocket, a
``/status`` snapshot, and broadcasts of FRAME/STATUS to every client.
"""

from __future__ import annotations

import asyncio
import base64
import io
import math
import time
from collections import deque
from contextlib import asynccontextmanager
from dataclasses import dataclass
from typing import Literal, Optional, Union

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field, ValidationError

from . import controller, gait, kcf, rcp
from .imgproc import Frame
from .region_detect import MergeParams, MotionDetector, PipelineParams
from .scene_sim import SceneConfig, SceneRenderer

MONITORING = "monitoring"
TRACKING = "tracking"
MANUAL = "manual"

MANUAL_TURN_STEP = math.pi / 12.0
MANUAL_GIMBAL_STEP = math.pi / 36.0
GIMBAL_LIMIT = math.pi / 2.0


# --- wire message schemas --------------------------------------------------------


class SelectTarget(BaseModel):
    kind: Literal["select_target"]
    box: tuple[float, float, float, float]


class SetMode(BaseModel):
    kind: Literal["set_mode"]
    mode: Literal["monitoring", "tracking", "manual"]


class ManualCmd(BaseModel):
    kind: Literal["manual_cmd"]
    direction: Literal["forward", "left", "right", "cam_up", "cam_down", "stop"]


class SetParams(BaseModel):
    kind: Literal["set_params"]
    params: dict[str, float]


class Ping(BaseModel):
    kind: Literal["ping"]


OperatorMessage = Union[SelectTarget, SetMode, ManualCmd, SetParams, Ping]


class OperatorEnvelope(BaseModel):
    """Validation entry point for raw client JSON."""

    msg: OperatorMessage = Field(discriminator="kind")


# ranges enforced on SET_PARAMS, mirrored client-side by the console
PARAM_RANGES: dict[str, tuple[float, float]] = {
    "th1": (0.0, 640.0),
    "th2": (0.0, 195075.0),
    "th3": (0.0, 640.0),
    "th4": (0.0, 195075.0),
    "th5": (0.0, 640.0),
    "th6": (0.0, 640.0),
    "deadband": (0.0, 320.0),
    "k_yaw": (1e-6, 1.0),
    "k_pitch": (1e-6, 1.0),
    "diff_threshold": (0.0, 255.0),
    "blur_sigma": (0.05, 10.0),
    "min_area": (1.0, 10000.0),
}


@dataclass
class RcpLogEntry:
    frame: int
    origin: str  # "controller" | "manual"
    data: bytes
    command: rcp.RcpCommand


@dataclass
class SessionConfig:
    tick_rate: float = 10.0
    stride: float = gait.DEFAULT_STRIDE
    image_mode: str = "none"  # "none" | "base64"
    detect_while_monitoring: bool = True
    event_log_path: str | None = None  # JSON-lines session event log


class TeleopSession:
    """Single-writer simulation session; drive via tick()/handle_message()."""

    def __init__(
        self,
        scene: SceneConfig,
        merge_params: MergeParams | None = None,
        controller_params: controller.ControllerParams | None = None,
        pipeline_params: PipelineParams | None = None,
        session_config: SessionConfig | None = None,
    ):
        self.scene = scene
        self.renderer = SceneRenderer(scene)
        self.merge_params = merge_params or MergeParams()
        self.controller_params = controller_params or controller.ControllerParams()
        self.pipeline_params = pipeline_params or PipelineParams()
        self.config = session_config or SessionConfig()
        self.detector = MotionDetector(self.merge_params, self.pipeline_params)

        self.mode = MONITORING
        self.gait_state = gait.GaitState()
        self.pose = gait.BodyPose()
        self.gimbal_pitch = 0.0
        self.tracker: Optional[kcf.TrackState] = None
        self.frame_idx = 0
        self.last_frame: Optional[Frame] = None
        self.manual_queue: deque[str] = deque()
        self.rcp_log: list[RcpLogEntry] = []
        self.offset_trace: list[tuple[int, float, float]] = []
        self.pose_trace: list[list] = []
        self._fps = 0.0
        self._last_tick_time: Optional[float] = None
        self._event_fh = (
            open(self.config.event_log_path, "a") if self.config.event_log_path else None
        )

    def log_event(self, event: str, **fields) -> None:
        if self._event_fh is None:
            return
        import json

        record = {"event": event, "frame": self.frame_idx, **fields}
        self._event_fh.write(json.dumps(record) + "\n")
        self._event_fh.flush()

    def close(self) -> None:
        if self._event_fh is not None:
            self._event_fh.close()
            self._event_fh = None

    # --- status snapshot ---------------------------------------------------

    def status(self) -> dict:
        return {
            "kind": "status",
            "mode": self.mode,
            "frame": self.frame_idx,
            "pose": {"x": self.pose.x, "y": self.pose.y, "theta": self.pose.theta},
            "gimbal_pitch": self.gimbal_pitch,
            "fps": round(self._fps, 2),
            "rcp_total": len(self.rcp_log),
            "rcp_controller": sum(1 for e in self.rcp_log if e.origin == "controller"),
            "tracking_active": self.tracker is not None,
        }

    # --- the loop ------------------------------------------------------------

    def tick(self) -> list[dict]:
        """Advance the world one step; returns broadcast messages."""
        now = time.monotonic()
        if self._last_tick_time is not None:
            dt = now - self._last_tick_time
            if dt > 0:
                inst = 1.0 / dt
                self._fps = inst if self._fps == 0 else 0.9 * self._fps + 0.1 * inst
        self._last_tick_time = now

        frame, truth = self.renderer.render_frame(self.pose, self.gimbal_pitch, self.frame_idx)
        messages: list[dict] = []
        boxes: list[tuple[int, int, int, int]] = []
        track_box = None
        dx = dy = None

        if self.mode == MONITORING and self.last_frame is not None and self.config.detect_while_monitoring:
            result = self.detector.detect_step(self.last_frame, frame)
            boxes = [r.bbox for r in result.regions]
        elif self.mode == TRACKING and self.tracker is not None:
            try:
                res = kcf.update_track(self.tracker, frame)
                track_box = res.box
                cx = track_box[0] + track_box[2] / 2.0
                cy = track_box[1] + track_box[3] / 2.0
                dx = cx - self.scene.width / 2.0
                dy = cy - self.scene.height / 2.0
                self._issue_tracking_command(dx, dy)
                self.offset_trace.append((self.frame_idx, dx, dy))
            except kcf.LostTarget:
                messages.append({"kind": "error", "text": "target lost; back to monitoring"})
                self.tracker = None
                self.mode = MONITORING
                self.log_event("target_lost")
        elif self.mode == MANUAL and self.manual_queue:
            self._apply_manual(self.manual_queue.popleft())

        self.gait_state, self.pose, _ = gait.step(
            self.gait_state, self.pose, stride=self.config.stride,
            gimbal=(0.0, self.gimbal_pitch),
        )
        self.pose_trace.append(
            [self.frame_idx, self.gait_state.phase, self.pose.x, self.pose.y,
             self.pose.theta, gait.stance_bitmask(self.gait_state)]
        )

        frame_msg: dict = {
            "kind": "frame",
            "frame": self.frame_idx,
            "boxes": [list(b) for b in boxes],
            "track_box": list(track_box) if track_box else None,
        }
        if dx is not None:
            frame_msg["dx"] = dx
            frame_msg["dy"] = dy
        if self.config.image_mode == "base64":
            frame_msg["image"] = _encode_png_base64(frame)
        messages.append(frame_msg)
        messages.append(self.status())

        self.last_frame = frame
        self.frame_idx += 1
        return messages

    def _issue_tracking_command(self, dx: float, dy: float) -> None:
        p = self.controller_params
        dtheta = controller.yaw_command(dx, p)
        dpitch = controller.pitch_command(dy, p)
        cmd = rcp.RcpCommand(
            turn_flag=1 if dtheta != 0.0 else 0,
            gimbal_flag=1 if dpitch != 0.0 else 0,
            dx=_clamp_offset(dx),
            dy=_clamp_offset(dy),
        )
        wire = rcp.write_framed(cmd)
        decoded, _ = rcp.read_framed(wire)
        self.rcp_log.append(RcpLogEntry(self.frame_idx, "controller", wire, decoded))
        self.log_event(
            "rcp", origin="controller", turn=decoded.turn_flag, gimbal=decoded.gimbal_flag,
            dx=decoded.dx, dy=decoded.dy,
        )
        self._robot_apply(decoded)

    def _robot_apply(self, cmd: rcp.RcpCommand) -> None:
        """Robot-side interpretation of a decoded RCP frame."""
        p = self.controller_params
        if cmd.turn_flag:
            self.gait_state = gait.begin_turn(self.gait_state, controller.yaw_command(cmd.dx, p))
        if cmd.gimbal_flag:
            self.gimbal_pitch = _clamp_gimbal(
                self.gimbal_pitch + controller.pitch_command(cmd.dy, p)
            )

    def _apply_manual(self, direction: str) -> None:
        s = self.gait_state
        if direction == "forward":
            if s.mode == gait.IDLE:
                self.gait_state = gait.GaitState(phase=s.phase, mode=gait.STRAIGHT)
        elif direction in ("left", "right"):
            sign = 1.0 if direction == "right" else -1.0
            self.gait_state = gait.begin_turn(s, sign * MANUAL_TURN_STEP)
        elif direction == "cam_up":
            self.gimbal_pitch = _clamp_gimbal(self.gimbal_pitch - MANUAL_GIMBAL_STEP)
        elif direction == "cam_down":
            self.gimbal_pitch = _clamp_gimbal(self.gimbal_pitch + MANUAL_GIMBAL_STEP)
        elif direction == "stop":
            self.gait_state = gait.GaitState(mode=gait.IDLE)

    # --- operator input --------------------------------------------------------

    def handle_message(self, raw: dict) -> list[dict]:
        """Apply one operator message; returns reply messages for the sender."""
        try:
            msg = OperatorEnvelope(msg=raw).msg
        except ValidationError as e:
            text = f"invalid message: {e.errors()[0]['msg']}"
            self.log_event("rejected_message", detail=text)
            return [{"kind": "error", "text": text}]
        self.log_event("operator_message", kind=msg.kind)

        if isinstance(msg, Ping):
            return [self.status()]
        if isinstance(msg, SelectTarget):
            return self._select_target(msg.box)
        if isinstance(msg, SetMode):
            return self._set_mode(msg.mode)
        if isinstance(msg, ManualCmd):
            self.manual_queue.append(msg.direction)
            if self.mode != MANUAL:
                self.log_event("mode_change", mode=MANUAL, trigger=msg.direction)
            self.mode = MANUAL
            return [self.status()]
        if isinstance(msg, SetParams):
            return self._set_params(msg.params)
        return [{"kind": "error", "text": "unhandled message"}]

    def _select_target(self, box: tuple[float, float, float, float]) -> list[dict]:
        if self.last_frame is None:
            return [{"kind": "error", "text": "no frame rendered yet"}]
        x, y, w, h = box
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > self.scene.width or y + h > self.scene.height:
            return [{"kind": "error", "text": f"box {box} outside frame bounds"}]
        try:
            self.tracker = kcf.init_track(self.last_frame, box)
        except kcf.TrackError as e:
            return [{"kind": "error", "text": str(e)}]
        self.mode = TRACKING
        self.log_event("mode_change", mode=TRACKING, box=list(box))
        return [self.status()]

    def _set_mode(self, mode: str) -> list[dict]:
        if mode == TRACKING and self.tracker is None:
            return [{"kind": "error", "text": "no target selected"}]
        if self.mode == TRACKING and mode != TRACKING:
            self.tracker = None
        self.mode = mode
        self.log_event("mode_change", mode=mode)
        return [self.status()]

    def _set_params(self, values: dict[str, float]) -> list[dict]:
        for name, value in values.items():
            if name not in PARAM_RANGES:
                return [{"kind": "error", "text": f"unknown parameter {name!r}"}]
            lo, hi = PARAM_RANGES[name]
            if not (lo <= value <= hi):
                return [{"kind": "error", "text": f"{name}={value} outside [{lo}, {hi}]"}]
        merge_updates = {k: v for k, v in values.items() if k.startswith("th") and k != "th"}
        if merge_updates:
            current = {k: getattr(self.merge_params, k) for k in ("th1", "th2", "th3", "th4", "th5", "th6")}
            current.update(merge_updates)
            self.merge_params = MergeParams(**current)
            self.detector.merge_params = self.merge_params
        ctrl = {}
        if "deadband" in values:
            ctrl["th"] = values["deadband"]
        for k in ("k_yaw", "k_pitch"):
            if k in values:
                ctrl[k] = values[k]
        if ctrl:
            base = self.controller_params
            self.controller_params = controller.ControllerParams(
                th=ctrl.get("th", base.th),
                k_yaw=ctrl.get("k_yaw", base.k_yaw),
                k_pitch=ctrl.get("k_pitch", base.k_pitch),
            )
        pipe = {k: values[k] for k in ("diff_threshold", "blur_sigma", "min_area") if k in values}
        if pipe:
            if "min_area" in pipe:
                pipe["min_area"] = int(pipe["min_area"])
            base_p = self.pipeline_params
            self.pipeline_params = PipelineParams(
                blur_sigma=pipe.get("blur_sigma", base_p.blur_sigma),
                diff_threshold=pipe.get("diff_threshold", base_p.diff_threshold),
                min_area=pipe.get("min_area", base_p.min_area),
                max_points=base_p.max_points,
                knn_ratio=base_p.knn_ratio,
                merging=base_p.merging,
            )
            self.detector.params = self.pipeline_params
        return [self.status()]


def _clamp_offset(v: float) -> int:
    return int(max(-rcp.MAX_OFFSET, min(rcp.MAX_OFFSET, round(v))))


def _clamp_gimbal(v: float) -> float:
    return max(-GIMBAL_LIMIT, min(GIMBAL_LIMIT, v))


def _encode_png_base64(frame: Frame) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(frame.pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


# --- network service -------------------------------------------------------------


def create_app(session: TeleopSession, tick_rate: float | None = None):
    """FastAPI app running the session loop in the background.

    All clients receive every broadcast; operator messages are validated per
    client and queued, and the loop applies them between ticks.
    """
    rate = tick_rate or session.config.tick_rate
    clients: set = set()
    inbox: deque = deque()  # (websocket, raw dict)

    async def loop():
        while True:
            started = time.monotonic()
            while inbox:
                ws, raw = inbox.popleft()
                for reply in session.handle_message(raw):
                    await _safe_send(ws, reply)
            for msg in session.tick():
                dead = []
                for ws in clients:
                    if not await _safe_send(ws, msg):
                        dead.append(ws)
                for ws in dead:
                    clients.discard(ws)
            elapsed = time.monotonic() - started
            await asyncio.sleep(max(1.0 / rate - elapsed, 0.0))

    async def _safe_send(ws, payload: dict) -> bool:
        try:
            await ws.send_json(payload)
            return True
        except Exception:
            return False

    @asynccontextmanager
    async def lifespan(app):
        task = asyncio.create_task(loop())
        try:
            yield
        finally:
            task.cancel()

    app = FastAPI(lifespan=lifespan)
    app.state.session = session

    @app.get("/status")
    async def status():
        return session.status()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        clients.add(ws)
        try:
            while True:
                try:
                    raw = await ws.receive_json()
                except WebSocketDisconnect:
                    raise
                except Exception:
                    await _safe_send(ws, {"kind": "error", "text": "not a JSON object"})
                    continue
                if not isinstance(raw, dict):
                    await _safe_send(ws, {"kind": "error", "text": "expected a JSON object"})
                    continue
                inbox.append((ws, raw))
        except WebSocketDisconnect:
            pass
        finally:
            clients.discard(ws)

    return app


def serve(
    bind: str = "127.0.0.1:8765",
    scene: SceneConfig | None = None,
    tick_rate: float = 10.0,
    image_mode: str = "base64",
    static_dir: str | None = None,
    event_log_path: str | None = None,
) -> None:
    """Run the service until interrupted."""
    import uvicorn

    from .scene_sim import preset_config

    session = TeleopSession(
        scene or preset_config("complex"),
        session_config=SessionConfig(
            tick_rate=tick_rate, image_mode=image_mode, event_log_path=event_log_path
        ),
    )
    app = create_app(session)
    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    host, _, port = bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8765), log_level="warning")
