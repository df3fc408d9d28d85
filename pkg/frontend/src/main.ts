// Browser wiring: socket <-> console core <-> DOM.

import { ConsoleCore, FRAME_HEIGHT, FRAME_WIDTH } from "./console.js";
import { PARAM_RANGES } from "./protocol.js";
import { offsetReadout, renderFeed } from "./render.js";
import { ConsoleSocket } from "./socket.js";

const canvas = document.getElementById("feed") as HTMLCanvasElement;
canvas.width = FRAME_WIDTH;
canvas.height = FRAME_HEIGHT;
const ctx = canvas.getContext("2d")!;
const statusLine = document.getElementById("status-line")!;
const offsetLine = document.getElementById("offset-line")!;
const errorLine = document.getElementById("error-line")!;
const paramsForm = document.getElementById("params-form") as HTMLFormElement;

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const socket = new ConsoleSocket(wsUrl, {
  onOpen: () => core.onOpen(),
  onClose: () => core.onClose(),
  onMessage: (raw) => {
    const msg = core.onServerMessage(raw);
    if (msg?.kind === "frame" && msg.image) {
      image = new Image();
      image.src = `data:image/png;base64,${msg.image}`;
    }
  },
});
const core = new ConsoleCore((m) => socket.send(m));
let image: HTMLImageElement | null = null;

function canvasPos(ev: MouseEvent): [number, number] {
  const r = canvas.getBoundingClientRect();
  return [((ev.clientX - r.left) / r.width) * FRAME_WIDTH, ((ev.clientY - r.top) / r.height) * FRAME_HEIGHT];
}

canvas.addEventListener("mousedown", (ev) => core.dragStart(...canvasPos(ev)));
canvas.addEventListener("mousemove", (ev) => core.dragMove(...canvasPos(ev)));
window.addEventListener("mouseup", () => core.dragEnd());

window.addEventListener("keydown", (ev) => {
  if ((ev.target as HTMLElement)?.tagName === "INPUT") return;
  if (core.onKey(ev.key)) ev.preventDefault();
});

for (const id of ["forward", "left", "right", "stop", "cam_up", "cam_down"]) {
  document.getElementById(`btn-${id}`)?.addEventListener("click", () => {
    core.onKey(
      { forward: "ArrowUp", left: "ArrowLeft", right: "ArrowRight", stop: " ", cam_up: "w", cam_down: "s" }[id]!,
    );
  });
}
document.getElementById("btn-track")?.addEventListener("click", () => core.onKey("t"));

paramsForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const params: Record<string, number> = {};
  for (const input of paramsForm.querySelectorAll<HTMLInputElement>("input[name]")) {
    if (input.value !== "") params[input.name] = Number(input.value);
  }
  const err = core.submitParams(params);
  errorLine.textContent = err ?? "parameters sent";
});

// build the parameter inputs from the shared ranges
for (const [name, [lo, hi]] of Object.entries(PARAM_RANGES)) {
  const label = document.createElement("label");
  label.textContent = name;
  const input = document.createElement("input");
  input.name = name;
  input.type = "number";
  input.step = "any";
  input.placeholder = `${lo}..${hi}`;
  label.appendChild(input);
  paramsForm.insertBefore(label, paramsForm.lastElementChild);
}

function paint(): void {
  renderFeed(ctx, core.state, image);
  const s = core.state.lastStatus;
  statusLine.textContent = s
    ? `mode ${core.displayedMode()} | frame ${s.frame} | fps ${s.fps} | pose (${s.pose.x.toFixed(2)}, ` +
      `${s.pose.y.toFixed(2)}, ${s.pose.theta.toFixed(2)}) | rcp ${s.rcp_controller}/${s.rcp_total}` +
      (core.state.connected ? "" : " | DISCONNECTED")
    : core.state.connected
      ? "waiting for status"
      : "connecting...";
  offsetLine.textContent = offsetReadout(core.state);
  if (core.state.lastError) errorLine.textContent = core.state.lastError;
  else if (core.state.hint) errorLine.textContent = core.state.hint;
  requestAnimationFrame(paint);
}

socket.connect();
paint();
