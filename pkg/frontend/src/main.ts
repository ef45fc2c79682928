// Ground-station wiring: WebSocket with auto-reconnect, keyboard/gamepad
// input at a fixed 30 Hz command rate while latched, canvas rendering on
// frame arrival.

import { drawHud } from "./hud";
import {
  TAKEOVER_KEY,
  createInput,
  gamepadEvent,
  keyEvent,
  shouldSendYaw,
  yawCommand,
} from "./input";
import {
  controlMessage,
  parseServerMessage,
  takeoverMessage,
  yawMessage,
} from "./protocol";
import { applyServerMessage, createState, setConnected, toggleTakeover } from "./state";
import { backoffDelay } from "./reconnect";

const COMMAND_HZ = 30;

let state = createState();
let input = createInput();
let socket: WebSocket | null = null;
let attempt = 0;
let frameImage: HTMLImageElement | null = null;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const phaseDiv = document.getElementById("phase")!;
const warnDiv = document.getElementById("warnings")!;

function wsUrl(): string {
  const proto = location.protocol === "https:" ? "wss:" : "ws:";
  return `${proto}//${location.host}/ws`;
}

function render(): void {
  drawHud(ctx, state, frameImage);
  if (state.phase) {
    phaseDiv.textContent =
      `phase: ${state.phase.phase}  iteration: ${state.phase.iteration}  ` +
      `dataset: ${state.phase.dataset_size}  ${state.phase.message}`;
  }
  warnDiv.textContent = state.warnings.slice(-3).join(" | ");
}

function connect(): void {
  socket = new WebSocket(wsUrl());
  socket.onopen = () => {
    attempt = 0;
    state = setConnected(state, true);
    render();
  };
  socket.onclose = () => {
    state = setConnected(state, false);
    render();
    attempt += 1;
    setTimeout(connect, backoffDelay(attempt));
  };
  socket.onmessage = (event) => {
    const msg = parseServerMessage(event.data);
    if (!msg) {
      return;
    }
    state = applyServerMessage(state, msg);
    if (msg.type === "frame") {
      const img = new Image();
      img.onload = () => {
        frameImage = img;
        render();
      };
      img.src = `data:image/png;base64,${msg.png_b64}`;
    } else {
      render();
    }
  };
}

function send(payload: string): void {
  if (socket && socket.readyState === WebSocket.OPEN) {
    socket.send(payload);
  }
}

document.addEventListener("keydown", (e) => {
  if (e.code === TAKEOVER_KEY) {
    e.preventDefault();
    state = toggleTakeover(state);
    send(takeoverMessage(state.takeover));
    render();
    return;
  }
  input = keyEvent(input, e.code, true);
});
document.addEventListener("keyup", (e) => {
  input = keyEvent(input, e.code, false);
});

for (const [id, cmd] of [
  ["btn-start", "start"],
  ["btn-abort", "abort"],
  ["btn-retrain", "retrain"],
] as const) {
  document.getElementById(id)?.addEventListener("click", () => send(controlMessage(cmd)));
}

setInterval(() => {
  const pads = navigator.getGamepads ? navigator.getGamepads() : [];
  const pad = pads && pads[0];
  if (pad) {
    input = gamepadEvent(input, pad.axes[0] ?? 0);
  }
  if (shouldSendYaw(state.takeover, state.connected)) {
    send(yawMessage(yawCommand(input)));
  }
}, 1000 / COMMAND_HZ);

connect();
render();
