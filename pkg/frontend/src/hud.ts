// Canvas HUD: camera frame as-received (no interpolation) plus telemetry
// overlay. Agent control renders blue, expert takeover renders red.

import { ConsoleState } from "./state";

export const AGENT_COLOR = "#3b8de0";
export const EXPERT_COLOR = "#d62728";

export function sourceColor(source: string): string {
  return source === "expert" ? EXPERT_COLOR : AGENT_COLOR;
}

export function drawHud(
  ctx: CanvasRenderingContext2D,
  state: ConsoleState,
  frameImage: CanvasImageSource | null,
): void {
  const { width, height } = ctx.canvas;
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, width, height);

  if (frameImage) {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(frameImage, 0, 0, width, height - 64);
  } else {
    ctx.fillStyle = "#444";
    ctx.font = "16px monospace";
    ctx.fillText("no frames yet", 18, height / 2);
  }

  const t = state.telemetry;
  ctx.fillStyle = "#0b0e11";
  ctx.fillRect(0, height - 64, width, 64);
  ctx.font = "13px monospace";
  ctx.fillStyle = "#d8d8d8";
  if (t) {
    ctx.fillText(
      `alt ${t.altitude_m.toFixed(2)} m   spd ${t.speed_mps.toFixed(2)} m/s   ` +
        `yaw ${t.yaw_rate_dps.toFixed(1)} deg/s`,
      10,
      height - 42,
    );
    ctx.fillText(
      `intervention ${(100 * t.intervention_rate_so_far).toFixed(1)}%   ` +
        `dist ${t.distance_m.toFixed(1)} m   drops ${state.droppedFrames}`,
      10,
      height - 24,
    );
    ctx.fillStyle = sourceColor(t.source);
    ctx.fillRect(width - 120, height - 52, 108, 40);
    ctx.fillStyle = "#fff";
    ctx.fillText(t.source.toUpperCase(), width - 108, height - 28);
  }
  if (state.takeover) {
    ctx.strokeStyle = EXPERT_COLOR;
    ctx.lineWidth = 6;
    ctx.strokeRect(3, 3, width - 6, height - 70);
  }
  if (!state.connected) {
    ctx.fillStyle = "rgba(160, 30, 30, 0.85)";
    ctx.fillRect(0, 0, width, 34);
    ctx.fillStyle = "#fff";
    ctx.font = "15px monospace";
    ctx.fillText("DISCONNECTED — reconnecting…", 10, 23);
  }
}
