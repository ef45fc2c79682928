// WebSocket wire protocol shared with the session service.
// Server -> client: frame / telemetry / phase / warning.
// Client -> server: takeover / yaw / control.

export interface FrameMsg {
  type: "frame";
  seq: number;
  png_b64: string;
  w: number;
  h: number;
}

export interface TelemetryMsg {
  type: "telemetry";
  t: number;
  altitude_m: number;
  speed_mps: number;
  yaw_rate_dps: number;
  source: "agent" | "expert";
  intervention_rate_so_far: number;
  distance_m: number;
}

export interface PhaseMsg {
  type: "phase";
  phase: string;
  iteration: number;
  dataset_size: number;
  corridor: string;
  message: string;
}

export interface WarningMsg {
  type: "warning";
  message: string;
}

export type ServerMsg = FrameMsg | TelemetryMsg | PhaseMsg | WarningMsg;

export function parseServerMessage(raw: string): ServerMsg | null {
  let doc: any;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  switch (doc.type) {
    case "frame":
      if (typeof doc.seq === "number" && typeof doc.png_b64 === "string") {
        return doc as FrameMsg;
      }
      return null;
    case "telemetry":
      if (typeof doc.t === "number" && typeof doc.source === "string") {
        return doc as TelemetryMsg;
      }
      return null;
    case "phase":
      return typeof doc.phase === "string" ? (doc as PhaseMsg) : null;
    case "warning":
      return typeof doc.message === "string" ? (doc as WarningMsg) : null;
    default:
      return null;
  }
}

export function takeoverMessage(on: boolean): string {
  return JSON.stringify({ type: "takeover", on });
}

export function yawMessage(value: number): string {
  const clamped = Math.max(-1, Math.min(1, value));
  return JSON.stringify({ type: "yaw", value: clamped });
}

export function controlMessage(cmd: "start" | "abort" | "retrain"): string {
  return JSON.stringify({ type: "control", cmd });
}
