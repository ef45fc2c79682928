// Console state and pure update functions (kept side-effect free for tests).

import { FrameMsg, PhaseMsg, ServerMsg, TelemetryMsg } from "./protocol";

export interface ConsoleState {
  connected: boolean;
  lastFrame: FrameMsg | null;
  frameCount: number;
  droppedFrames: number; // counted from sequence gaps
  telemetry: TelemetryMsg | null;
  phase: PhaseMsg | null;
  takeover: boolean;
  warnings: string[];
}

export function createState(): ConsoleState {
  return {
    connected: false,
    lastFrame: null,
    frameCount: 0,
    droppedFrames: 0,
    telemetry: null,
    phase: null,
    takeover: false,
    warnings: [],
  };
}

export function applyServerMessage(state: ConsoleState, msg: ServerMsg): ConsoleState {
  switch (msg.type) {
    case "frame": {
      let dropped = state.droppedFrames;
      if (state.lastFrame && msg.seq > state.lastFrame.seq + 1) {
        dropped += msg.seq - state.lastFrame.seq - 1;
      }
      return {
        ...state,
        lastFrame: msg,
        frameCount: state.frameCount + 1,
        droppedFrames: dropped,
      };
    }
    case "telemetry":
      return { ...state, telemetry: msg };
    case "phase":
      return { ...state, phase: msg };
    case "warning":
      return { ...state, warnings: [...state.warnings.slice(-19), msg.message] };
  }
}

export function setConnected(state: ConsoleState, connected: boolean): ConsoleState {
  // a drop always releases the latch: inputs must never apply to a session
  // we can no longer see
  if (!connected) {
    return { ...state, connected, takeover: false };
  }
  return { ...state, connected };
}

export function toggleTakeover(state: ConsoleState): ConsoleState {
  if (!state.connected) {
    return state;
  }
  return { ...state, takeover: !state.takeover };
}
