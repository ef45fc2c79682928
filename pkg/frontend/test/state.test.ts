import { describe, expect, it } from "vitest";

import { FrameMsg, TelemetryMsg } from "../src/protocol";
import {
  applyServerMessage,
  createState,
  setConnected,
  toggleTakeover,
} from "../src/state";

function frame(seq: number): FrameMsg {
  return { type: "frame", seq, png_b64: "aGk=", w: 64, h: 64 };
}

describe("frame bookkeeping", () => {
  it("counts sequence gaps as drops", () => {
    let s = createState();
    s = applyServerMessage(s, frame(1));
    s = applyServerMessage(s, frame(2));
    s = applyServerMessage(s, frame(5));
    expect(s.frameCount).toBe(3);
    expect(s.droppedFrames).toBe(2);
    expect(s.lastFrame!.seq).toBe(5);
  });
});

describe("takeover latch", () => {
  it("cannot latch while disconnected", () => {
    const s = toggleTakeover(createState());
    expect(s.takeover).toBe(false);
  });

  it("toggles while connected and releases on disconnect", () => {
    let s = setConnected(createState(), true);
    s = toggleTakeover(s);
    expect(s.takeover).toBe(true);
    s = setConnected(s, false);
    expect(s.takeover).toBe(false);
  });
});

describe("telemetry and warnings", () => {
  it("tracks the latest telemetry snapshot", () => {
    const t: TelemetryMsg = {
      type: "telemetry", t: 2.0, altitude_m: 1.8, speed_mps: 0.61,
      yaw_rate_dps: -4.0, source: "expert", intervention_rate_so_far: 0.25,
      distance_m: 30.5,
    };
    const s = applyServerMessage(createState(), t);
    expect(s.telemetry!.source).toBe("expert");
    expect(s.telemetry!.intervention_rate_so_far).toBeCloseTo(0.25);
  });

  it("keeps a bounded warning history", () => {
    let s = createState();
    for (let i = 0; i < 30; i++) {
      s = applyServerMessage(s, { type: "warning", message: `w${i}` });
    }
    expect(s.warnings.length).toBeLessThanOrEqual(20);
    expect(s.warnings.at(-1)).toBe("w29");
  });
});
