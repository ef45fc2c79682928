import { describe, expect, it } from "vitest";

import {
  controlMessage,
  parseServerMessage,
  takeoverMessage,
  yawMessage,
} from "../src/protocol";

describe("parseServerMessage", () => {
  it("accepts well-formed frame messages", () => {
    const msg = parseServerMessage(
      JSON.stringify({ type: "frame", seq: 4, png_b64: "aGk=", w: 64, h: 64 }),
    );
    expect(msg).not.toBeNull();
    expect(msg!.type).toBe("frame");
  });

  it("accepts telemetry and phase", () => {
    const telemetry = parseServerMessage(JSON.stringify({
      type: "telemetry", t: 1.5, altitude_m: 1.8, speed_mps: 0.6,
      yaw_rate_dps: 3.0, source: "agent", intervention_rate_so_far: 0.1,
      distance_m: 12.0,
    }));
    expect(telemetry!.type).toBe("telemetry");
    const phase = parseServerMessage(JSON.stringify({
      type: "phase", phase: "rollout", iteration: 1, dataset_size: 100,
      corridor: "train_a", message: "",
    }));
    expect(phase!.type).toBe("phase");
  });

  it("rejects unknown types and malformed payloads", () => {
    expect(parseServerMessage("not json")).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "teleport" }))).toBeNull();
    expect(parseServerMessage(JSON.stringify({ type: "frame", seq: "x" }))).toBeNull();
  });
});

describe("outbound builders", () => {
  it("builds takeover and control messages verbatim", () => {
    expect(JSON.parse(takeoverMessage(true))).toEqual({ type: "takeover", on: true });
    expect(JSON.parse(controlMessage("retrain"))).toEqual({
      type: "control", cmd: "retrain",
    });
  });

  it("passes gamepad values through and clamps outliers", () => {
    expect(JSON.parse(yawMessage(0.5))).toEqual({ type: "yaw", value: 0.5 });
    expect(JSON.parse(yawMessage(7)).value).toBe(1);
    expect(JSON.parse(yawMessage(-7)).value).toBe(-1);
  });
});
