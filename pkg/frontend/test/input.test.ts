import { describe, expect, it } from "vitest";

import {
  createInput,
  gamepadEvent,
  keyEvent,
  shouldSendYaw,
  yawCommand,
} from "../src/input";
import { backoffDelay, MAX_DELAY_MS } from "../src/reconnect";

describe("keyboard yaw", () => {
  it("A / left arrow steer left (+1), D / right arrow steer right (-1)", () => {
    let i = keyEvent(createInput(), "KeyA", true);
    expect(yawCommand(i)).toBe(1);
    i = keyEvent(i, "KeyA", false);
    i = keyEvent(i, "ArrowRight", true);
    expect(yawCommand(i)).toBe(-1);
  });

  it("opposing keys cancel", () => {
    let i = keyEvent(createInput(), "KeyA", true);
    i = keyEvent(i, "KeyD", true);
    expect(yawCommand(i)).toBe(0);
  });
});

describe("gamepad yaw", () => {
  it("passes the axis through with a dead zone, keys take priority", () => {
    let i = gamepadEvent(createInput(), -0.5);
    expect(yawCommand(i)).toBe(0.5); // axis right-positive -> yaw-left convention
    expect(yawCommand(gamepadEvent(createInput(), 0.04))).toBe(0);
    i = keyEvent(i, "KeyD", true);
    expect(yawCommand(i)).toBe(-1);
  });
});

describe("latch gating", () => {
  it("sends yaw only while latched and connected", () => {
    expect(shouldSendYaw(true, true)).toBe(true);
    expect(shouldSendYaw(false, true)).toBe(false);
    expect(shouldSendYaw(true, false)).toBe(false);
  });
});

describe("reconnect backoff", () => {
  it("doubles and saturates", () => {
    expect(backoffDelay(0)).toBe(0);
    expect(backoffDelay(1)).toBe(500);
    expect(backoffDelay(2)).toBe(1000);
    expect(backoffDelay(3)).toBe(2000);
    expect(backoffDelay(20)).toBe(MAX_DELAY_MS);
  });
});
