// Keyboard / gamepad yaw input. Keys give bang-bang steering, the gamepad
// axis gives proportional; both only flow while the takeover latch is held.

export interface InputState {
  left: boolean;
  right: boolean;
  gamepadAxis: number;
}

export function createInput(): InputState {
  return { left: false, right: false, gamepadAxis: 0 };
}

const LEFT_KEYS = ["KeyA", "ArrowLeft"];
const RIGHT_KEYS = ["KeyD", "ArrowRight"];
export const TAKEOVER_KEY = "Space";

export function keyEvent(input: InputState, code: string, down: boolean): InputState {
  if (LEFT_KEYS.includes(code)) {
    return { ...input, left: down };
  }
  if (RIGHT_KEYS.includes(code)) {
    return { ...input, right: down };
  }
  return input;
}

export function gamepadEvent(input: InputState, axis: number): InputState {
  const dead = Math.abs(axis) < 0.08 ? 0 : axis;
  return { ...input, gamepadAxis: Math.max(-1, Math.min(1, dead)) };
}

export function yawCommand(input: InputState): number {
  // positive = yaw left, matching the simulator's convention; the left key
  // therefore produces +1
  const keys = (input.left ? 1 : 0) - (input.right ? 1 : 0);
  if (keys !== 0) {
    return keys;
  }
  // gamepad x-axis points right; invert into the yaw-left convention
  // (normalizing -0 so consumers can compare with ===)
  return input.gamepadAxis === 0 ? 0 : -input.gamepadAxis;
}

export function shouldSendYaw(takeover: boolean, connected: boolean): boolean {
  return takeover && connected;
}
