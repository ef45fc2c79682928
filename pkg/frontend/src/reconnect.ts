// Exponential backoff for WebSocket reconnect attempts.

export const BASE_DELAY_MS = 500;
export const MAX_DELAY_MS = 10_000;

export function backoffDelay(attempt: number): number {
  if (attempt <= 0) {
    return 0;
  }
  return Math.min(MAX_DELAY_MS, BASE_DELAY_MS * 2 ** (attempt - 1));
}
