// Visual feedback model: how one trace record renders at the leader cursor.
// Pure functions so the render rules are unit-testable without a canvas:
// arrow length tracks the factor (full length at the clamp), arrow direction
// opposes the EE deviation, the background pulses past a threshold, and a
// stream gap beyond 500 ms raises the stale banner.

import type { TraceRecord } from "./protocol.js";

export const STALE_AFTER_MS = 500;
export const PULSE_THRESHOLD_FRACTION = 0.25;

export interface FeedbackVisual {
  /** arrow length as a fraction of the configured maximum, 0 hides it */
  arrowLength: number;
  /** unit direction in workspace xy (screen plane), null when no arrow */
  arrowDir: { x: number; y: number } | null;
  pulse: boolean;
  factorText: string;
  renderedForce: number[];
}

export function feedbackVisual(record: TraceRecord, factorClamp: number): FeedbackVisual {
  const factor = record.factor;
  const length = Math.min(factor / factorClamp, 1.0);
  let dir: { x: number; y: number } | null = null;
  if (factor > 0) {
    const dx = -record.delta_ee[0];
    const dy = -record.delta_ee[1];
    const norm = Math.hypot(dx, dy);
    if (norm > 1e-12) {
      dir = { x: dx / norm, y: dy / norm };
    }
  }
  return {
    arrowLength: factor > 0 ? length : 0,
    arrowDir: factor > 0 ? dir : null,
    pulse: factor >= PULSE_THRESHOLD_FRACTION * factorClamp,
    factorText: factor.toFixed(3),
    renderedForce: record.rendered_force,
  };
}

export function isStale(lastRecordAtMs: number | null, nowMs: number): boolean {
  if (lastRecordAtMs === null) {
    return true;
  }
  return nowMs - lastRecordAtMs > STALE_AFTER_MS;
}
