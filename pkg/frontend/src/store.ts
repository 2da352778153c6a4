// Console state and the latest-wins input sender. The store is the single
// mutable surface: network events write into it, the render loop reads it.
// Killing and reloading the page loses nothing that matters; the session
// lives server-side and input is latest-wins.

import type { Quat, ScenarioMeta, TraceRecord, Vec3 } from "./protocol.js";
import { encodeOperatorPose } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "closed";

export interface ConsoleState {
  status: ConnectionStatus;
  meta: ScenarioMeta | null;
  latest: TraceRecord | null;
  lastRecordAtMs: number | null;
  inputClamped: boolean;
  error: string | null;
}

export function initialState(): ConsoleState {
  return {
    status: "connecting",
    meta: null,
    latest: null,
    lastRecordAtMs: null,
    inputClamped: false,
    error: null,
  };
}

/** Latest-wins operator input: remembers only the newest pose between
 * sends and stamps strictly increasing sequence numbers. */
export class InputSender {
  private seq = 0;
  private pending: { position: Vec3; orientation: Quat } | null = null;

  update(position: Vec3, orientation: Quat): void {
    this.pending = { position, orientation };
  }

  /** Encode the newest pose (if any) and clear it; called at >= 60 Hz. */
  flush(nowMs: number): ArrayBuffer | null {
    if (this.pending === null) {
      return null;
    }
    this.seq += 1;
    const frame = encodeOperatorPose(
      this.seq,
      nowMs * 1000,
      this.pending.position,
      this.pending.orientation,
    );
    this.pending = null;
    return frame;
  }

  get sequence(): number {
    return this.seq;
  }
}

/** Orientation source stood in by keyboard/wheel input: yaw and pitch
 * accumulate into a unit quaternion (z-rotation then y-rotation). */
export function orientationFromAngles(yaw: number, pitch: number): Quat {
  const cy = Math.cos(yaw / 2);
  const sy = Math.sin(yaw / 2);
  const cp = Math.cos(pitch / 2);
  const sp = Math.sin(pitch / 2);
  // q = qz(yaw) * qy(pitch), scalar-last
  return {
    x: -sy * sp,
    y: cy * sp,
    z: sy * cp,
    w: cy * cp,
  };
}
