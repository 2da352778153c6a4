// Pointer-to-workspace mapping: the canvas is a top-down view of the leader
// workspace (screen right = +x, screen up = +y), the wheel moves the depth
// (z) axis. Out-of-reach input is clamped onto the workspace ball and
// flagged so the UI can show it.

import type { Vec3 } from "./protocol.js";

export interface ViewMapping {
  /** canvas size in CSS pixels */
  width: number;
  height: number;
  /** leader-workspace point shown at the canvas center (home) */
  center: Vec3;
  /** meters of workspace spanned by the full canvas width */
  spanMeters: number;
  /** shoulder pivot of the leader arm, for reach clamping */
  shoulder: Vec3;
  /** maximum reach from the shoulder (slightly inside the hard radius) */
  maxReach: number;
  zRange: [number, number];
}

export function defaultMapping(
  width: number,
  height: number,
  leaderOrigin: number[],
  workspaceRadius: number,
): ViewMapping {
  return {
    width,
    height,
    center: { x: leaderOrigin[0], y: leaderOrigin[1], z: leaderOrigin[2] },
    spanMeters: 0.9 * workspaceRadius,
    shoulder: { x: 0, y: 0, z: 0.1 },
    maxReach: 0.78 * workspaceRadius,
    zRange: [0.0, 0.45 * workspaceRadius],
  };
}

export interface PointerSample {
  /** canvas-relative pointer coordinates in CSS pixels */
  px: number;
  py: number;
  /** accumulated wheel depth in meters */
  depth: number;
}

export interface MappedPose {
  position: Vec3;
  clamped: boolean;
}

/** Pure mapping from one pointer sample to a leader EE position. */
export function pointerToLeaderPose(sample: PointerSample, map: ViewMapping): MappedPose {
  const metersPerPx = map.spanMeters / map.width;
  const raw: Vec3 = {
    x: map.center.x + (sample.px - map.width / 2) * metersPerPx,
    y: map.center.y - (sample.py - map.height / 2) * metersPerPx,
    z: map.center.z + sample.depth,
  };
  return clampToWorkspace(raw, map);
}

export function clampToWorkspace(p: Vec3, map: ViewMapping): MappedPose {
  let clamped = false;
  let z = p.z;
  if (z < map.zRange[0]) {
    z = map.zRange[0];
    clamped = true;
  } else if (z > map.zRange[1]) {
    z = map.zRange[1];
    clamped = true;
  }
  const dx = p.x - map.shoulder.x;
  const dy = p.y - map.shoulder.y;
  const dz = z - map.shoulder.z;
  const dist = Math.hypot(dx, dy, dz);
  if (dist > map.maxReach) {
    const s = map.maxReach / dist;
    return {
      position: {
        x: map.shoulder.x + dx * s,
        y: map.shoulder.y + dy * s,
        z: map.shoulder.z + dz * s,
      },
      clamped: true,
    };
  }
  return { position: { x: p.x, y: p.y, z }, clamped };
}

/** Workspace point back to canvas pixels (for drawing cursors/obstacles). */
export function workspaceToCanvas(p: { x: number; y: number }, map: ViewMapping): {
  px: number;
  py: number;
} {
  const pxPerMeter = map.width / map.spanMeters;
  return {
    px: map.width / 2 + (p.x - map.center.x) * pxPerMeter,
    py: map.height / 2 - (p.y - map.center.y) * pxPerMeter,
  };
}

/** Replay a recorded pointer stream; pure, so identical inputs give an
 * identical pose stream (the console's determinism contract). */
export function replayPointerStream(
  samples: PointerSample[],
  map: ViewMapping,
): MappedPose[] {
  return samples.map((s) => pointerToLeaderPose(s, map));
}
