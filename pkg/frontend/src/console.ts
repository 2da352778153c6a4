// Canvas rendering of the operator console: top-down workspace view with
// the operator cursor, leader and follower EE markers, visible obstacles,
// the feedback arrow, and status text. All geometry math lives in view.ts
// and feedback.ts; this file only draws.

import type { FeedbackVisual } from "./feedback.js";
import type { ScenarioMeta, TraceRecord } from "./protocol.js";
import type { ViewMapping } from "./view.js";
import { workspaceToCanvas } from "./view.js";

export interface Scene {
  record: TraceRecord | null;
  visual: FeedbackVisual | null;
  cursor: { x: number; y: number } | null;
  stale: boolean;
  inputClamped: boolean;
  meta: ScenarioMeta | null;
}

const ARROW_MAX_PX = 90;

export function drawScene(
  ctx: CanvasRenderingContext2D,
  map: ViewMapping,
  scene: Scene,
): void {
  const { width, height } = map;
  ctx.clearRect(0, 0, width, height);

  // background pulse under contact feedback
  ctx.fillStyle = scene.visual?.pulse ? "#3a1f1f" : "#15191f";
  ctx.fillRect(0, 0, width, height);

  drawGrid(ctx, map);
  if (scene.meta) {
    drawObstacles(ctx, map, scene.meta);
  }

  if (scene.record) {
    const rec = scene.record;
    // follower target and actual EE, mapped back through the retarget map
    // into leader-space for display alongside the cursor
    const meta = scene.meta;
    if (meta) {
      const toLeader = (p: number[]) => ({
        x: meta.leader_origin[0] + (p[0] - meta.follower_origin[0]) / meta.retarget_scale,
        y: meta.leader_origin[1] + (p[1] - meta.follower_origin[1]) / meta.retarget_scale,
      });
      drawMarker(ctx, map, toLeader(rec.target_pos), "#4f8cc9", 4, false);
      drawMarker(ctx, map, toLeader(rec.follower_pos), "#62c462", 6, true);
    }
    drawMarker(ctx, map, { x: rec.leader_pos[0], y: rec.leader_pos[1] }, "#e0e0e0", 5, true);

    if (scene.visual && scene.visual.arrowLength > 0 && scene.visual.arrowDir) {
      drawArrow(ctx, map, rec, scene.visual);
    }
  }

  if (scene.cursor) {
    const c = workspaceToCanvas(scene.cursor, map);
    ctx.strokeStyle = scene.inputClamped ? "#e06c5c" : "#9a9a9a";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(c.px, c.py, 9, 0, 2 * Math.PI);
    ctx.stroke();
  }

  drawHud(ctx, map, scene);
}

function drawGrid(ctx: CanvasRenderingContext2D, map: ViewMapping): void {
  const step = 0.1; // meters
  const pxPerMeter = map.width / map.spanMeters;
  ctx.strokeStyle = "#232a33";
  ctx.lineWidth = 1;
  const halfSpanX = map.spanMeters / 2;
  const halfSpanY = (map.height / pxPerMeter) / 2;
  for (let gx = Math.ceil((map.center.x - halfSpanX) / step) * step; gx < map.center.x + halfSpanX; gx += step) {
    const { px } = workspaceToCanvas({ x: gx, y: map.center.y }, map);
    ctx.beginPath();
    ctx.moveTo(px, 0);
    ctx.lineTo(px, map.height);
    ctx.stroke();
  }
  for (let gy = Math.ceil((map.center.y - halfSpanY) / step) * step; gy < map.center.y + halfSpanY; gy += step) {
    const { py } = workspaceToCanvas({ x: map.center.x, y: gy }, map);
    ctx.beginPath();
    ctx.moveTo(0, py);
    ctx.lineTo(map.width, py);
    ctx.stroke();
  }
}

function drawObstacles(
  ctx: CanvasRenderingContext2D,
  map: ViewMapping,
  meta: ScenarioMeta,
): void {
  // visible half-spaces arrive in follower coordinates; display them in the
  // leader view through the inverse retarget map. Only planes with an
  // in-plane (xy) normal render as lines in the top-down view.
  for (const hs of meta.visible_obstacles) {
    const [nx, ny] = hs.normal;
    if (Math.hypot(nx, ny) < 1e-6) {
      continue; // horizontal plane (e.g. a table): shade the whole view edge
    }
    // a point on the plane in follower space: n * offset
    const pxy = {
      x: meta.leader_origin[0] + (hs.normal[0] * hs.offset - meta.follower_origin[0]) / meta.retarget_scale,
      y: meta.leader_origin[1] + (hs.normal[1] * hs.offset - meta.follower_origin[1]) / meta.retarget_scale,
    };
    const p = workspaceToCanvas(pxy, map);
    // the line direction is the in-plane perpendicular of the normal
    const dir = { x: -ny, y: nx };
    ctx.strokeStyle = "#7a6434";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(p.px - dir.x * 1000, p.py + dir.y * 1000);
    ctx.lineTo(p.px + dir.x * 1000, p.py - dir.y * 1000);
    ctx.stroke();
  }
}

function drawMarker(
  ctx: CanvasRenderingContext2D,
  map: ViewMapping,
  p: { x: number; y: number },
  color: string,
  radius: number,
  filled: boolean,
): void {
  const c = workspaceToCanvas(p, map);
  ctx.beginPath();
  ctx.arc(c.px, c.py, radius, 0, 2 * Math.PI);
  if (filled) {
    ctx.fillStyle = color;
    ctx.fill();
  } else {
    ctx.strokeStyle = color;
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }
}

function drawArrow(
  ctx: CanvasRenderingContext2D,
  map: ViewMapping,
  rec: TraceRecord,
  visual: FeedbackVisual,
): void {
  const from = workspaceToCanvas({ x: rec.leader_pos[0], y: rec.leader_pos[1] }, map);
  const len = visual.arrowLength * ARROW_MAX_PX;
  const dir = visual.arrowDir!;
  const tox = from.px + dir.x * len;
  const toy = from.py - dir.y * len;
  ctx.strokeStyle = "#e0a13d";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(from.px, from.py);
  ctx.lineTo(tox, toy);
  ctx.stroke();
  const angle = Math.atan2(-(dir.y), dir.x);
  ctx.beginPath();
  ctx.moveTo(tox, toy);
  ctx.lineTo(tox - 9 * Math.cos(angle - 0.4), toy - 9 * Math.sin(angle - 0.4));
  ctx.lineTo(tox - 9 * Math.cos(angle + 0.4), toy - 9 * Math.sin(angle + 0.4));
  ctx.closePath();
  ctx.fillStyle = "#e0a13d";
  ctx.fill();
}

function drawHud(ctx: CanvasRenderingContext2D, map: ViewMapping, scene: Scene): void {
  ctx.font = "13px monospace";
  ctx.fillStyle = "#c8c8c8";
  const factor = scene.visual ? scene.visual.factorText : "-";
  const force = scene.visual
    ? Math.hypot(...scene.visual.renderedForce).toFixed(2)
    : "-";
  ctx.fillText(`factor ${factor}   rendered |F| ${force} N`, 10, map.height - 12);
  if (scene.inputClamped) {
    ctx.fillStyle = "#e06c5c";
    ctx.fillText("workspace limit", 10, map.height - 30);
  }
  if (scene.stale) {
    ctx.fillStyle = "#e0c060";
    ctx.fillRect(0, 0, map.width, 24);
    ctx.fillStyle = "#1a1a1a";
    ctx.fillText("stale data: no trace updates from the bridge", 10, 16);
  }
}
