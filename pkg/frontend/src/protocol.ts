// Binary frame encoding for operator input plus the JSON message types the
// bridge streams back. Layout mirrors the server codec byte for byte
// (little-endian, one type-tag byte, fixed header, payload); the tests pin
// it against reference vectors generated by the server implementation.

export const TAG_OPERATOR_POSE = 0x04;

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface Quat {
  x: number;
  y: number;
  z: number;
  w: number;
}

export function encodeOperatorPose(
  seq: number,
  timestampUs: number,
  position: Vec3,
  orientation: Quat,
): ArrayBuffer {
  const buf = new ArrayBuffer(1 + 4 + 8 + 7 * 8);
  const view = new DataView(buf);
  view.setUint8(0, TAG_OPERATOR_POSE);
  view.setUint32(1, seq >>> 0, true);
  view.setBigUint64(5, BigInt(Math.max(0, Math.round(timestampUs))), true);
  const doubles = [
    position.x,
    position.y,
    position.z,
    orientation.x,
    orientation.y,
    orientation.z,
    orientation.w,
  ];
  doubles.forEach((v, i) => view.setFloat64(13 + 8 * i, v, true));
  return buf;
}

// --- JSON stream from the bridge -------------------------------------------

export interface TraceRecord {
  tick: number;
  t: number;
  leader_pos: number[];
  leader_quat: number[];
  operator_pos: number[];
  target_pos: number[];
  target_quat: number[];
  follower_pos: number[];
  follower_quat: number[];
  leader_q: number[];
  follower_q: number[];
  delta_ee: number[];
  v_cartesian: number[];
  factor: number;
  kp: number[];
  kd: number[];
  contact_force: number[];
  rendered_force: number[];
  contact: boolean;
}

export interface ScenarioMeta {
  scenario: string;
  tick_rate_hz: number;
  leader_chain: string;
  follower_chain: string;
  leader_joints: number;
  follower_joints: number;
  leader_workspace_radius: number;
  follower_workspace_radius: number;
  leader_origin: number[];
  follower_origin: number[];
  retarget_scale: number;
  orientation_source: number[];
  factor_clamp: number;
  visible_obstacles: {
    normal: number[];
    offset: number;
    stiffness: number;
    damping: number;
  }[];
  stream_decimation: number;
}

export type BridgeMessage =
  | { type: "scenario"; meta: ScenarioMeta }
  | { type: "trace"; record: TraceRecord }
  | { type: "error"; message: string };

export function parseBridgeMessage(text: string): BridgeMessage {
  const obj = JSON.parse(text);
  if (obj.type === "scenario" || obj.type === "trace" || obj.type === "error") {
    return obj as BridgeMessage;
  }
  throw new Error(`unknown bridge message type: ${obj.type}`);
}
