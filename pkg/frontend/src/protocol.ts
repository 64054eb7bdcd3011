// Wire protocol shared with the simulation bridge: one JSON object per
// WebSocket message, LIDAR no-returns encoded as null.

export type Role = "vehicle-controller" | "observer" | "scm" | "ui";

export const MESSAGE_TYPES = [
  "HELLO", "FRAME", "PEERS", "CMD", "MODE", "RESET", "RECORD",
  "SCM_EVENT", "ACK", "ERR", "ENV_RESET", "ENV_STEP",
] as const;

export type MessageType = (typeof MESSAGE_TYPES)[number];

export interface Message {
  type: MessageType;
  vehicle_id: string | null;
  seq: number;
  timestamp: number;
  payload: any;
}

export interface FramePayload {
  throttle_fb: number;
  steer_fb: number;
  enc_ticks: [number, number];
  ips: [number, number, number];
  imu: { accel: number[]; gyro: number[]; euler: number[]; quat: number[] };
  lidar: (number | null)[];
  speed: number;
  collision: boolean;
  mode: string;
  elements: Record<string, string>;
}

export interface PeerEntry {
  vehicle_id: string;
  position: [number, number];
  yaw: number;
  velocity: number;
  timestamp: number;
}

export interface ElementInfo {
  kind: string;
  state: string | null;
  version: number;
  pose: [number, number, number];
  detection_radius: number;
}

export interface Snapshot {
  scene: string;
  t: number;
  dt: number;
  bounds: [number, number, number, number];
  vehicles: Record<string, { mode: string; position: [number, number]; yaw: number; velocity: number }>;
  elements: Record<string, ElementInfo>;
  scene_geometry: { collision: number[][][]; lane_bounds: number[][][] };
}

export function message(
  type: MessageType,
  fields: Partial<Omit<Message, "type">> = {},
): Message {
  return {
    type,
    vehicle_id: fields.vehicle_id ?? null,
    seq: fields.seq ?? 0,
    timestamp: fields.timestamp ?? 0,
    payload: fields.payload ?? {},
  };
}

export function encode(msg: Message): string {
  return JSON.stringify(msg);
}

export function decode(text: string): Message {
  const raw = JSON.parse(text);
  if (typeof raw !== "object" || raw === null || typeof raw.type !== "string") {
    throw new Error("message must be an object with a type");
  }
  if (!(MESSAGE_TYPES as readonly string[]).includes(raw.type)) {
    throw new Error(`unknown message type ${raw.type}`);
  }
  return {
    type: raw.type,
    vehicle_id: raw.vehicle_id ?? null,
    seq: raw.seq ?? 0,
    timestamp: raw.timestamp ?? 0,
    payload: raw.payload ?? {},
  };
}

export function lidarFromWire(values: (number | null)[]): number[] {
  return values.map((v) => (v === null ? Infinity : v));
}
