// Session state: a pure reducer over incoming bridge messages. The
// render loop reads the latest snapshot; handlers never mutate
// simulation state themselves.

import type { ElementInfo, FramePayload, Message, PeerEntry, Snapshot } from "./protocol.js";
import { lidarFromWire } from "./protocol.js";

export type Connection = "connecting" | "connected" | "disconnected";

export interface FrameView {
  timestamp: number;
  throttle: number;
  steering: number;
  speed: number;
  encTicks: [number, number];
  ips: [number, number, number];
  yaw: number;
  collision: boolean;
  mode: string;
  lidar: number[];
}

export interface UiSessionState {
  connection: Connection;
  sceneName: string;
  bounds: [number, number, number, number];
  collisionPolygons: number[][][];
  laneBounds: number[][][];
  selectedVehicle: string | null;
  vehicleModes: Record<string, string>;
  frames: Record<string, FrameView>;
  peers: PeerEntry[];
  elements: Record<string, ElementInfo>;
  recording: boolean;
  recordText: string | null;
  toasts: string[];
}

export function initialState(): UiSessionState {
  return {
    connection: "connecting",
    sceneName: "",
    bounds: [-5, -5, 5, 5],
    collisionPolygons: [],
    laneBounds: [],
    selectedVehicle: null,
    vehicleModes: {},
    frames: {},
    peers: [],
    elements: {},
    recording: false,
    recordText: null,
    toasts: [],
  };
}

function frameView(timestamp: number, payload: FramePayload): FrameView {
  return {
    timestamp,
    throttle: payload.throttle_fb,
    steering: payload.steer_fb,
    speed: payload.speed,
    encTicks: payload.enc_ticks,
    ips: payload.ips,
    yaw: payload.imu.euler[2],
    collision: payload.collision,
    mode: payload.mode,
    lidar: lidarFromWire(payload.lidar),
  };
}

function applySnapshot(state: UiSessionState, snap: Snapshot): UiSessionState {
  const modes: Record<string, string> = {};
  for (const [vid, v] of Object.entries(snap.vehicles)) modes[vid] = v.mode;
  const vehicles = Object.keys(snap.vehicles);
  return {
    ...state,
    connection: "connected",
    sceneName: snap.scene,
    bounds: snap.bounds,
    collisionPolygons: snap.scene_geometry?.collision ?? [],
    laneBounds: snap.scene_geometry?.lane_bounds ?? [],
    vehicleModes: modes,
    elements: { ...snap.elements },
    selectedVehicle: state.selectedVehicle ?? vehicles[0] ?? null,
    frames: {},  // resync: drop anything older than the snapshot
    peers: [],
  };
}

export function reduce(state: UiSessionState, msg: Message): UiSessionState {
  switch (msg.type) {
    case "ACK": {
      const payload = msg.payload ?? {};
      if (payload.snapshot) return applySnapshot(state, payload.snapshot as Snapshot);
      let next = state;
      if (payload.recording === true) next = { ...next, recording: true };
      if (typeof payload.rows === "number" && !payload.text) next = { ...next, recording: false };
      if (typeof payload.text === "string") next = { ...next, recordText: payload.text, recording: false };
      if (payload.mode && msg.vehicle_id) {
        next = { ...next, vehicleModes: { ...next.vehicleModes, [msg.vehicle_id]: payload.mode } };
      }
      if (payload.element_id && payload.state) {
        next = applyElementChange(next, payload.element_id, payload.state, payload.version ?? 0);
      }
      if (payload.code === "NOT_CONTROLLER") {
        next = { ...next, toasts: [...next.toasts, "not the controller for this vehicle"] };
      }
      return next;
    }
    case "FRAME": {
      if (!msg.vehicle_id) return state;
      const existing = state.frames[msg.vehicle_id];
      if (existing && msg.timestamp <= existing.timestamp) return state; // never render stale
      const view = frameView(msg.timestamp, msg.payload as FramePayload);
      let next: UiSessionState = {
        ...state,
        frames: { ...state.frames, [msg.vehicle_id]: view },
        vehicleModes: { ...state.vehicleModes, [msg.vehicle_id]: view.mode },
      };
      for (const [eid, st] of Object.entries((msg.payload as FramePayload).elements ?? {})) {
        if (next.elements[eid] && next.elements[eid].state !== st) {
          next = { ...next, elements: { ...next.elements, [eid]: { ...next.elements[eid], state: st } } };
        }
      }
      return next;
    }
    case "PEERS":
      return { ...state, peers: msg.payload as PeerEntry[] };
    case "SCM_EVENT": {
      const { element_id, state: elementState, version } = msg.payload ?? {};
      return applyElementChange(state, element_id, elementState, version ?? 0);
    }
    case "ERR": {
      const detail = msg.payload?.detail ?? msg.payload?.code ?? "error";
      return { ...state, toasts: [...state.toasts, String(detail)] };
    }
    default:
      return state;
  }
}

function applyElementChange(
  state: UiSessionState, elementId: string, elementState: string, version: number,
): UiSessionState {
  const element = state.elements[elementId];
  if (!element) return state;
  if (version <= element.version) return state; // stale update
  return {
    ...state,
    elements: { ...state.elements, [elementId]: { ...element, state: elementState, version } },
  };
}

export function setConnection(state: UiSessionState, connection: Connection): UiSessionState {
  return { ...state, connection };
}
