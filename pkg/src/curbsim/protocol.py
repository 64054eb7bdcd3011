"""Wire protocol: JSON text messages over WebSocket.

Every message is one JSON object {type, vehicle_id, seq, timestamp,
payload}. Numbers are SI units; LIDAR no-returns (infinity) are
encoded as JSON null. See README for the full schema.
"""

from __future__ import annotations

import json
import math
from typing import Any

from .errors import ProtocolError

# message types
HELLO = "HELLO"
FRAME = "FRAME"
PEERS = "PEERS"
CMD = "CMD"
MODE = "MODE"
RESET = "RESET"
RECORD = "RECORD"
SCM_EVENT = "SCM_EVENT"
ACK = "ACK"
ERR = "ERR"
ENV_RESET = "ENV_RESET"
ENV_STEP = "ENV_STEP"

MESSAGE_TYPES = (HELLO, FRAME, PEERS, CMD, MODE, RESET, RECORD, SCM_EVENT, ACK, ERR, ENV_RESET, ENV_STEP)

ROLES = ("vehicle-controller", "observer", "scm", "ui")

# error / ack codes
OK = "OK"
WARN_CLAMPED = "WARN_CLAMPED"
STALE = "STALE"
NOT_CONTROLLER = "NOT_CONTROLLER"
CONTROL_CONFLICT = "CONTROL_CONFLICT"
UNKNOWN_VEHICLE = "UNKNOWN_VEHICLE"
BAD_MESSAGE = "BAD_MESSAGE"
INVALID_STATE = "INVALID_STATE"
NOT_ALLOWED = "NOT_ALLOWED"


def message(
    msg_type: str,
    vehicle_id: str | None = None,
    seq: int = 0,
    timestamp: float = 0.0,
    payload: dict | list | None = None,
) -> dict:
    return {
        "type": msg_type,
        "vehicle_id": vehicle_id,
        "seq": seq,
        "timestamp": timestamp,
        "payload": payload if payload is not None else {},
    }


def encode(msg: dict) -> str:
    return json.dumps(msg, separators=(",", ":"), allow_nan=False)


def decode(text: str | bytes) -> dict:
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(BAD_MESSAGE, f"not valid JSON: {exc}") from exc
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError(BAD_MESSAGE, "message must be an object with a 'type'")
    if msg["type"] not in MESSAGE_TYPES:
        raise ProtocolError(BAD_MESSAGE, f"unknown message type {msg['type']!r}")
    msg.setdefault("vehicle_id", None)
    msg.setdefault("seq", 0)
    msg.setdefault("timestamp", 0.0)
    msg.setdefault("payload", {})
    return msg


def lidar_to_wire(ranges) -> list:
    return [None if math.isinf(r) else float(r) for r in ranges]


def lidar_from_wire(values) -> list[float]:
    return [math.inf if v is None else float(v) for v in values]


def frame_payload(frame, vehicle, element_states: dict[str, str | None]) -> dict[str, Any]:
    """FRAME message payload for one vehicle."""
    ch = vehicle.state.chassis
    return {
        "throttle_fb": frame.throttle_fb,
        "steer_fb": frame.steer_fb,
        "enc_ticks": list(frame.enc_ticks),
        "ips": [float(v) for v in frame.ips],
        "imu": {
            "accel": [float(v) for v in frame.imu_accel],
            "gyro": [float(v) for v in frame.imu_gyro],
            "euler": [float(v) for v in frame.imu_orient_euler],
            "quat": [float(v) for v in frame.imu_orient_quat],
        },
        "lidar": lidar_to_wire(frame.lidar_ranges),
        "speed": math.hypot(ch.v_x, ch.v_y),
        "collision": vehicle.state.collision,
        "mode": vehicle.mode,
        "elements": {eid: state for eid, state in element_states.items() if state is not None},
    }


def peers_payload(peers) -> list[dict]:
    return [
        {
            "vehicle_id": p.vehicle_id,
            "position": [p.position[0], p.position[1]],
            "yaw": p.yaw,
            "velocity": p.velocity,
            "timestamp": p.timestamp,
        }
        for p in peers
    ]
