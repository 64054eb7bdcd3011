"""Smart City Manager: vehicle/element registry, monitoring API, and
the sign/light behavior-trim planner.

The manager is a separate process in production: it attaches to the
bridge as a `scm` client, mirrors every peer/element broadcast into
its database, and exposes an HTTP API for monitoring and control.
Writes travel back through the bridge and are acknowledged only after
the simulation applied them.
"""

from __future__ import annotations

import asyncio
import math
from dataclasses import dataclass, field, replace

import websockets
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import protocol as proto
from .dynamics import ActuationCommand
from .session import clamp_command


@dataclass(frozen=True)
class ElementSnapshot:
    element_id: str
    kind: str
    state: str | None
    version: int
    pose: tuple[float, float, float]
    detection_radius: float


@dataclass(frozen=True)
class VehicleSnapshot:
    vehicle_id: str
    position: tuple[float, float]
    yaw: float
    velocity: float
    timestamp: float
    mode: str


@dataclass
class ScmDatabase:
    vehicles: dict[str, VehicleSnapshot] = field(default_factory=dict)
    elements: dict[str, ElementSnapshot] = field(default_factory=dict)
    event_log: list[tuple[float, str, str]] = field(default_factory=list)
    stale: bool = True

    def log(self, timestamp: float, entity: str, change: str) -> None:
        self.event_log.append((timestamp, entity, change))

    def events_since(self, t: float) -> list[tuple[float, str, str]]:
        return [e for e in self.event_log if e[0] >= t]


# ---------------------------------------------------------------------------
# bridge sync client

class ScmService:
    """Keeps an ScmDatabase in lockstep with the bridge."""

    def __init__(self, bridge_url: str):
        self.bridge_url = bridge_url
        self.db = ScmDatabase()
        self._ws = None
        self._seq = 0
        self._pending: dict[int, asyncio.Future] = {}
        self._task: asyncio.Task | None = None

    async def connect(self) -> None:
        self._ws = await websockets.connect(self.bridge_url)
        self._seq += 1
        await self._ws.send(proto.encode(proto.message(
            proto.HELLO, seq=self._seq,
            payload={"role": "scm", "subscriptions": ["peers", "events"]},
        )))
        ack = proto.decode(await self._ws.recv())
        self._apply_snapshot(ack)
        self.db.stale = False
        self._task = asyncio.get_running_loop().create_task(self._recv_loop())

    async def close(self) -> None:
        self.db.stale = True
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
        if self._ws is not None:
            await self._ws.close()

    def _apply_snapshot(self, ack: dict) -> None:
        # Full-state resync on (re)connect: no version gaps afterwards.
        snapshot = (ack.get("payload") or {}).get("snapshot") or {}
        t = float(snapshot.get("t", 0.0))
        for eid, el in (snapshot.get("elements") or {}).items():
            self.db.elements[eid] = ElementSnapshot(
                eid, el["kind"], el.get("state"), int(el.get("version", 0)),
                tuple(el.get("pose", (0.0, 0.0, 0.0))), float(el.get("detection_radius", 0.5)),
            )
        for vid, v in (snapshot.get("vehicles") or {}).items():
            self.db.vehicles[vid] = VehicleSnapshot(
                vid, tuple(v.get("position", (0.0, 0.0))), float(v.get("yaw", 0.0)),
                float(v.get("velocity", 0.0)), t, v.get("mode", "manual"),
            )
        self.db.log(t, "scm", "snapshot-sync")

    async def _recv_loop(self) -> None:
        try:
            async for raw in self._ws:
                self._on_message(proto.decode(raw))
        except websockets.exceptions.ConnectionClosed:
            self.db.stale = True

    def _on_message(self, msg: dict) -> None:
        if msg["type"] == proto.PEERS:
            for peer in msg["payload"]:
                vid = peer["vehicle_id"]
                mode = self.db.vehicles[vid].mode if vid in self.db.vehicles else "manual"
                self.db.vehicles[vid] = VehicleSnapshot(
                    vid, tuple(peer["position"]), float(peer["yaw"]),
                    float(peer["velocity"]), float(peer["timestamp"]), mode,
                )
        elif msg["type"] == proto.SCM_EVENT:
            payload = msg["payload"]
            eid = payload["element_id"]
            if eid in self.db.elements:
                self.db.elements[eid] = replace(
                    self.db.elements[eid], state=payload["state"], version=int(payload["version"])
                )
            self.db.log(float(msg.get("timestamp", 0.0)), eid, f"state={payload['state']}")
        elif msg["type"] == proto.ACK:
            future = self._pending.pop(msg["seq"], None)
            if future is not None and not future.done():
                future.set_result(msg)
        elif msg["type"] == proto.ERR:
            future = self._pending.pop(msg.get("seq", -1), None)
            if future is not None and not future.done():
                future.set_result(msg)

    async def _request(self, msg_type: str, vehicle_id: str | None, payload: dict) -> dict:
        self._seq += 1
        seq = self._seq
        future = asyncio.get_running_loop().create_future()
        self._pending[seq] = future
        await self._ws.send(proto.encode(proto.message(msg_type, vehicle_id=vehicle_id, seq=seq, payload=payload)))
        return await asyncio.wait_for(future, timeout=5.0)

    async def set_light(self, element_id: str, state: str) -> dict:
        reply = await self._request(proto.SCM_EVENT, None, {"element_id": element_id, "state": state})
        payload = reply.get("payload") or {}
        if reply["type"] == proto.ACK and payload.get("code") == proto.OK:
            self.db.elements[element_id] = replace(
                self.db.elements[element_id], state=payload["state"], version=int(payload["version"])
            )
        return reply

    async def set_mode(self, vehicle_id: str, mode: str) -> dict:
        reply = await self._request(proto.MODE, vehicle_id, {"mode": mode})
        payload = reply.get("payload") or {}
        if reply["type"] == proto.ACK and payload.get("code") == proto.OK and vehicle_id in self.db.vehicles:
            self.db.vehicles[vehicle_id] = replace(self.db.vehicles[vehicle_id], mode=mode)
        return reply

    async def send_command(self, vehicle_id: str, command: ActuationCommand) -> dict:
        return await self._request(proto.CMD, vehicle_id,
                                   {"throttle": command.throttle, "steering": command.steering})


# ---------------------------------------------------------------------------
# HTTP API

def create_scm_app(service: ScmService) -> FastAPI:
    app = FastAPI(title="city-manager")
    db = service.db

    @app.get("/vehicles")
    def vehicles():
        return {
            vid: {"position": list(v.position), "yaw": v.yaw, "velocity": v.velocity,
                  "timestamp": v.timestamp, "mode": v.mode}
            for vid, v in db.vehicles.items()
        }

    @app.get("/elements")
    def elements():
        return {
            eid: {"kind": e.kind, "state": e.state, "version": e.version,
                  "pose": list(e.pose), "detection_radius": e.detection_radius}
            for eid, e in db.elements.items()
        }

    @app.get("/events")
    def events(since: float = 0.0):
        return [{"timestamp": t, "entity": entity, "change": change}
                for t, entity, change in db.events_since(since)]

    @app.put("/elements/{element_id}/state")
    async def put_element_state(element_id: str, body: dict):
        if element_id not in db.elements:
            return JSONResponse({"error": f"unknown element '{element_id}'"}, status_code=404)
        reply = await service.set_light(element_id, body.get("state"))
        payload = reply.get("payload") or {}
        if reply["type"] != proto.ACK or payload.get("code") != proto.OK:
            return JSONResponse({"error": payload.get("detail", "rejected"),
                                 "code": payload.get("code")}, status_code=422)
        return {"element_id": element_id, "state": payload["state"], "version": payload["version"]}

    @app.put("/vehicles/{vehicle_id}/mode")
    async def put_vehicle_mode(vehicle_id: str, body: dict):
        if vehicle_id not in db.vehicles:
            return JSONResponse({"error": f"unknown vehicle '{vehicle_id}'"}, status_code=404)
        reply = await service.set_mode(vehicle_id, body.get("mode"))
        payload = reply.get("payload") or {}
        if reply["type"] != proto.ACK or payload.get("code") != proto.OK:
            return JSONResponse({"error": payload.get("detail", "rejected"),
                                 "code": payload.get("code")}, status_code=422)
        return {"vehicle_id": vehicle_id, "mode": payload["mode"]}

    return app


# ---------------------------------------------------------------------------
# behavior planner

@dataclass(frozen=True)
class BehaviorRule:
    """Trim applied while the vehicle is near a matching element.

    `trigger_state` narrows light rules to one state; `stop` latches a
    zero-throttle hold until `resume_on` is observed.
    """
    trigger_kind: str
    trigger_state: str | None = None
    throttle_trim: float = 0.0
    steering_trim: float = 0.0
    stop: bool = False
    resume_on: str | None = None

    def __post_init__(self):
        if abs(self.throttle_trim) > 1.0 or abs(self.steering_trim) > 1.0:
            raise ValueError("trims must lie in [-1, 1]")
        if self.stop and self.throttle_trim != 0.0:
            raise ValueError("a stop rule cannot also trim throttle")


def behavior_planner(
    pose: tuple[float, float, float],
    base_command: ActuationCommand,
    db: ScmDatabase,
    rules: list[BehaviorRule],
    latched_stops: frozenset[str] = frozenset(),
) -> tuple[ActuationCommand, frozenset[str]]:
    """Modulate a base command by the rules matching nearby elements.

    Pure function of its inputs: the stop latch travels in and out as
    `latched_stops` (element ids currently holding the vehicle).
    """
    x, y, _ = pose
    throttle, steering = base_command.throttle, base_command.steering
    latches = set(latched_stops)
    stopped = False
    for element in db.elements.values():
        distance = math.hypot(element.pose[0] - x, element.pose[1] - y)
        in_range = distance <= element.detection_radius
        for rule in rules:
            if rule.trigger_kind != element.kind:
                continue
            if rule.stop:
                if element.element_id in latches:
                    if element.state == rule.resume_on:
                        latches.discard(element.element_id)
                    else:
                        stopped = True
                elif in_range and (rule.trigger_state is None or element.state == rule.trigger_state):
                    latches.add(element.element_id)
                    stopped = True
            elif in_range and (rule.trigger_state is None or element.state == rule.trigger_state):
                throttle += rule.throttle_trim
                steering += rule.steering_trim
    if stopped:
        throttle = 0.0
    command, _ = clamp_command(throttle, steering)
    return command, frozenset(latches)


# ---------------------------------------------------------------------------
# waypoint follower (base trajectory source for the planner)

@dataclass(frozen=True)
class FollowerParams:
    lookahead: float = 0.25
    cruise_throttle: float = 0.5
    slowdown_gain: float = 2.0
    goal_tolerance: float = 0.05
    wheelbase: float = 0.19
    steer_limit: float = math.radians(30.0)


def waypoint_follower(
    pose: tuple[float, float, float],
    path: list[tuple[float, float]],
    params: FollowerParams = FollowerParams(),
) -> tuple[ActuationCommand, bool]:
    """Pure-pursuit steering toward a lookahead point with proportional
    speed control; returns (command, done)."""
    if not path:
        raise ValueError("path must not be empty")
    x, y, psi = pose
    goal = path[-1]
    remaining = math.hypot(goal[0] - x, goal[1] - y)
    if remaining <= params.goal_tolerance:
        return ActuationCommand(0.0, 0.0), True

    # Lookahead: first path point at least `lookahead` away, else the goal.
    target = goal
    for point in path:
        if math.hypot(point[0] - x, point[1] - y) >= params.lookahead:
            target = point
            break
    dx, dy = target[0] - x, target[1] - y
    heading_error = math.atan2(dy, dx) - psi
    heading_error = math.atan2(math.sin(heading_error), math.cos(heading_error))
    ld = max(math.hypot(dx, dy), 1e-6)
    steer_angle = math.atan2(2.0 * params.wheelbase * math.sin(heading_error), ld)
    steering = max(-1.0, min(1.0, steer_angle / params.steer_limit))
    throttle = max(0.0, min(params.cruise_throttle, params.slowdown_gain * remaining))
    return ActuationCommand(throttle, steering), False
