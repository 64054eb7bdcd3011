"""WebSocket bridge between the simulation loop and external clients.

The simulation loop is the single writer of simulation state. Client
commands are staged on arrival and consumed at tick boundaries
(latest wins); egress fans out through per-client queues that coalesce
to the latest message per channel, so a slow or dead client can never
stall the tick.
"""

from __future__ import annotations

import asyncio
import time
from dataclasses import dataclass, field

import websockets
from websockets.asyncio.server import serve

from . import protocol as proto
from .envs import IntersectionEnv
from .errors import ProtocolError, RecordError, SceneError
from .recorder import Recorder
from .session import Session


@dataclass
class ClientInfo:
    role: str
    ws: object = None
    vehicle_id: str | None = None
    subscriptions: frozenset = frozenset()
    last_cmd_seq: dict[str, int] = field(default_factory=dict)
    outbox: dict = field(default_factory=dict)
    wakeup: asyncio.Event = field(default_factory=asyncio.Event)
    sender: asyncio.Task | None = None
    drops: int = 0
    send_seq: int = 0


class BridgeServer:
    def __init__(self, session: Session, host: str = "127.0.0.1", port: int = 0, realtime: bool = True):
        self.session = session
        self.host = host
        self.port = port
        self.realtime = realtime
        self.clients: dict = {}
        self.controllers: dict[str, object] = {}
        self.recorder: Recorder | None = None
        self.env: IntersectionEnv | None = None
        self._server = None
        self._tick_task: asyncio.Task | None = None
        self._running = False
        self.tick_durations: list[float] = []
        session.scene.subscribe(self._on_element_change)

    # -- lifecycle -----------------------------------------------------------

    async def start(self) -> None:
        self._server = await serve(self._handler, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        self._running = True
        if self.realtime:
            self._tick_task = asyncio.get_running_loop().create_task(self._tick_loop())

    async def stop(self) -> None:
        self._running = False
        if self._tick_task is not None:
            self._tick_task.cancel()
            try:
                await self._tick_task
            except asyncio.CancelledError:
                pass
        for ws, info in list(self.clients.items()):
            if info.sender is not None:
                info.sender.cancel()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}"

    @property
    def total_drops(self) -> int:
        return sum(info.drops for info in self.clients.values())

    # -- simulation loop -----------------------------------------------------

    async def tick(self) -> None:
        """Advance one physics tick and fan results out to clients."""
        started = time.perf_counter()
        frames = self.session.step()
        self.tick_durations.append(time.perf_counter() - started)
        peers = self.session.peer_states()
        states = {eid: el.state for eid, el in self.session.scene.traffic_elements.items()}
        t = self.session.clock.t
        for ws, info in self.clients.items():
            if "peers" in info.subscriptions:
                others = [p for p in peers if p.vehicle_id != info.vehicle_id]
                self._enqueue(info, ("PEERS",), proto.message(proto.PEERS, timestamp=t, payload=proto.peers_payload(others)))
            if frames and "frames" in info.subscriptions:
                for vehicle_id, frame in frames:
                    msg = proto.message(
                        proto.FRAME,
                        vehicle_id=vehicle_id,
                        timestamp=frame.timestamp,
                        payload=proto.frame_payload(frame, self.session.vehicles[vehicle_id], states),
                    )
                    self._enqueue(info, (proto.FRAME, vehicle_id), msg)
        await asyncio.sleep(0)

    async def step_ticks(self, n: int) -> None:
        for _ in range(n):
            await self.tick()

    async def _tick_loop(self) -> None:
        loop = asyncio.get_running_loop()
        next_time = loop.time()
        while self._running:
            await self.tick()
            next_time += self.session.clock.dt
            delay = next_time - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                next_time = loop.time()  # fell behind; don't spiral

    # -- egress ----------------------------------------------------------------

    def _enqueue(self, info: ClientInfo, key, msg: dict, preserve_seq: bool = False) -> None:
        if key in info.outbox:
            info.drops += 1
        info.send_seq += 1
        if not preserve_seq:
            msg["seq"] = info.send_seq
        info.outbox[key] = msg
        info.wakeup.set()

    def _on_element_change(self, element_id: str, state: str, version: int) -> None:
        msg = proto.message(
            proto.SCM_EVENT,
            timestamp=self.session.clock.t,
            payload={"element_id": element_id, "state": state, "version": version},
        )
        for info in self.clients.values():
            if "events" in info.subscriptions:
                self._enqueue(info, (proto.SCM_EVENT, element_id), dict(msg))

    async def _sender_loop(self, ws, info: ClientInfo) -> None:
        try:
            while True:
                await info.wakeup.wait()
                info.wakeup.clear()
                while info.outbox:
                    key = next(iter(info.outbox))
                    msg = info.outbox.pop(key)
                    await ws.send(proto.encode(msg))
        except (websockets.exceptions.ConnectionClosed, asyncio.CancelledError):
            pass

    # -- ingress ---------------------------------------------------------------

    async def _handler(self, ws) -> None:
        info: ClientInfo | None = None
        try:
            raw = await ws.recv()
            try:
                hello = proto.decode(raw)
                info = self._register(ws, hello)
            except ProtocolError as exc:
                await ws.send(proto.encode(proto.message(proto.ERR, payload={"code": exc.code, "detail": str(exc)})))
                await ws.close()
                return
            info.sender = asyncio.get_running_loop().create_task(self._sender_loop(ws, info))
            await ws.send(proto.encode(self._hello_ack(info)))
            async for raw in ws:
                request_seq, reply = self._dispatch(info, raw)
                if reply is not None:
                    # replies echo the request's seq so clients can match them
                    reply["seq"] = request_seq
                    self._enqueue(info, ("reply", request_seq), reply, preserve_seq=True)
        except websockets.exceptions.ConnectionClosed:
            pass
        finally:
            self._unregister(ws, info)

    def _register(self, ws, hello: dict) -> ClientInfo:
        if hello["type"] != proto.HELLO:
            raise ProtocolError(proto.BAD_MESSAGE, "first message must be HELLO")
        payload = hello.get("payload") or {}
        role = payload.get("role")
        if role not in proto.ROLES:
            raise ProtocolError(proto.BAD_MESSAGE, f"unknown role {role!r}")
        vehicle_id = payload.get("vehicle_id")
        subs = frozenset(payload.get("subscriptions", ["frames", "peers", "events"]))
        if role == "vehicle-controller":
            if vehicle_id not in self.session.vehicles:
                raise ProtocolError(proto.UNKNOWN_VEHICLE, f"no vehicle {vehicle_id!r}")
            if vehicle_id in self.controllers:
                raise ProtocolError(proto.CONTROL_CONFLICT, f"{vehicle_id} already has a controller")
            self.controllers[vehicle_id] = ws
        info = ClientInfo(role=role, ws=ws, vehicle_id=vehicle_id, subscriptions=subs)
        self.clients[ws] = info
        return info

    def _unregister(self, ws, info: ClientInfo | None) -> None:
        self.clients.pop(ws, None)
        if info is not None and info.sender is not None:
            info.sender.cancel()
        for vid, owner in list(self.controllers.items()):
            if owner is ws:
                del self.controllers[vid]

    def _hello_ack(self, info: ClientInfo) -> dict:
        snapshot = {
            "scene": self.session.scene.name,
            "t": self.session.clock.t,
            "dt": self.session.clock.dt,
            "bounds": list(self.session.scene.bounds),
            "vehicles": {
                vid: {"mode": v.mode,
                      "position": [v.state.chassis.x, v.state.chassis.y],
                      "yaw": v.state.chassis.psi,
                      "velocity": (v.state.chassis.v_x**2 + v.state.chassis.v_y**2) ** 0.5}
                for vid, v in self.session.vehicles.items()
            },
            "elements": {
                eid: {"kind": el.kind, "state": el.state, "version": el.version,
                      "pose": list(el.pose), "detection_radius": el.detection_radius}
                for eid, el in self.session.scene.traffic_elements.items()
            },
            "scene_geometry": {
                "collision": [[list(map(float, p)) for p in poly] for _, poly in self.session.scene.collision_polygons],
                "lane_bounds": [[list(map(float, p)) for p in line] for line in self.session.scene.lane_bounds],
            },
        }
        return proto.message(proto.ACK, vehicle_id=info.vehicle_id, timestamp=self.session.clock.t,
                             payload={"code": proto.OK, "snapshot": snapshot})


    # -- request dispatch --------------------------------------------------------

    def _dispatch(self, info: ClientInfo, raw) -> tuple[int, dict | None]:
        try:
            msg = proto.decode(raw)
        except ProtocolError as exc:
            return 0, proto.message(proto.ERR, payload={"code": exc.code, "detail": str(exc)})
        seq = msg.get("seq", 0)
        handler = {
            proto.CMD: self._on_cmd,
            proto.MODE: self._on_mode,
            proto.RESET: self._on_reset,
            proto.RECORD: self._on_record,
            proto.SCM_EVENT: self._on_scm_event,
            proto.ENV_RESET: self._on_env_reset,
            proto.ENV_STEP: self._on_env_step,
        }.get(msg["type"])
        if handler is None:
            return seq, proto.message(proto.ERR, payload={"code": proto.BAD_MESSAGE,
                                                          "detail": f"clients cannot send {msg['type']}"})
        try:
            return seq, handler(info, msg)
        except ProtocolError as exc:
            return seq, proto.message(proto.ERR, vehicle_id=msg.get("vehicle_id"),
                                      payload={"code": exc.code, "detail": str(exc)})
        except (SceneError, RecordError, ValueError) as exc:
            return seq, proto.message(proto.ERR, vehicle_id=msg.get("vehicle_id"),
                                      payload={"code": proto.INVALID_STATE, "detail": str(exc)})

    def _controls(self, info: ClientInfo, vehicle_id: str) -> bool:
        vehicle = self.session.vehicles.get(vehicle_id)
        if vehicle is None:
            raise ProtocolError(proto.UNKNOWN_VEHICLE, f"no vehicle {vehicle_id!r}")
        if vehicle.mode == "autonomous":
            return self.controllers.get(vehicle_id) is info.ws
        return info.role == "ui"

    def _on_cmd(self, info: ClientInfo, msg: dict) -> dict:
        vehicle_id = msg.get("vehicle_id")
        if not self._controls(info, vehicle_id):
            return proto.message(proto.ACK, vehicle_id=vehicle_id,
                                 payload={"code": proto.NOT_CONTROLLER})
        last = info.last_cmd_seq.get(vehicle_id, -1)
        if msg["seq"] <= last:
            return proto.message(proto.ACK, vehicle_id=vehicle_id, payload={"code": proto.STALE})
        info.last_cmd_seq[vehicle_id] = msg["seq"]
        payload = msg.get("payload") or {}
        throttle = float(payload.get("throttle", 0.0))
        steering = float(payload.get("steering", 0.0))
        was_clamped = self.session.stage_command(vehicle_id, throttle, steering)
        code = proto.WARN_CLAMPED if was_clamped else proto.OK
        return proto.message(proto.ACK, vehicle_id=vehicle_id, payload={"code": code})

    def _on_mode(self, info: ClientInfo, msg: dict) -> dict:
        if info.role not in ("ui", "scm"):
            raise ProtocolError(proto.NOT_ALLOWED, "mode switching is for ui/scm clients")
        vehicle_id = msg.get("vehicle_id")
        mode = (msg.get("payload") or {}).get("mode")
        if vehicle_id not in self.session.vehicles:
            raise ProtocolError(proto.UNKNOWN_VEHICLE, f"no vehicle {vehicle_id!r}")
        self.session.set_mode(vehicle_id, mode)
        return proto.message(proto.ACK, vehicle_id=vehicle_id, payload={"code": proto.OK, "mode": mode})

    def _on_reset(self, info: ClientInfo, msg: dict) -> dict:
        self.session.reset()
        return proto.message(proto.ACK, payload={"code": proto.OK, "t": self.session.clock.t})

    def _on_record(self, info: ClientInfo, msg: dict) -> dict:
        action = (msg.get("payload") or {}).get("action")
        if action == "start":
            if self.recorder is not None and self.recorder.recording:
                raise RecordError("recorder already running")
            self.recorder = Recorder()
            self.recorder.start(self.session)
            return proto.message(proto.ACK, payload={"code": proto.OK, "recording": True})
        if action == "stop":
            if self.recorder is None:
                raise RecordError("recorder is not running")
            self.recorder.stop(self.session)
            return proto.message(proto.ACK, payload={"code": proto.OK, "rows": self.recorder.rows})
        if action == "export":
            if self.recorder is None:
                raise RecordError("nothing recorded")
            payload = msg.get("payload") or {}
            text = self.recorder.export()
            out = {"code": proto.OK, "rows": self.recorder.rows}
            path = payload.get("path")
            if path:
                self.recorder.export_to(path)
                out["path"] = path
            if payload.get("inline"):
                out["text"] = text
            return proto.message(proto.ACK, payload=out)
        raise ProtocolError(proto.BAD_MESSAGE, f"unknown record action {action!r}")

    def _on_scm_event(self, info: ClientInfo, msg: dict) -> dict:
        if info.role not in ("scm", "ui"):
            raise ProtocolError(proto.NOT_ALLOWED, "element writes are for scm/ui clients")
        payload = msg.get("payload") or {}
        element = self.session.set_element(payload.get("element_id"), payload.get("state"))
        return proto.message(proto.ACK, payload={"code": proto.OK, "element_id": element.id,
                                                 "state": element.state, "version": element.version})

    def _on_env_reset(self, info: ClientInfo, msg: dict) -> dict:
        payload = msg.get("payload") or {}
        scenario = payload.get("scenario", "single")
        seed = int(payload.get("seed", 0))
        self.env = IntersectionEnv(self.session.scene, self.session.cfg, scenario=scenario, seed=seed)
        observations = self.env.reset()
        return proto.message(proto.ACK, payload={"code": proto.OK, "observations": _obs_to_wire(observations)})

    def _on_env_step(self, info: ClientInfo, msg: dict) -> dict:
        if self.env is None:
            raise ProtocolError(proto.INVALID_STATE, "ENV_RESET first")
        payload = msg.get("payload") or {}
        actions = {str(k): int(v) for k, v in (payload.get("actions") or {}).items()}
        observations, steps = self.env.step(actions)
        return proto.message(
            proto.ACK,
            payload={
                "code": proto.OK,
                "observations": _obs_to_wire(observations),
                "steps": {
                    vid: {"reward": s.reward, "done": s.done, "done_reason": s.done_reason}
                    for vid, s in steps.items()
                },
            },
        )


def _obs_to_wire(observations) -> dict:
    return {
        vid: {"g": [obs.g[0], obs.g[1]],
              "peers": [[p[0], p[1], p[2], p[3]] for p in obs.peers]}
        for vid, obs in observations.items()
    }
