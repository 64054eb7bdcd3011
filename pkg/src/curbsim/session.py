"""Simulation session: vehicle fleet, fixed-step loop, sensor cadence.

One Session owns the clock, the scene's mutable element states, every
vehicle's state, and the staged actuation commands. Commands arrive
asynchronously but are consumed only at tick boundaries (latest wins),
so the physics trajectory depends solely on which command was staged
at which tick - the property the recorder and replay lean on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clock import SimClock
from .config import VehicleConfig
from .dynamics import ActuationCommand, VehicleState, vehicle_step
from .errors import SceneError
from .scene import OrientedRect, Scene, convex_overlap_strict, set_element_state
from .sensors import SensorFrame, build_frame, lidar_mount_transform, scan_lidar, vehicle_pose, world_velocity
from .transforms import compose

MODES = ("manual", "autonomous")


@dataclass(frozen=True)
class PeerState:
    vehicle_id: str
    position: tuple[float, float]
    yaw: float
    velocity: float
    timestamp: float


@dataclass
class Vehicle:
    vehicle_id: str
    spawn: tuple[float, float, float]
    state: VehicleState
    mode: str = "manual"
    staged: ActuationCommand = field(default_factory=ActuationCommand)
    applied: ActuationCommand = field(default_factory=ActuationCommand)
    prev_world_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    latest_scan: np.ndarray | None = None

    @staticmethod
    def spawned(vehicle_id: str, spawn: tuple[float, float, float]) -> "Vehicle":
        state = VehicleState()
        state.chassis.x, state.chassis.y, state.chassis.psi = spawn
        return Vehicle(vehicle_id, spawn, state)

    def respawn(self) -> None:
        state = VehicleState()
        state.chassis.x, state.chassis.y, state.chassis.psi = self.spawn
        self.state = state
        self.staged = ActuationCommand()
        self.applied = ActuationCommand()
        self.prev_world_velocity = np.zeros(3)
        self.latest_scan = None


def clamp_command(throttle: float, steering: float) -> tuple[ActuationCommand, bool]:
    clamped_t = max(-1.0, min(1.0, float(throttle)))
    clamped_s = max(-1.0, min(1.0, float(steering)))
    was_clamped = clamped_t != throttle or clamped_s != steering
    return ActuationCommand(clamped_t, clamped_s), was_clamped


class Session:
    def __init__(
        self,
        scene: Scene,
        cfg: VehicleConfig | None = None,
        n_vehicles: int = 1,
        seed: int = 0,
        dt: float = 0.01,
        sensor_rate_hz: float | None = None,
    ):
        self.scene = scene
        self.cfg = cfg or VehicleConfig()
        self.seed = int(seed)
        self.clock = SimClock(dt)
        self.rng = np.random.default_rng(self.seed)
        self.sensor_rate_hz = float(sensor_rate_hz or self.cfg.lidar.rate_hz)
        self._frame_index = 0
        self._scan_index = 0

        spawns = list(scene.spawns.values()) or [(0.0, 0.0, 0.0)]
        self.vehicles: dict[str, Vehicle] = {}
        for i in range(n_vehicles):
            vid = f"V{i + 1}"
            self.vehicles[vid] = Vehicle.spawned(vid, spawns[i % len(spawns)])

        self._initial_elements = scene.initial_element_states()
        self.event_log: list[tuple[float, str, str]] = []
        scene.subscribe(self._on_element_change)

        self.frame_listeners: list = []   # callback(frames: dict, peers: list[PeerState])
        self.recorder = None              # attached by Recorder.start

    # -- events ------------------------------------------------------------

    def _on_element_change(self, element_id: str, state: str, version: int) -> None:
        self.event_log.append((self.clock.t, element_id, f"state={state} v{version}"))

    def log_event(self, entity: str, change: str) -> None:
        self.event_log.append((self.clock.t, entity, change))

    # -- command/mode staging ------------------------------------------------

    def stage_command(self, vehicle_id: str, throttle: float, steering: float) -> bool:
        """Stage the latest command for a vehicle; returns True if the
        values had to be clamped into [-1, 1]."""
        vehicle = self._vehicle(vehicle_id)
        command, was_clamped = clamp_command(throttle, steering)
        vehicle.staged = command
        return was_clamped

    def set_mode(self, vehicle_id: str, mode: str) -> None:
        if mode not in MODES:
            raise ValueError(f"unknown mode '{mode}'")
        vehicle = self._vehicle(vehicle_id)
        if vehicle.mode != mode:
            vehicle.mode = mode
            # Fail-safe: authority changes hand over a zero command until
            # the new controller speaks.
            vehicle.staged = ActuationCommand()
            self.log_event(vehicle_id, f"mode={mode}")

    def set_element(self, element_id: str, state: str):
        return set_element_state(self.scene, element_id, state)

    def _vehicle(self, vehicle_id: str) -> Vehicle:
        try:
            return self.vehicles[vehicle_id]
        except KeyError:
            raise SceneError(f"unknown vehicle '{vehicle_id}'") from None

    # -- stepping ------------------------------------------------------------

    def step(self) -> list[tuple[str, SensorFrame]]:
        """Advance one physics tick; returns frames if a sensor sample
        came due this tick (empty list otherwise)."""
        dt = self.clock.dt
        tick = self.clock.tick_count
        for vehicle in self.vehicles.values():
            command = vehicle.staged
            if vehicle.applied != command and self.recorder is not None:
                self.recorder.log_command(tick, vehicle.vehicle_id, command)
            vehicle.applied = command
            vehicle.prev_world_velocity = world_velocity(vehicle.state.chassis)
            vehicle.state = vehicle_step(vehicle.state, command, self.scene, self.cfg, dt)

        self._resolve_vehicle_contacts()
        self.clock.advance()
        return self._emit_due_samples()

    def _resolve_vehicle_contacts(self) -> None:
        vehicles = list(self.vehicles.values())
        for i in range(len(vehicles)):
            for j in range(i + 1, len(vehicles)):
                a, b = vehicles[i], vehicles[j]
                ra = self._footprint(a)
                rb = self._footprint(b)
                if convex_overlap_strict(ra.corners(), rb.corners()):
                    for v in (a, b):
                        v.state.collision = True
                        v.state.chassis.v_x = v.state.chassis.v_y = v.state.chassis.psidot = 0.0
                        for wheel in v.state.wheels:
                            wheel.omega = 0.0

    def _footprint(self, vehicle: Vehicle) -> OrientedRect:
        ch = vehicle.state.chassis
        return OrientedRect(ch.x, ch.y, ch.psi, self.cfg.body_length, self.cfg.body_width)

    def _emit_due_samples(self) -> list[tuple[str, SensorFrame]]:
        t = self.clock.t
        eps = 1e-9
        while (self._scan_index + 1) / self.cfg.lidar.rate_hz <= t + eps:
            self._scan_index += 1
            mount = lidar_mount_transform(self.cfg.lidar)
            for vehicle in self.vehicles.values():
                pose = compose(vehicle_pose(vehicle.state.chassis), mount)
                vehicle.latest_scan = scan_lidar(pose, self.scene, self.cfg.lidar)

        frames: list[tuple[str, SensorFrame]] = []
        while (self._frame_index + 1) / self.sensor_rate_hz <= t + eps:
            self._frame_index += 1
            timestamp = self._frame_index / self.sensor_rate_hz
            beams = self.cfg.lidar.beam_count
            for vehicle in self.vehicles.values():
                scan = vehicle.latest_scan
                if scan is None:
                    scan = np.full(beams, np.inf)
                frame = build_frame(
                    timestamp,
                    vehicle.state,
                    vehicle.applied.throttle,
                    vehicle.prev_world_velocity,
                    scan,
                    self.cfg,
                    self.clock.dt,
                    self.rng,
                )
                frames.append((vehicle.vehicle_id, frame))
            if self.recorder is not None:
                self.recorder.capture(timestamp, self, frames[-len(self.vehicles):])
        if frames:
            peers = self.peer_states()
            for listener in self.frame_listeners:
                listener(frames, peers)
        return frames

    def run(self, duration: float) -> None:
        while self.clock.t < duration - 1e-12:
            self.step()

    # -- V2V -------------------------------------------------------------------

    def peer_states(self) -> list[PeerState]:
        t = self.clock.t
        out = []
        for vehicle in self.vehicles.values():
            ch = vehicle.state.chassis
            out.append(
                PeerState(
                    vehicle_id=vehicle.vehicle_id,
                    position=(ch.x, ch.y),
                    yaw=ch.psi,
                    velocity=math.hypot(ch.v_x, ch.v_y),
                    timestamp=t,
                )
            )
        return out

    # -- reset -------------------------------------------------------------------

    def reset(self) -> None:
        """Restore vehicles, clock, sensors and traffic elements to the
        scene-initial configuration (bit-exact with a fresh session)."""
        for vehicle in self.vehicles.values():
            vehicle.respawn()
        self.clock.reset()
        self.rng = np.random.default_rng(self.seed)
        self._frame_index = 0
        self._scan_index = 0
        for element_id, state in self._initial_elements.items():
            element = self.scene.traffic_elements[element_id]
            if element.state != state:
                element.state = state
                element.version += 1
        self.event_log.append((0.0, "session", "reset"))
        if self.recorder is not None:
            self.recorder.begin_segment(self)
