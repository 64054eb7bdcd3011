"""Time-synchronized data recorder and deterministic replay.

Export format: UTF-8 CSV, one row per vehicle per sensor period, fixed
column order, floats written in shortest round-trip form so identical
runs export byte-identical files. Comment lines (prefix '#') embed the
run metadata, one segment marker per reset, and every applied command
change - which makes a record file a complete, self-contained replay
script for the simulation.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

from .dynamics import ActuationCommand
from .errors import RecordError

RECORD_VERSION = "curbsim-record v1"

FIXED_COLUMNS = (
    "timestamp", "vehicle_id", "throttle_fb", "steer_fb", "enc_left", "enc_right",
    "ips_x", "ips_y", "ips_z",
    "accel_x", "accel_y", "accel_z", "gyro_x", "gyro_y", "gyro_z",
    "roll", "pitch", "yaw", "quat_w", "quat_x", "quat_y", "quat_z",
    "cmd_throttle", "cmd_steering", "collision", "elements",
)


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


class Recorder:
    """Captures rows while attached to a session; export after stop."""

    def __init__(self):
        self._buffer: io.StringIO | None = None
        self._recording = False
        self._stopped = False
        self._segment = 0
        self._rows = 0
        self._last_logged: dict[str, ActuationCommand] = {}
        self._beams = 0

    @property
    def recording(self) -> bool:
        return self._recording

    @property
    def rows(self) -> int:
        return self._rows

    def start(self, session) -> None:
        if self._recording:
            raise RecordError("recorder already running")
        self._buffer = io.StringIO()
        self._recording = True
        self._stopped = False
        self._segment = 0
        self._rows = 0
        self._last_logged = {}
        self._beams = session.cfg.lidar.beam_count
        scene_name = getattr(session, "scene_path", None) or session.scene.name
        config_path = getattr(session, "config_path", None) or "default"
        self._buffer.write(f"# {RECORD_VERSION}\n")
        self._buffer.write(
            f"# meta scene={scene_name} config={config_path} seed={session.seed} "
            f"dt={_fmt(session.clock.dt)} sensor_rate={_fmt(session.sensor_rate_hz)} "
            f"vehicles={len(session.vehicles)}\n"
        )
        self._buffer.write(f"# segment 0 t={_fmt(session.clock.t)}\n")
        lidar_cols = ",".join(f"lidar_{i:03d}" for i in range(self._beams))
        self._buffer.write(",".join(FIXED_COLUMNS) + "," + lidar_cols + "\n")
        session.recorder = self

    def begin_segment(self, session) -> None:
        if not self._recording:
            return
        self._segment += 1
        self._last_logged = {}
        self._buffer.write(f"# segment {self._segment} t={_fmt(session.clock.t)}\n")

    def log_command(self, tick: int, vehicle_id: str, command: ActuationCommand) -> None:
        if not self._recording:
            return
        if self._last_logged.get(vehicle_id) == command:
            return
        self._last_logged[vehicle_id] = command
        self._buffer.write(f"# cmd {tick} {vehicle_id} {_fmt(command.throttle)} {_fmt(command.steering)}\n")

    def capture(self, timestamp: float, session, frames) -> None:
        if not self._recording:
            return
        elements = ";".join(
            f"{eid}={el.state}" for eid, el in sorted(session.scene.traffic_elements.items())
            if el.state is not None
        )
        for vehicle_id, frame in frames:
            vehicle = session.vehicles[vehicle_id]
            cells = [
                _fmt(timestamp), vehicle_id,
                _fmt(frame.throttle_fb), _fmt(frame.steer_fb),
                str(frame.enc_ticks[0]), str(frame.enc_ticks[1]),
                _fmt(frame.ips[0]), _fmt(frame.ips[1]), _fmt(frame.ips[2]),
                _fmt(frame.imu_accel[0]), _fmt(frame.imu_accel[1]), _fmt(frame.imu_accel[2]),
                _fmt(frame.imu_gyro[0]), _fmt(frame.imu_gyro[1]), _fmt(frame.imu_gyro[2]),
                _fmt(frame.imu_orient_euler[0]), _fmt(frame.imu_orient_euler[1]), _fmt(frame.imu_orient_euler[2]),
                _fmt(frame.imu_orient_quat[0]), _fmt(frame.imu_orient_quat[1]),
                _fmt(frame.imu_orient_quat[2]), _fmt(frame.imu_orient_quat[3]),
                _fmt(vehicle.applied.throttle), _fmt(vehicle.applied.steering),
                "1" if vehicle.state.collision else "0",
                elements,
            ]
            cells.extend(_fmt(r) for r in frame.lidar_ranges)
            self._buffer.write(",".join(cells) + "\n")
            self._rows += 1

    def stop(self, session) -> None:
        if not self._recording:
            raise RecordError("recorder is not running")
        self._recording = False
        self._stopped = True
        if session.recorder is self:
            session.recorder = None

    def export(self) -> str:
        if self._recording:
            raise RecordError("cannot export while recording; stop first")
        if not self._stopped or self._buffer is None:
            raise RecordError("nothing recorded")
        return self._buffer.getvalue()

    def export_to(self, path) -> int:
        text = self.export()
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return self._rows


@dataclass(frozen=True)
class RecordMeta:
    scene: str
    config: str
    seed: int
    dt: float
    sensor_rate: float
    vehicles: int


@dataclass(frozen=True)
class ParsedRecord:
    meta: RecordMeta
    commands: list[tuple[int, str, float, float]]       # (tick, vehicle, throttle, steering)
    rows: list[dict]                                     # fixed columns only, per row
    segments: int


def parse_record(text: str) -> ParsedRecord:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {RECORD_VERSION}"):
        raise RecordError(f"not a record file or incompatible version (expected '{RECORD_VERSION}')")
    meta = None
    commands: list[tuple[int, str, float, float]] = []
    rows: list[dict] = []
    segments = 0
    header: list[str] | None = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("# meta "):
            fields = dict(part.split("=", 1) for part in line[len("# meta "):].split())
            try:
                meta = RecordMeta(
                    scene=fields["scene"],
                    config=fields["config"],
                    seed=int(fields["seed"]),
                    dt=float(fields["dt"]),
                    sensor_rate=float(fields["sensor_rate"]),
                    vehicles=int(fields["vehicles"]),
                )
            except (KeyError, ValueError) as exc:
                raise RecordError(f"line {lineno}: bad meta line: {exc}") from exc
        elif line.startswith("# segment "):
            segments += 1
        elif line.startswith("# cmd "):
            parts = line[len("# cmd "):].split()
            if len(parts) != 4:
                raise RecordError(f"line {lineno}: malformed command entry")
            commands.append((int(parts[0]), parts[1], float(parts[2]), float(parts[3])))
        elif line.startswith("#"):
            continue
        elif header is None:
            header = line.split(",")
            if header[: len(FIXED_COLUMNS)] != list(FIXED_COLUMNS):
                raise RecordError(f"line {lineno}: unexpected column order")
        else:
            cells = line.split(",")
            if len(cells) != len(header):
                raise RecordError(f"line {lineno}: truncated row ({len(cells)} of {len(header)} cells)")
            rows.append(dict(zip(FIXED_COLUMNS, cells[: len(FIXED_COLUMNS)])))
    if meta is None:
        raise RecordError("record has no meta line")
    if header is None:
        raise RecordError("record has no column header")
    return ParsedRecord(meta, commands, rows, segments)


def replay(text: str, scene_loader, config_loader) -> tuple[float, int]:
    """Re-simulate a record from its embedded command log.

    Returns (max absolute IPS deviation, rows compared). A healthy
    record replays with deviation exactly 0.0.
    """
    from .session import Session  # local import to avoid a cycle

    parsed = parse_record(text)
    if parsed.segments > 1:
        raise RecordError("replay covers single-segment records; split at segment markers")
    scene = scene_loader(parsed.meta.scene)
    cfg = config_loader(parsed.meta.config)
    session = Session(
        scene,
        cfg,
        n_vehicles=parsed.meta.vehicles,
        seed=parsed.meta.seed,
        dt=parsed.meta.dt,
        sensor_rate_hz=parsed.meta.sensor_rate,
    )
    by_tick: dict[int, list[tuple[str, float, float]]] = {}
    for tick, vid, throttle, steering in parsed.commands:
        by_tick.setdefault(tick, []).append((vid, throttle, steering))

    expected: dict[tuple[str, str], tuple[float, float, float]] = {}
    last_timestamp = 0.0
    for row in parsed.rows:
        key = (row["timestamp"], row["vehicle_id"])
        expected[key] = (float(row["ips_x"]), float(row["ips_y"]), float(row["ips_z"]))
        last_timestamp = max(last_timestamp, float(row["timestamp"]))

    worst = 0.0
    compared = 0
    while session.clock.t < last_timestamp + session.clock.dt:
        for vid, throttle, steering in by_tick.get(session.clock.tick_count, []):
            session.stage_command(vid, throttle, steering)
        for vehicle_id, frame in session.step():
            key = (_fmt(frame.timestamp), vehicle_id)
            if key in expected:
                ex, ey, ez = expected[key]
                worst = max(
                    worst,
                    abs(frame.ips[0] - ex),
                    abs(frame.ips[1] - ey),
                    abs(frame.ips[2] - ez),
                )
                compared += 1
        if compared == len(expected):
            break
    if compared != len(expected):
        raise RecordError(f"replay covered {compared} of {len(expected)} recorded rows")
    return worst, compared
