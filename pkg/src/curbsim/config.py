"""Vehicle and sensor configuration with calibrated defaults.

Defaults mirror the physical 1:14 testbed vehicle: 16 PPR encoders
behind a 120:1 gearbox (1920 counts per wheel revolution), steering
saturated at +-30 deg slewing at 0.805 rad/s, drive saturating at
130 RPM (~0.267 m/s ground speed), LIDAR 0.15-12 m at 1 deg, camera
f=3.04 mm on a 3.68x2.76 mm sensor. Masses, stiffnesses, friction
parameters and body dimensions are plausible desk-scale values, not
measurements; override them in the config file when calibrating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import yaml

from .errors import ConfigError

GRAVITY = 9.81  # m/s^2


@dataclass(frozen=True)
class LidarSpec:
    r_min: float = 0.15
    r_max: float = 12.0
    theta_min_deg: float = 0.0
    theta_max_deg: float = 360.0
    theta_res_deg: float = 1.0
    rate_hz: float = 7.0
    # Mounting pose in the vehicle frame (x, y, z, yaw). The physical
    # mount is unspecified; default sits at chassis center, 0.1 m up.
    mount: tuple[float, float, float, float] = (0.0, 0.0, 0.1, 0.0)

    def __post_init__(self):
        if not 0.0 < self.r_min < self.r_max:
            raise ConfigError(f"lidar ranges must satisfy 0 < r_min < r_max, got {self.r_min}, {self.r_max}")
        span = self.theta_max_deg - self.theta_min_deg
        if span <= 0.0 or self.theta_res_deg <= 0.0:
            raise ConfigError("lidar angular range and resolution must be positive")
        beams = span / self.theta_res_deg
        if abs(beams - round(beams)) > 1e-9:
            raise ConfigError(f"theta_res_deg={self.theta_res_deg} must divide the angular span {span}")
        if self.rate_hz <= 0.0:
            raise ConfigError("lidar rate must be positive")

    @property
    def beam_count(self) -> int:
        return int(round((self.theta_max_deg - self.theta_min_deg) / self.theta_res_deg))


@dataclass(frozen=True)
class CameraIntrinsics:
    f_mm: float = 3.04
    s_x_mm: float = 3.68
    s_y_mm: float = 2.76
    width_px: int = 1280
    height_px: int = 720
    near_m: float = 0.01
    far_m: float = 1000.0

    def __post_init__(self):
        if min(self.f_mm, self.s_x_mm, self.s_y_mm) <= 0.0:
            raise ConfigError("focal length and sensor size must be positive")
        if not 0.0 < self.near_m < self.far_m:
            raise ConfigError(f"clip planes must satisfy 0 < near < far, got {self.near_m}, {self.far_m}")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ConfigError("resolution must be positive")


@dataclass(frozen=True)
class VehicleConfig:
    scale: float = 1.0 / 14.0
    wheelbase_l: float = 0.19
    track_w: float = 0.11
    # Back-derived: 130 RPM no-load (13.6 rad/s) against 0.267 m/s ground speed.
    wheel_radius_r: float = 0.0196
    wheel_mass_m: float = 0.05
    sprung_mass_M: tuple[float, float, float, float] = (0.5, 0.5, 0.5, 0.5)
    spring_K: tuple[float, float, float, float] = (500.0, 500.0, 500.0, 500.0)
    damper_B: tuple[float, float, float, float] = (6.0, 6.0, 6.0, 6.0)
    encoder_ppr: int = 16
    gear_ratio: float = 120.0
    steer_limit: float = math.radians(30.0)
    steer_rate: float = 0.805
    max_wheel_speed: float = 13.6
    drive_torque_max: float = 0.05
    brake_torque: float = 0.05
    com_height: float = 0.04
    suspension_travel: float = 0.05
    body_length: float = 0.26
    body_width: float = 0.16
    # Friction curve knobs (shared by all four tires). Invented defaults;
    # the real curve shape was never published with numbers.
    friction_s_extremum: float = 0.2
    friction_f_extremum: float = 1.0
    friction_s_asymptote: float = 0.6
    friction_f_asymptote: float = 0.75
    friction_k0: float = 10.0
    ips_noise_std: float = 0.0
    # "proper": accelerometer reads reaction to gravity (+g on z at rest);
    # "coordinate": reads coordinate acceleration (0 at rest).
    imu_gravity_mode: str = "proper"
    lidar: LidarSpec = field(default_factory=LidarSpec)
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        for name in ("wheelbase_l", "track_w", "wheel_radius_r", "wheel_mass_m", "scale"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("sprung_mass_M", "spring_K", "damper_B"):
            values = getattr(self, name)
            if len(values) != 4:
                raise ConfigError(f"{name} needs one value per corner (4), got {len(values)}")
            if name == "sprung_mass_M" and min(values) <= 0.0:
                raise ConfigError(f"{name} entries must be positive, got {values}")
            if name != "sprung_mass_M" and min(values) < 0.0:
                raise ConfigError(f"{name} entries must be non-negative, got {values}")
            object.__setattr__(self, name, tuple(float(v) for v in values))
        if min(self.spring_K) <= 0.0:
            raise ConfigError(f"spring_K entries must be positive, got {self.spring_K}")
        if not 0.0 < self.steer_limit < math.pi / 2.0:
            raise ConfigError(f"steer_limit must lie in (0, pi/2), got {self.steer_limit}")
        if self.gear_ratio < 1.0:
            raise ConfigError(f"gear_ratio must be >= 1, got {self.gear_ratio}")
        if self.encoder_ppr < 1:
            raise ConfigError(f"encoder_ppr must be >= 1, got {self.encoder_ppr}")
        for name in ("steer_rate", "max_wheel_speed", "drive_torque_max", "com_height",
                     "suspension_travel", "body_length", "body_width"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.brake_torque < 0.0:
            raise ConfigError(f"brake_torque must be non-negative, got {self.brake_torque}")
        if self.ips_noise_std < 0.0:
            raise ConfigError(f"ips_noise_std must be non-negative, got {self.ips_noise_std}")
        if self.imu_gravity_mode not in ("proper", "coordinate"):
            raise ConfigError(f"imu_gravity_mode must be 'proper' or 'coordinate', got {self.imu_gravity_mode!r}")

    @property
    def encoder_cpr(self) -> int:
        """Counts per wheel revolution at the output shaft."""
        return int(round(self.encoder_ppr * self.gear_ratio))

    @property
    def total_mass(self) -> float:
        return sum(self.sprung_mass_M) + 4.0 * self.wheel_mass_m

    @property
    def wheel_inertia(self) -> float:
        # Solid-disc wheel: I = m r^2 / 2.
        return 0.5 * self.wheel_mass_m * self.wheel_radius_r**2

    @property
    def yaw_inertia(self) -> float:
        # Corner masses at the wheel stations about the geometric center.
        r2 = (self.wheelbase_l / 2.0) ** 2 + (self.track_w / 2.0) ** 2
        return sum(m + self.wheel_mass_m for m in self.sprung_mass_M) * r2

    @property
    def static_wheel_load(self) -> float:
        return self.total_mass * GRAVITY / 4.0

    @property
    def top_speed(self) -> float:
        return self.wheel_radius_r * self.max_wheel_speed

    def wheel_positions(self) -> tuple[tuple[float, float], ...]:
        """Body-frame wheel stations, order FL, FR, RL, RR (+x forward, +y left)."""
        hl, hw = self.wheelbase_l / 2.0, self.track_w / 2.0
        return ((hl, hw), (hl, -hw), (-hl, hw), (-hl, -hw))


_CORNER_ARRAYS = ("sprung_mass_M", "spring_K", "damper_B")


def _coerce_corner_array(name: str, value) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * 4
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    raise ConfigError(f"{name} must be a number or a list of 4 numbers, got {value!r}")


def _build_nested(cls, data: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {context} field(s): {', '.join(sorted(unknown))}")
    if "mount" in data:
        data["mount"] = tuple(float(v) for v in data["mount"])
    return cls(**data)


def load_vehicle_config(text: str) -> VehicleConfig:
    """Parse a YAML vehicle-config document.

    Unspecified fields take the defaults above; unknown fields are an
    error. The encoder may be given either as (encoder_ppr, gear_ratio)
    or as the combined output-shaft resolution `encoder_cpr`.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")

    kwargs = dict(data)
    if "encoder_cpr" in kwargs:
        if "encoder_ppr" in kwargs:
            raise ConfigError("give either encoder_cpr or encoder_ppr, not both")
        cpr = int(kwargs.pop("encoder_cpr"))
        gear = float(kwargs.get("gear_ratio", VehicleConfig.gear_ratio))
        ppr = cpr / gear
        if abs(ppr - round(ppr)) > 1e-9:
            raise ConfigError(f"encoder_cpr={cpr} is not divisible by gear_ratio={gear}")
        kwargs["encoder_ppr"] = int(round(ppr))

    known = {f.name for f in fields(VehicleConfig)}
    unknown = set(kwargs) - known
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")

    for name in _CORNER_ARRAYS:
        if name in kwargs:
            kwargs[name] = _coerce_corner_array(name, kwargs[name])
    if "lidar" in kwargs:
        kwargs["lidar"] = _build_nested(LidarSpec, dict(kwargs["lidar"]), "lidar")
    if "camera" in kwargs:
        kwargs["camera"] = _build_nested(CameraIntrinsics, dict(kwargs["camera"]), "camera")
    try:
        return VehicleConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_vehicle_config_file(path) -> VehicleConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return load_vehicle_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
