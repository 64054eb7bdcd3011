"""Simulated sensor suite.

Everything here is a pure function of an immutable state snapshot:
actuator feedbacks, incremental encoders on the rear wheels, IPS
position, IMU (finite-difference accelerations, yaw-rate gyro,
orientation), planar LIDAR via exact ray-casting, and the pinhole
camera matrix pipeline (view, projection, NDC, viewport).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import GRAVITY, CameraIntrinsics, LidarSpec, VehicleConfig
from .dynamics import RL, RR, ChassisState, VehicleState, WheelState
from .errors import ProjectionError
from .scene import Scene, raycast_batch
from .transforms import Transform3, euler_to_quaternion, invert, rot_z, rotation_to_euler


@dataclass(frozen=True)
class SensorFrame:
    timestamp: float
    throttle_fb: float
    steer_fb: float
    enc_ticks: tuple[int, int]
    ips: np.ndarray              # (3,)
    imu_accel: np.ndarray        # (3,)
    imu_gyro: np.ndarray         # (3,)
    imu_orient_euler: np.ndarray # (3,) roll, pitch, yaw
    imu_orient_quat: np.ndarray  # (4,) w, x, y, z
    lidar_ranges: np.ndarray     # (beams,), inf = no return


def read_encoders(wheels: list[WheelState], cfg: VehicleConfig) -> tuple[int, int]:
    """Signed tick counts of the two rear-wheel encoders.

    One output-shaft revolution is ppr * gear_ratio counts; the sign
    follows the rotation direction (quadrature decoding).
    """
    counts_per_rev = cfg.encoder_ppr * cfg.gear_ratio
    ticks = []
    for wheel in wheels:
        revs = wheel.revs_accum
        magnitude = math.floor(abs(revs) * counts_per_rev)
        ticks.append(int(math.copysign(magnitude, revs)) if revs != 0.0 else 0)
    return ticks[0], ticks[1]


def read_ips(pose: Transform3, noise_std: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """3-DOF position of the vehicle; optional Gaussian noise per axis."""
    position = pose.translation.copy()
    if noise_std > 0.0:
        if rng is None:
            raise ValueError("noisy IPS read requires the run's seeded generator")
        position = position + rng.normal(0.0, noise_std, 3)
    return position


def read_imu(
    state: ChassisState,
    prev_velocity: np.ndarray,
    pose: Transform3,
    dt: float,
    gravity_mode: str = "proper",
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Body-frame (accel, gyro, euler, quaternion) for the current tick.

    Acceleration is the finite difference of world velocity rotated
    into the body; in "proper" mode the accelerometer additionally
    reads the +g reaction on z, as a physical IMU at rest would.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    velocity_world = world_velocity(state)
    accel_world = (velocity_world - np.asarray(prev_velocity, dtype=float)) / dt
    accel_body = pose.rotation.T @ accel_world
    if gravity_mode == "proper":
        accel_body = accel_body + np.array([0.0, 0.0, GRAVITY])
    elif gravity_mode != "coordinate":
        raise ValueError(f"unknown gravity_mode {gravity_mode!r}")
    gyro = np.array([0.0, 0.0, state.psidot])
    euler = np.array(rotation_to_euler(pose.rotation))
    quat = euler_to_quaternion(*euler)
    return accel_body, gyro, euler, quat


def world_velocity(state: ChassisState) -> np.ndarray:
    c, s = math.cos(state.psi), math.sin(state.psi)
    return np.array([state.v_x * c - state.v_y * s, state.v_x * s + state.v_y * c, 0.0])


def vehicle_pose(state: ChassisState) -> Transform3:
    return rot_z(state.psi, (state.x, state.y, 0.0))


def lidar_mount_transform(spec: LidarSpec) -> Transform3:
    x, y, z, yaw = spec.mount
    return rot_z(yaw, (x, y, z))


def scan_lidar(pose_lidar_in_world: Transform3, scene: Scene, spec: LidarSpec) -> np.ndarray:
    """One full planar sweep: beam i points at theta_min + i*theta_res
    counter-clockwise in the LIDAR frame. Returns in [r_min, r_max]
    keep their Euclidean hit distance, everything else reads inf.
    """
    n = spec.beam_count
    thetas = np.radians(spec.theta_min_deg + spec.theta_res_deg * np.arange(n))
    local_dirs = np.column_stack([np.cos(thetas), np.sin(thetas), np.zeros(n)])
    world_dirs = local_dirs @ pose_lidar_in_world.rotation.T
    planar = world_dirs[:, :2]
    norms = np.linalg.norm(planar, axis=1)
    planar = planar / norms[:, None]
    origin = pose_lidar_in_world.translation[:2]
    dists = raycast_batch(scene, origin, planar, spec.r_max)
    return np.where(dists >= spec.r_min, dists, np.inf)


# ---------------------------------------------------------------------------
# camera pipeline

def camera_view_matrix(pose_cam_in_world: Transform3) -> np.ndarray:
    """World-to-camera homogeneous transform [R | t; 0 | 1]."""
    return invert(pose_cam_in_world).as_matrix()


def camera_projection_matrix(intr: CameraIntrinsics) -> np.ndarray:
    """Symmetric-frustum perspective projection.

    Near-plane extents follow the pinhole geometry: the half-width seen
    at the near plane is N * (s_x / 2) / f, so the (0,0) entry equals
    2f/s_x. Camera looks down -z, NDC in [-1, 1].
    """
    n, f = intr.near_m, intr.far_m
    right = n * (intr.s_x_mm / 2.0) / intr.f_mm
    top = n * (intr.s_y_mm / 2.0) / intr.f_mm
    left, bottom = -right, -top
    return np.array(
        [
            [2.0 * n / (right - left), 0.0, (right + left) / (right - left), 0.0],
            [0.0, 2.0 * n / (top - bottom), (top + bottom) / (top - bottom), 0.0],
            [0.0, 0.0, -(f + n) / (f - n), -2.0 * f * n / (f - n)],
            [0.0, 0.0, -1.0, 0.0],
        ]
    )


def implied_horizontal_fov_deg(intr: CameraIntrinsics) -> float:
    return math.degrees(2.0 * math.atan2(intr.s_x_mm / 2.0, intr.f_mm))


def project_point(
    view: np.ndarray, proj: np.ndarray, world_pt, intr: CameraIntrinsics
) -> tuple[np.ndarray, np.ndarray, bool]:
    """(ndc, pixel, depth_ok) for a world point through view and projection.

    depth_ok means the point sits between the clip planes in front of
    the camera; pixel is the viewport scale-shift of NDC with raster y
    growing downward.
    """
    w = np.asarray(world_pt, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("world point must be finite")
    cam = view @ np.append(w, 1.0)
    clip = proj @ cam
    if clip[3] == 0.0:
        raise ProjectionError(f"point {world_pt} lies on the camera plane (w = 0)")
    ndc = clip[:2] / clip[3]
    pixel = np.array(
        [
            (ndc[0] + 1.0) / 2.0 * intr.width_px,
            (1.0 - ndc[1]) / 2.0 * intr.height_px,
        ]
    )
    depth = -cam[2]
    depth_ok = bool(intr.near_m <= depth <= intr.far_m)
    return ndc, pixel, depth_ok


def unproject_ndc(
    view: np.ndarray, proj: np.ndarray, ndc, depth: float
) -> np.ndarray:
    """Invert the projection at a known camera depth (depth > 0 ahead)."""
    # With the symmetric frustum, x_ndc = (P00 * x_cam) / depth.
    x_cam = float(ndc[0]) * depth / proj[0, 0]
    y_cam = float(ndc[1]) * depth / proj[1, 1]
    cam = np.array([x_cam, y_cam, -depth, 1.0])
    world = np.linalg.inv(view) @ cam
    return world[:3]


def project_landmarks(
    pose_cam_in_world: Transform3, intr: CameraIntrinsics, scene: Scene
) -> dict[str, tuple[np.ndarray, bool]]:
    """Ideal landmark camera: scene landmark points to pixels."""
    view = camera_view_matrix(pose_cam_in_world)
    proj = camera_projection_matrix(intr)
    out = {}
    for lid, point in scene.landmarks.items():
        try:
            _, pixel, ok = project_point(view, proj, point, intr)
        except ProjectionError:
            continue
        out[lid] = (pixel, ok)
    return out


# ---------------------------------------------------------------------------
# frame assembly

def build_frame(
    timestamp: float,
    state: VehicleState,
    throttle_cmd: float,
    prev_velocity: np.ndarray,
    lidar_ranges: np.ndarray,
    cfg: VehicleConfig,
    dt: float,
    rng: np.random.Generator | None = None,
) -> SensorFrame:
    """Bundle every sensor read for one vehicle at one sample time.

    Throttle/steer feedbacks pass the actuator state straight through
    (the physical feedback loop's lag is below the sensor period).
    """
    pose = vehicle_pose(state.chassis)
    enc = read_encoders([state.wheels[RL], state.wheels[RR]], cfg)
    ips = read_ips(pose, cfg.ips_noise_std, rng)
    accel, gyro, euler, quat = read_imu(state.chassis, prev_velocity, pose, dt, cfg.imu_gravity_mode)
    return SensorFrame(
        timestamp=timestamp,
        throttle_fb=throttle_cmd,
        steer_fb=state.steer_angle,
        enc_ticks=enc,
        ips=ips,
        imu_accel=accel,
        imu_gyro=gyro,
        imu_orient_euler=euler,
        imu_orient_quat=quat,
        lidar_ranges=lidar_ranges,
    )
