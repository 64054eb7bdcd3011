import math

import pytest

from curbsim.clock import SimClock
from curbsim.config import CameraIntrinsics, LidarSpec, VehicleConfig, load_vehicle_config
from curbsim.errors import ConfigError


def test_clock_never_drifts():
    clock = SimClock(dt=0.01)
    for _ in range(12345):
        clock.advance()
    assert clock.tick_count == 12345
    assert clock.t == 12345 * 0.01  # exact: product, not accumulation


def test_clock_dt_immutable():
    clock = SimClock(dt=0.02)
    with pytest.raises(AttributeError):
        clock.dt = 0.05


def test_clock_rejects_bad_dt():
    with pytest.raises(ValueError):
        SimClock(dt=0.0)


def test_default_encoder_resolution():
    cfg = VehicleConfig()
    assert cfg.encoder_ppr == 16
    assert cfg.gear_ratio == 120
    assert cfg.encoder_cpr == 1920


def test_defaults_match_hardware_ratings():
    cfg = VehicleConfig()
    assert cfg.steer_limit == math.radians(30.0)
    assert cfg.steer_rate == 0.805
    assert cfg.max_wheel_speed == 13.6
    assert cfg.wheel_radius_r == 0.0196
    assert cfg.lidar.r_min == 0.15 and cfg.lidar.r_max == 12.0
    assert cfg.lidar.beam_count == 360
    assert cfg.camera.f_mm == 3.04
    assert (cfg.camera.s_x_mm, cfg.camera.s_y_mm) == (3.68, 2.76)


def test_loader_accepts_cpr_directly():
    cfg = load_vehicle_config("encoder_cpr: 1920\ngear_ratio: 120\n")
    assert cfg.encoder_ppr == 16


def test_loader_rejects_both_encoder_forms():
    with pytest.raises(ConfigError, match="either"):
        load_vehicle_config("encoder_cpr: 1920\nencoder_ppr: 16\n")


def test_loader_rejects_unknown_field():
    with pytest.raises(ConfigError, match="unknown config field"):
        load_vehicle_config("wheel_diameter: 0.04\n")


def test_loader_rejects_nonpositive_values():
    with pytest.raises(ConfigError, match="wheel_radius_r"):
        load_vehicle_config("wheel_radius_r: -0.01\n")
    with pytest.raises(ConfigError, match="sprung_mass_M"):
        load_vehicle_config("sprung_mass_M: [0.5, 0.5, 0.0, 0.5]\n")
    with pytest.raises(ConfigError, match="spring_K"):
        load_vehicle_config("spring_K: 0\n")


def test_loader_scalar_corner_broadcast():
    cfg = load_vehicle_config("spring_K: 450\n")
    assert cfg.spring_K == (450.0,) * 4


def test_loader_nested_sections():
    cfg = load_vehicle_config(
        "lidar:\n  rate_hz: 10\ncamera:\n  width_px: 640\n  height_px: 480\n"
    )
    assert cfg.lidar.rate_hz == 10
    assert cfg.camera.width_px == 640
    with pytest.raises(ConfigError, match="unknown lidar field"):
        load_vehicle_config("lidar:\n  beams: 180\n")


def test_steer_limit_bounds():
    with pytest.raises(ConfigError):
        VehicleConfig(steer_limit=math.pi / 2.0)
    with pytest.raises(ConfigError):
        VehicleConfig(gear_ratio=0.5)
    with pytest.raises(ConfigError):
        VehicleConfig(encoder_ppr=0)


def test_lidar_spec_invariants():
    with pytest.raises(ConfigError):
        LidarSpec(r_min=0.5, r_max=0.4)
    with pytest.raises(ConfigError):
        LidarSpec(theta_res_deg=7.0)  # does not divide 360


def test_camera_clip_plane_order():
    with pytest.raises(ConfigError):
        CameraIntrinsics(near_m=10.0, far_m=1.0)
