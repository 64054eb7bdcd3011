"""Fixed-timestep vehicle dynamics.

Planar 3-DOF chassis (x, y, psi) driven by per-wheel slip/friction
forces, with four decoupled sprung/unsprung suspension corner pairs
and quasi-static normal-load transfer. Frame convention: body +x
forward, +y left, yaw counter-clockwise; positive steering command
turns left. Integration is semi-implicit Euler with a fixed,
documented phase order per tick so replays are bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

from .config import GRAVITY, VehicleConfig
from .errors import SimulationFault
from .friction import FrictionCurve, default_friction_curve, eval_friction
from . import scene as scene_mod

SLIP_SPEED_FLOOR = 0.01  # m/s, removes the v_x = 0 singularity in both slip formulas

# Wheel order everywhere: front-left, front-right, rear-left, rear-right.
FL, FR, RL, RR = 0, 1, 2, 3
FRONT = (FL, FR)
REAR = (RL, RR)


@dataclass
class SuspensionCornerState:
    Z: float = 0.0      # sprung displacement, m, + up
    Zdot: float = 0.0
    z: float = 0.0      # unsprung (wheel) displacement, m
    zdot: float = 0.0
    F_s: float = 0.0    # last computed suspension force, N


@dataclass
class WheelState:
    omega: float = 0.0        # rad/s
    steer_angle: float = 0.0  # rad, 0 for rear wheels
    revs_accum: float = 0.0   # signed output-shaft revolutions, feeds the encoders
    S_x: float = 0.0
    S_y: float = 0.0
    F_tx: float = 0.0         # N, tire longitudinal (wheel frame)
    F_ty: float = 0.0         # N, tire lateral (wheel frame)
    F_z: float = 0.0          # N, normal load


@dataclass
class ChassisState:
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    v_x: float = 0.0      # body-longitudinal, m/s
    v_y: float = 0.0      # body-lateral, m/s
    psidot: float = 0.0   # rad/s


@dataclass(frozen=True)
class ActuationCommand:
    throttle: float = 0.0   # fraction in [-1, 1]
    steering: float = 0.0   # fraction in [-1, 1], scaled to +-steer_limit


@dataclass
class VehicleState:
    chassis: ChassisState = field(default_factory=ChassisState)
    wheels: list[WheelState] = field(default_factory=lambda: [WheelState() for _ in range(4)])
    suspension: list[SuspensionCornerState] = field(
        default_factory=lambda: [SuspensionCornerState() for _ in range(4)]
    )
    steer_angle: float = 0.0   # central (bicycle-equivalent) steering angle, rad
    collision: bool = False    # latched until reset
    accel_x: float = 0.0       # body proper acceleration of the previous tick
    accel_y: float = 0.0

    def copy(self) -> "VehicleState":
        return VehicleState(
            chassis=ChassisState(**vars(self.chassis)),
            wheels=[WheelState(**vars(w)) for w in self.wheels],
            suspension=[SuspensionCornerState(**vars(s)) for s in self.suspension],
            steer_angle=self.steer_angle,
            collision=self.collision,
            accel_x=self.accel_x,
            accel_y=self.accel_y,
        )


def longitudinal_slip(r: float, omega: float, v_x: float) -> float:
    """(r*omega - v_x) over v_x, denominator floored at SLIP_SPEED_FLOOR."""
    if r <= 0.0:
        raise ValueError(f"wheel radius must be positive, got {r}")
    if abs(v_x) > SLIP_SPEED_FLOOR:
        denom = v_x
    else:
        denom = SLIP_SPEED_FLOOR
    return (r * omega - v_x) / denom


def lateral_slip(v_x: float, v_y: float) -> float:
    """tan of the slip angle: v_y over |v_x|, floored denominator."""
    return v_y / max(abs(v_x), SLIP_SPEED_FLOOR)


def tire_forces(
    curve_x: FrictionCurve,
    curve_y: FrictionCurve,
    s_x: float,
    s_y: float,
    f_z: float,
    f_z_static: float,
) -> tuple[float, float]:
    """Tire force pair from the friction curves, scaled linearly by normal load.

    Curve output is force per unit normal load (calibrated at
    `f_z_static`); the lateral force opposes the slip direction.
    """
    if f_z < 0.0:
        raise ValueError(f"normal load must be non-negative, got {f_z}")
    if f_z_static <= 0.0:
        raise ValueError(f"static normal load must be positive, got {f_z_static}")
    f_tx = eval_friction(curve_x, s_x) * f_z
    f_ty = -eval_friction(curve_y, s_y) * f_z
    return f_tx, f_ty


@lru_cache(maxsize=64)
def _grounded_propagator(sprung_mass: float, damper: float, spring: float, dt: float):
    """Exact one-step map for M Zdd + B Zd + K Z = 0 (wheel pinned).

    The grounded corner is linear, so the step uses the closed-form
    matrix exponential instead of a numerical integrator: frequency and
    decay are exact at any dt and the true dissipation carries over
    step by step.
    """
    alpha = damper / (2.0 * sprung_mass)
    wn2 = spring / sprung_mass
    disc = wn2 - alpha * alpha
    decay = math.exp(-alpha * dt)
    if disc > 1e-12:  # underdamped
        wd = math.sqrt(disc)
        c = math.cos(wd * dt)
        s_over = math.sin(wd * dt) / wd
    elif disc < -1e-12:  # overdamped
        wd = math.sqrt(-disc)
        c = math.cosh(wd * dt)
        s_over = math.sinh(wd * dt) / wd
    else:  # critically damped
        c, s_over = 1.0, dt
    a11 = decay * (c + alpha * s_over)
    a12 = decay * s_over
    a21 = -decay * wn2 * s_over
    a22 = decay * (c - alpha * s_over)
    return a11, a12, a21, a22


def suspension_step(
    corner: SuspensionCornerState,
    sprung_mass: float,
    wheel_mass: float,
    damper: float,
    spring: float,
    dt: float,
    travel_limit: float = 0.05,
) -> SuspensionCornerState:
    """Advance one sprung/unsprung corner pair.

    Ground contact is a unilateral constraint at z = 0: while the
    required reaction stays compressive the wheel is pinned and the
    sprung mass follows the exact damped-oscillator propagator; when
    the suspension pulls up harder than the wheel's weight, the wheel
    lifts off and falls ballistically (landing is inelastic).
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    f_s = damper * (corner.Zdot - corner.zdot) + spring * (corner.Z - corner.z)

    pinned = corner.z <= 0.0 and wheel_mass * GRAVITY - f_s >= 0.0
    if pinned:
        a11, a12, a21, a22 = _grounded_propagator(sprung_mass, damper, spring, dt)
        new_z_s = a11 * corner.Z + a12 * corner.Zdot
        new_zdot_s = a21 * corner.Z + a22 * corner.Zdot
        new_z_u, new_zdot_u = 0.0, 0.0
    else:
        # Airborne pair: semi-implicit Euler (brief transition phases).
        zdd_sprung = -f_s / sprung_mass
        zdd_unsprung = -GRAVITY + f_s / wheel_mass
        new_zdot_s = corner.Zdot + dt * zdd_sprung
        new_z_s = corner.Z + dt * new_zdot_s
        new_zdot_u = corner.zdot + dt * zdd_unsprung
        new_z_u = corner.z + dt * new_zdot_u
        if new_z_u <= 0.0:
            new_z_u, new_zdot_u = 0.0, 0.0

    if abs(new_z_s) > travel_limit or abs(new_z_u) > travel_limit:
        raise SimulationFault("suspension_travel", f"|Z|={abs(new_z_s):.4f} m exceeds {travel_limit} m")

    new_f_s = damper * (new_zdot_s - new_zdot_u) + spring * (new_z_s - new_z_u)
    return SuspensionCornerState(new_z_s, new_zdot_s, new_z_u, new_zdot_u, new_f_s)


# Wheel-spin integration substep. The motor time constant I_w w_max /
# tau_max is a few milliseconds, well under the 10 ms physics tick, so
# the wheel ODE integrates at a finer fixed step to stay stable.
DRIVE_SUBSTEP = 5e-4  # s


def drive_step(
    omega: float, throttle: float, cfg: VehicleConfig, load_torque: float, dt: float
) -> float:
    """Advance one driven wheel's spin under the motor's speed-torque line.

    Torque falls linearly to zero at the no-load speed; at zero throttle
    an idle/brake torque opposes the spin, clamped so the wheel never
    reverses through zero.
    """
    if abs(throttle) > 1.0:
        raise ValueError(f"|throttle| must be <= 1, got {throttle}")
    inertia = cfg.wheel_inertia
    w_max = cfg.max_wheel_speed
    n_sub = max(1, math.ceil(dt / DRIVE_SUBSTEP))
    h = dt / n_sub
    brake_delta = h * cfg.brake_torque / inertia
    new_omega = omega
    for _ in range(n_sub):
        motor = throttle * cfg.drive_torque_max * (1.0 - min(abs(new_omega), w_max) / w_max)
        new_omega += h * (motor - load_torque) / inertia
        if throttle == 0.0:
            new_omega -= math.copysign(min(abs(new_omega), brake_delta), new_omega)
        new_omega = max(-w_max, min(w_max, new_omega))
    return new_omega


def steer_step(current: float, target: float, cfg: VehicleConfig, dt: float) -> float:
    """Slew the central steering angle toward the clamped target."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    goal = max(-cfg.steer_limit, min(cfg.steer_limit, target))
    max_delta = cfg.steer_rate * dt
    delta = goal - current
    if abs(delta) <= max_delta:
        return goal
    return current + math.copysign(max_delta, delta)


def ackermann_split(delta: float, wheelbase: float, track: float) -> tuple[float, float]:
    """Left/right front-wheel angles for a central steering angle.

    Positive delta is a left turn, so the left wheel is the inner one
    and turns more; the perpendiculars to both front wheels meet the
    rear-axle line at one instantaneous center at lateral offset
    wheelbase / tan(delta).
    """
    if not abs(delta) < math.pi / 2.0:
        raise ValueError(f"|delta| must be < pi/2, got {delta}")
    t = math.tan(delta)
    if t == 0.0:
        return 0.0, 0.0
    delta_left = math.atan(2.0 * wheelbase * t / (2.0 * wheelbase - track * t))
    delta_right = math.atan(2.0 * wheelbase * t / (2.0 * wheelbase + track * t))
    return delta_left, delta_right


@lru_cache(maxsize=16)
def _friction_curves(cfg: VehicleConfig) -> tuple[FrictionCurve, FrictionCurve]:
    curve = default_friction_curve(cfg)
    return curve, curve  # same shape for longitudinal and lateral


def _check_finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise SimulationFault(name, f"value is {value}")
    return value


def vehicle_step(
    state: VehicleState,
    cmd: ActuationCommand,
    scene: "scene_mod.Scene",
    cfg: VehicleConfig,
    dt: float,
) -> VehicleState:
    """Advance the whole vehicle one physics tick.

    Phase order is fixed: steer -> drive -> tires -> suspension ->
    chassis -> bookkeeping -> collision. Identical inputs produce
    bit-identical outputs.
    """
    if abs(cmd.throttle) > 1.0 or abs(cmd.steering) > 1.0:
        raise ValueError("actuation command out of [-1, 1]")
    for name, value in (
        ("x", state.chassis.x), ("y", state.chassis.y), ("psi", state.chassis.psi),
        ("v_x", state.chassis.v_x), ("v_y", state.chassis.v_y), ("psidot", state.chassis.psidot),
    ):
        _check_finite(name, value)
    for i, wheel in enumerate(state.wheels):
        _check_finite(f"wheel[{i}].omega", wheel.omega)
    new = state.copy()
    ch = new.chassis
    curve_x, curve_y = _friction_curves(cfg)

    # 1. Steering: slew the central angle, split across front wheels.
    new.steer_angle = steer_step(state.steer_angle, cmd.steering * cfg.steer_limit, cfg, dt)
    d_left, d_right = ackermann_split(new.steer_angle, cfg.wheelbase_l, cfg.track_w)
    new.wheels[FL].steer_angle = d_left
    new.wheels[FR].steer_angle = d_right
    new.wheels[RL].steer_angle = 0.0
    new.wheels[RR].steer_angle = 0.0

    # 2. Drive: rear wheels under motor/brake torque, loaded by the
    # previous tick's tire reaction.
    for i in REAR:
        load = state.wheels[i].F_tx * cfg.wheel_radius_r
        new.wheels[i].omega = drive_step(state.wheels[i].omega, cmd.throttle, cfg, load, dt)

    # 3. Tires: slips and forces per wheel in its own frame, scaled by
    # terrain grip and quasi-static normal load from last tick's accel.
    positions = cfg.wheel_positions()
    weight = cfg.total_mass * GRAVITY
    base_load = weight / 4.0
    d_long = cfg.total_mass * state.accel_x * cfg.com_height / (2.0 * cfg.wheelbase_l)
    d_lat = cfg.total_mass * state.accel_y * cfg.com_height / (2.0 * cfg.track_w)

    cos_psi, sin_psi = math.cos(ch.psi), math.sin(ch.psi)
    share_mass = cfg.total_mass / 4.0
    inv_coupling = dt * (cfg.wheel_radius_r**2 / cfg.wheel_inertia + 1.0 / share_mass)

    force_x = force_y = torque_z = 0.0
    for i, (px, py) in enumerate(positions):
        wheel = new.wheels[i]
        f_z = base_load
        f_z += d_long if i in REAR else -d_long
        f_z += d_lat if py < 0.0 else -d_lat
        f_z = max(0.0, f_z)
        wheel.F_z = f_z

        # Wheel ground velocity in the body frame, then in the wheel frame.
        vx_w = ch.v_x - ch.psidot * py
        vy_w = ch.v_y + ch.psidot * px
        cos_d, sin_d = math.cos(wheel.steer_angle), math.sin(wheel.steer_angle)
        v_t = vx_w * cos_d + vy_w * sin_d
        v_n = -vx_w * sin_d + vy_w * cos_d

        if i in FRONT:
            # Undriven wheels roll freely at ground speed.
            wheel.omega = max(-cfg.max_wheel_speed, min(cfg.max_wheel_speed, v_t / cfg.wheel_radius_r))

        wheel.S_x = longitudinal_slip(cfg.wheel_radius_r, wheel.omega, v_t)
        wheel.S_y = lateral_slip(v_t, v_n)

        wx = ch.x + px * cos_psi - py * sin_psi
        wy = ch.y + px * sin_psi + py * cos_psi
        grip = scene_mod.terrain_at(scene, (wx, wy)) if scene is not None else 1.0

        # Force direction must oppose the surface-velocity mismatch; the
        # signed-denominator slip would flip it when reversing, so the
        # force evaluation floors the denominator at |v_t|.
        mismatch = cfg.wheel_radius_r * wheel.omega - v_t
        s_force = mismatch / max(abs(v_t), SLIP_SPEED_FLOOR)
        f_tx, f_ty = tire_forces(curve_x, curve_y, s_force, wheel.S_y, f_z, base_load)
        f_tx *= grip
        f_ty *= grip
        # Momentum-matching clamps: never push the contact patch past the
        # ground speed within one tick (keeps the stiff slip dynamics
        # stable at dt = 0.01 without sub-stepping). A brake-held wheel
        # cannot close the mismatch by spinning up, so only the chassis
        # share counts there.
        if i in REAR and cmd.throttle == 0.0:
            lim_x = share_mass * abs(mismatch) / dt
        else:
            lim_x = abs(mismatch) / inv_coupling
        lim_y = share_mass * abs(v_n) / dt
        wheel.F_tx = max(-lim_x, min(lim_x, f_tx))
        wheel.F_ty = max(-lim_y, min(lim_y, f_ty))

        fx_b = wheel.F_tx * cos_d - wheel.F_ty * sin_d
        fy_b = wheel.F_tx * sin_d + wheel.F_ty * cos_d
        force_x += fx_b
        force_y += fy_b
        torque_z += px * fy_b - py * fx_b

    # 4. Suspension: four decoupled corner pairs.
    for i in range(4):
        new.suspension[i] = suspension_step(
            state.suspension[i],
            cfg.sprung_mass_M[i],
            cfg.wheel_mass_m,
            cfg.damper_B[i],
            cfg.spring_K[i],
            dt,
            cfg.suspension_travel,
        )

    # 5. Chassis: planar rigid body with kinematic velocity coupling.
    mass = cfg.total_mass
    accel_x = force_x / mass
    accel_y = force_y / mass
    ch.v_x += dt * (accel_x + ch.psidot * ch.v_y)
    ch.v_y += dt * (accel_y - ch.psidot * ch.v_x)
    ch.psidot += dt * torque_z / cfg.yaw_inertia
    ch.psi += dt * ch.psidot
    cos_new, sin_new = math.cos(ch.psi), math.sin(ch.psi)
    ch.x += dt * (ch.v_x * cos_new - ch.v_y * sin_new)
    ch.y += dt * (ch.v_x * sin_new + ch.v_y * cos_new)
    new.accel_x = accel_x
    new.accel_y = accel_y

    # 6. Bookkeeping: encoder revolution accumulators.
    for i in range(4):
        new.wheels[i].revs_accum += new.wheels[i].omega * dt / (2.0 * math.pi)

    # 7. Collision: 2D footprint against scene geometry; stop on contact.
    if scene is not None:
        rect = scene_mod.OrientedRect(ch.x, ch.y, ch.psi, cfg.body_length, cfg.body_width)
        if scene_mod.footprint_collision(scene, rect):
            new.collision = True
            ch.v_x = ch.v_y = ch.psidot = 0.0
            for wheel in new.wheels:
                wheel.omega = 0.0

    for name, value in (
        ("x", ch.x), ("y", ch.y), ("psi", ch.psi),
        ("v_x", ch.v_x), ("v_y", ch.v_y), ("psidot", ch.psidot),
    ):
        _check_finite(name, value)
    for i, wheel in enumerate(new.wheels):
        _check_finite(f"wheel[{i}].omega", wheel.omega)
        _check_finite(f"wheel[{i}].F_tx", wheel.F_tx)
        _check_finite(f"wheel[{i}].F_ty", wheel.F_ty)
    speed = math.hypot(ch.v_x, ch.v_y)
    if speed > 1.5 * cfg.top_speed:
        raise SimulationFault("speed", f"{speed:.3f} m/s exceeds 1.5x top speed {cfg.top_speed:.3f}")
    return new
