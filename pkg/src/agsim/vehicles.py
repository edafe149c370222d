"""Kinematic vehicle models: first-order multirotor and bicycle-model car.

Both models step with explicit Euler at a fixed dt and are bitwise
deterministic. They validate coordination logic, not vehicle dynamics:
no aerodynamics, tire slip, or collision response beyond blocking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import TypeMismatch
from .geometry import NedPose, Quaternion, Vec3, wrap_angle
from .simtime import SimTime
from .world import Scene


class VehicleType(str, Enum):
    MULTIROTOR = "multirotor"
    CAR = "car"


@dataclass(frozen=True)
class VehicleState:
    id: str
    vtype: VehicleType
    pose: NedPose
    velocity: Vec3 = Vec3()
    yaw_rate: float = 0.0
    stamp: SimTime = SimTime(0, 0.0)


@dataclass(frozen=True)
class UavCommand:
    mode: str = "velocity"  # "velocity" | "waypoint"
    velocity_cmd: Vec3 = Vec3()
    waypoint: Vec3 = Vec3()
    yaw_cmd: float = 0.0
    speed_limit: float = 2.0


@dataclass(frozen=True)
class CarCommand:
    mode: str = "drive"  # "drive" | "waypoint"
    speed_cmd: float = 0.0
    steer_cmd: float = 0.0
    waypoint: Vec3 = Vec3()


@dataclass(frozen=True)
class CarParams:
    wheelbase: float = 2.5
    max_speed: float = 6.0
    max_steer: float = 0.6
    clearance: float = 1.8  # vertical band the body needs above its support
    max_step_up: float = 0.35


@dataclass(frozen=True)
class UavParams:
    tau: float = 0.5  # velocity first-order time constant
    max_speed: float = 5.0
    max_climb: float = 3.0


@dataclass(frozen=True)
class VehicleParams:
    car: CarParams = field(default_factory=CarParams)
    uav: UavParams = field(default_factory=UavParams)


# Capture radius inside which a waypoint-mode UAV holds position.
UAV_CAPTURE_RADIUS = 0.2
# Distance below which a waypoint-mode car stops steering toward the point.
CAR_WAYPOINT_HOLD = 0.3


def pursuit_steer(wheelbase: float, alpha: float, dist: float) -> float:
    """Pure-pursuit steering angle toward a point at bearing alpha, range dist."""
    if dist < 1e-9:
        return 0.0
    return math.atan(2.0 * wheelbase * math.sin(alpha) / dist)


def _clip_uav_velocity(v: Vec3, params: UavParams) -> Vec3:
    h = v.horizontal_norm()
    n, e = v.n, v.e
    if h > params.max_speed:
        scale = params.max_speed / h
        n, e = n * scale, e * scale
    d = max(-params.max_climb, min(params.max_climb, v.d))
    return Vec3(n, e, d)


def step_uav(state: VehicleState, cmd: UavCommand | None, params: VehicleParams, dt: float,
             ground_d: float = 0.0) -> VehicleState:
    """Advance a multirotor one tick.

    Velocity follows a first-order Euler lag toward the commanded velocity,
    v' = v + (v_des - v) * (dt / tau), clipped to the speed limits; position
    integrates explicit Euler. Waypoint mode aims at the waypoint at the
    command's speed limit and holds inside the capture radius.
    """
    if state.vtype is not VehicleType.MULTIROTOR:
        raise TypeMismatch(f"step_uav on '{state.id}' of type {state.vtype.value}")
    if cmd is None:
        cmd = UavCommand()
    p = state.pose.position
    yaw = cmd.yaw_cmd
    if cmd.mode == "waypoint":
        to_wp = cmd.waypoint - p
        dist = to_wp.norm()
        if dist <= UAV_CAPTURE_RADIUS:
            v_des = Vec3()
        else:
            v_des = to_wp * (cmd.speed_limit / dist)
    else:
        v_des = cmd.velocity_cmd
    alpha = dt / params.uav.tau
    v = state.velocity
    v_new = _clip_uav_velocity(Vec3(
        v.n + (v_des.n - v.n) * alpha,
        v.e + (v_des.e - v.e) * alpha,
        v.d + (v_des.d - v.d) * alpha,
    ), params.uav)
    p_new = p + v_new * dt
    if p_new.d > ground_d:  # never below the ground plane
        p_new = Vec3(p_new.n, p_new.e, ground_d)
        v_new = Vec3(v_new.n, v_new.e, 0.0)
    yaw_rate = wrap_angle(yaw - state.pose.orientation.yaw()) / dt
    return VehicleState(
        state.id, state.vtype,
        NedPose(p_new, Quaternion.from_yaw_pitch_roll(wrap_angle(yaw))),
        v_new, yaw_rate, state.stamp,
    )


def step_car(state: VehicleState, cmd: CarCommand | None, params: VehicleParams,
             scene: Scene, dt: float) -> VehicleState:
    """Advance a car one tick with the kinematic bicycle model.

    n' += v cos(psi) dt, e' += v sin(psi) dt, psi' += v tan(steer)/wheelbase dt.
    The down coordinate snaps to the local support surface (ground or a
    bridge-deck top within step-up range). A step into blocked space holds
    position and zeroes velocity.
    """
    if state.vtype is not VehicleType.CAR:
        raise TypeMismatch(f"step_car on '{state.id}' of type {state.vtype.value}")
    if cmd is None:
        cmd = CarCommand()
    cp = params.car
    p = state.pose.position
    psi = state.pose.orientation.yaw()

    if cmd.mode == "waypoint":
        to_wp = cmd.waypoint - p
        dist = to_wp.horizontal_norm()
        if dist <= CAR_WAYPOINT_HOLD:
            speed, steer = 0.0, 0.0
        elif cmd.speed_cmd < 0.0:
            # Negative speed: retreat straight, keeping the nose on the point.
            speed = cmd.speed_cmd
            steer = 0.0
        else:
            bearing = math.atan2(to_wp.e, to_wp.n)
            alpha = wrap_angle(bearing - psi)
            if abs(alpha) > math.pi / 2.0:
                # Waypoint behind the nose: back straight up.
                speed = -cmd.speed_cmd
                steer = 0.0
            else:
                speed = cmd.speed_cmd
                steer = pursuit_steer(cp.wheelbase, alpha, dist)
    else:
        speed = cmd.speed_cmd
        steer = cmd.steer_cmd

    speed = max(-cp.max_speed, min(cp.max_speed, speed))
    steer = max(-cp.max_steer, min(cp.max_steer, steer))

    n_new = p.n + speed * math.cos(psi) * dt
    e_new = p.e + speed * math.sin(psi) * dt
    psi_new = wrap_angle(psi + speed * math.tan(steer) / cp.wheelbase * dt)

    support = scene.support_d(n_new, e_new, p.d, cp.max_step_up) if scene.in_bounds(n_new, e_new) else p.d
    blocked = not scene.clearance_free(n_new, e_new, support, cp.clearance)
    if blocked:
        return VehicleState(
            state.id, state.vtype, NedPose(p, state.pose.orientation), Vec3(), 0.0, state.stamp
        )
    vel = Vec3(speed * math.cos(psi), speed * math.sin(psi), (support - p.d) / dt)
    return VehicleState(
        state.id, state.vtype,
        NedPose(Vec3(n_new, e_new, support), Quaternion.from_yaw_pitch_roll(psi_new)),
        vel, speed * math.tan(steer) / cp.wheelbase, state.stamp,
    )
