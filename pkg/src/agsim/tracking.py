"""Dual-agent standoff tracking and formation pattern generation.

Detection is ground truth gated by line-of-sight occlusion; fusion is
visibility-masked averaging with hold-last. That isolates exactly the
coordination behavior under test: the handover when one observer loses
the target behind scene geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Vec3, ray_aabbs_batch, wrap_angle
from .simtime import SimTime
from .vehicles import CarCommand, UavCommand, VehicleState, VehicleType
from .world import Scene


@dataclass(frozen=True)
class TargetScript:
    """Constant-speed waypoint route for the scripted target vehicle."""

    waypoints: tuple
    speed: float = 2.0
    loop: bool = False

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("target script needs at least 2 waypoints")
        if self.speed <= 0:
            raise ValueError("target speed must be positive")

    def _segments(self):
        lengths = []
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            lengths.append((b - a).norm())
        return lengths

    def total_length(self) -> float:
        return sum(self._segments())

    def sample(self, t: float):
        """Pose along the polyline at time t: (position, yaw, velocity)."""
        lengths = self._segments()
        total = sum(lengths)
        s = self.speed * t
        at_end = False
        if self.loop:
            s = math.fmod(s, total)
        elif s >= total:
            s = total
            at_end = True
        acc = 0.0
        for i, seg in enumerate(lengths):
            if s <= acc + seg + 1e-12 and seg > 1e-12:
                a, b = self.waypoints[i], self.waypoints[i + 1]
                frac = min(max((s - acc) / seg, 0.0), 1.0)
                direction = (b - a) * (1.0 / seg)
                yaw = math.atan2(direction.e, direction.n)
                vel = Vec3() if at_end else direction * self.speed
                return a + (b - a) * frac, yaw, vel
            acc += seg
        a, b = self.waypoints[-2], self.waypoints[-1]
        direction = (b - a) * (1.0 / max((b - a).norm(), 1e-12))
        return b, math.atan2(direction.e, direction.n), Vec3()


@dataclass(frozen=True)
class StandoffParams:
    desired_distance: float
    gain: float = 0.8  # 1/s
    observer_altitude: float = 0.0  # UAV only, meters above ground

    def __post_init__(self):
        if self.desired_distance <= 0:
            raise ValueError("desired_distance must be positive")


@dataclass(frozen=True)
class TargetObservation:
    stamp: SimTime
    observer_id: str
    target_position: Vec3
    visible: bool


def line_of_sight(scene: Scene, a: Vec3, b: Vec3) -> bool:
    """True when the segment a-b hits no obstacle box (ground ignored)."""
    delta = b - a
    dist = delta.norm()
    if dist < 1e-9:
        return True
    if len(scene.obstacles) == 0:
        return True
    d, idx = ray_aabbs_batch(
        a.to_array().reshape(1, 3),
        (delta * (1.0 / dist)).to_array().reshape(1, 3),
        scene._mins,
        scene._maxs,
        dist - 1e-6,
    )
    return int(idx[0]) == -1


def observe_target(scene: Scene, observer_state: VehicleState, target_position: Vec3,
                   last_estimate: Vec3, stamp: SimTime) -> TargetObservation:
    """Ground-truth detection gated by line of sight.

    Invisible observations carry the last fused estimate, flagged.
    """
    visible = line_of_sight(scene, observer_state.pose.position, target_position)
    pos = target_position if visible else last_estimate
    return TargetObservation(stamp, observer_state.id, pos, visible)


def fuse_observations(observations, previous_estimate: Vec3) -> Vec3:
    """Mean of visible observations; hold the previous estimate when blind."""
    visible = [o.target_position for o in observations if o.visible]
    if not visible:
        return previous_estimate
    acc = Vec3()
    for p in visible:
        acc = acc + p
    return acc * (1.0 / len(visible))


def standoff_command(agent_state: VehicleState, target_estimate: Vec3,
                     params: StandoffParams, feedforward: Vec3 = Vec3(),
                     ground_d: float = 0.0):
    """Command holding the agent at the desired distance, pointed at the target.

    Commanded speed along the agent-to-target bearing is
    gain * (current_distance - desired_distance) plus the target-velocity
    feed-forward. The UAV flies a velocity command and regulates altitude.
    The car pursues along the agent-target line (where the standoff point
    lies): steering aims at the target bearing while the signed speed drives
    it to the standoff point, negative speed retreating when inside it.
    """
    pos = agent_state.pose.position
    to_tgt = target_estimate - pos
    dist = to_tgt.norm()
    horiz = math.hypot(to_tgt.n, to_tgt.e)
    if horiz > 1e-9:
        u = Vec3(to_tgt.n / horiz, to_tgt.e / horiz, 0.0)
    else:
        u = Vec3()
    err_speed = params.gain * (dist - params.desired_distance)
    yaw = math.atan2(to_tgt.e, to_tgt.n) if horiz > 1e-9 else agent_state.pose.orientation.yaw()

    if agent_state.vtype is VehicleType.MULTIROTOR:
        d_des = ground_d - params.observer_altitude
        vd = params.gain * (d_des - pos.d)
        v_cmd = Vec3(
            feedforward.n + u.n * err_speed,
            feedforward.e + u.e * err_speed,
            vd,
        )
        return UavCommand(mode="velocity", velocity_cmd=v_cmd, yaw_cmd=yaw)

    ff_along = feedforward.n * u.n + feedforward.e * u.e
    speed = ff_along + err_speed
    aim = Vec3(target_estimate.n, target_estimate.e, pos.d)
    return CarCommand(mode="waypoint", speed_cmd=speed, waypoint=aim)


def xy_tracking_error(agent_pos: Vec3, target_pos: Vec3, desired_distance: float) -> float:
    """XY-plane deviation from the standoff geometry.

    Zero exactly when the agent sits on a point whose 3-D distance to the
    target equals the desired distance at the agent's current height offset.
    """
    dd = agent_pos.d - target_pos.d
    expected = math.sqrt(max(0.0, desired_distance**2 - dd**2))
    actual = math.hypot(agent_pos.n - target_pos.n, agent_pos.e - target_pos.e)
    return abs(actual - expected)


def yaw_error_deg(agent_state: VehicleState, target_pos: Vec3) -> float:
    """|bearing-to-target - heading| wrapped to [0, 180] degrees."""
    pos = agent_state.pose.position
    bearing = math.atan2(target_pos.e - pos.e, target_pos.n - pos.n)
    return abs(math.degrees(wrap_angle(bearing - agent_state.pose.orientation.yaw())))


# -- formation patterns -------------------------------------------------------


@dataclass(frozen=True)
class CirclePattern:
    center: Vec3
    radius: float
    angular_speed: float  # rad/s

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass(frozen=True)
class SquarePattern:
    center: Vec3
    side: float
    altitude: float
    speed: float

    def __post_init__(self):
        if self.side <= 0 or self.speed <= 0:
            raise ValueError("side and speed must be positive")


@dataclass(frozen=True)
class FormationSpec:
    ugv_ids: tuple
    uav_ids: tuple
    circle: CirclePattern
    square: SquarePattern


def circle_reference(pattern: CirclePattern, k: int, n: int, t: float) -> Vec3:
    """UGV k of n: phase-offset point on the rotating circle."""
    theta = 2.0 * math.pi * k / n + pattern.angular_speed * t
    return Vec3(
        pattern.center.n + pattern.radius * math.cos(theta),
        pattern.center.e + pattern.radius * math.sin(theta),
        0.0,
    )


def square_reference(pattern: SquarePattern, k: int, m: int, t: float) -> Vec3:
    """UAV k of m: corner-to-corner circuit with perimeter phase offsets."""
    h = pattern.side / 2.0
    corners = (
        Vec3(pattern.center.n + h, pattern.center.e + h, -pattern.altitude),
        Vec3(pattern.center.n - h, pattern.center.e + h, -pattern.altitude),
        Vec3(pattern.center.n - h, pattern.center.e - h, -pattern.altitude),
        Vec3(pattern.center.n + h, pattern.center.e - h, -pattern.altitude),
    )
    perimeter = 4.0 * pattern.side
    s = math.fmod(pattern.speed * t + k * perimeter / m, perimeter)
    seg = int(s // pattern.side)
    frac = (s - seg * pattern.side) / pattern.side
    a = corners[seg % 4]
    b = corners[(seg + 1) % 4]
    return a + (b - a) * frac


def formation_references(spec: FormationSpec, t: float) -> dict:
    refs = {}
    n = len(spec.ugv_ids)
    for k, vid in enumerate(spec.ugv_ids):
        refs[vid] = circle_reference(spec.circle, k, n, t)
    m = len(spec.uav_ids)
    for k, vid in enumerate(spec.uav_ids):
        refs[vid] = square_reference(spec.square, k, m, t)
    return refs


def formation_commands(spec: FormationSpec, t: float, states: dict,
                       gain: float = 0.8, lead_time: float = 0.5) -> dict:
    """Per-vehicle waypoint commands chasing the led reference points."""
    led = formation_references(spec, t + lead_time)
    cmds = {}
    circle_speed = abs(spec.circle.angular_speed) * spec.circle.radius
    for vid in spec.ugv_ids:
        state = states[vid]
        ref = led[vid]
        dist = math.hypot(ref.n - state.pose.position.n, ref.e - state.pose.position.e)
        cmds[vid] = CarCommand(mode="waypoint", speed_cmd=circle_speed + gain * dist, waypoint=ref)
    for vid in spec.uav_ids:
        state = states[vid]
        ref = led[vid]
        dist = (ref - state.pose.position).norm()
        heading = math.atan2(ref.e - state.pose.position.e, ref.n - state.pose.position.n)
        cmds[vid] = UavCommand(
            mode="waypoint", waypoint=ref, yaw_cmd=heading,
            speed_limit=spec.square.speed + gain * dist,
        )
    return cmds
