import math

import numpy as np
import pytest

from agsim.geometry import NedPose, Quaternion, Vec3
from agsim.simtime import SimTime
from agsim.tracking import (
    CirclePattern,
    FormationSpec,
    SquarePattern,
    StandoffParams,
    TargetObservation,
    TargetScript,
    circle_reference,
    formation_references,
    fuse_observations,
    line_of_sight,
    observe_target,
    square_reference,
    standoff_command,
    xy_tracking_error,
    yaw_error_deg,
)
from agsim.vehicles import VehicleState, VehicleType

T0 = SimTime(0, 0.0)


def agent(vtype, pos, yaw=0.0, vid="a"):
    return VehicleState(vid, vtype, NedPose(pos, Quaternion.from_yaw_pitch_roll(yaw)))


def test_script_constant_speed():
    script = TargetScript((Vec3(0, 0, 0), Vec3(100, 0, 0)), speed=2.0)
    p, yaw, v = script.sample(10.0)
    assert p.n == pytest.approx(20.0)
    assert yaw == pytest.approx(0.0)
    assert v.n == pytest.approx(2.0)


def test_script_corners_and_end():
    script = TargetScript((Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(10, 10, 0)), speed=2.0)
    p, yaw, _ = script.sample(6.0)  # 12 m along: 2 m into the second leg
    assert p.n == pytest.approx(10.0)
    assert p.e == pytest.approx(2.0)
    assert yaw == pytest.approx(math.pi / 2)
    p, _, v = script.sample(100.0)
    assert p == Vec3(10, 10, 0)
    assert v.norm() == 0.0


def test_script_loop_wraps():
    script = TargetScript((Vec3(0, 0, 0), Vec3(10, 0, 0)), speed=2.0, loop=True)
    p, _, v = script.sample(6.0)  # 12 m along a 10 m track
    assert p.n == pytest.approx(2.0)
    assert v.norm() > 0.0


def test_script_validation():
    with pytest.raises(ValueError):
        TargetScript((Vec3(),), speed=2.0)
    with pytest.raises(ValueError):
        TargetScript((Vec3(), Vec3(1, 0, 0)), speed=0.0)


def test_los_open_field(open_field):
    assert line_of_sight(open_field, Vec3(0, 0, -10), Vec3(50, 0, 0)) is True


def test_los_blocked_by_deck(bridge_town):
    # target under the deck, observer straight above it
    assert line_of_sight(bridge_town, Vec3(0, 0, -20), Vec3(0, 0, 0)) is False


def test_los_through_arch(bridge_town):
    # ground-level view along the arch corridor
    assert line_of_sight(bridge_town, Vec3(-10, 0, -0.5), Vec3(10, 0, -0.5)) is True


def test_los_symmetry(bridge_town):
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = Vec3(float(rng.uniform(-60, 60)), float(rng.uniform(-60, 60)), float(rng.uniform(-20, 0)))
        b = Vec3(float(rng.uniform(-60, 60)), float(rng.uniform(-60, 60)), float(rng.uniform(-20, 0)))
        assert line_of_sight(bridge_town, a, b) == line_of_sight(bridge_town, b, a)


def test_observe_visible_carries_truth(open_field):
    obs = observe_target(open_field, agent(VehicleType.MULTIROTOR, Vec3(0, 0, -10)), Vec3(5, 5, 0), Vec3(), T0)
    assert obs.visible is True
    assert obs.target_position == Vec3(5, 5, 0)


def test_observe_occluded_carries_estimate(bridge_town):
    obs = observe_target(
        bridge_town, agent(VehicleType.MULTIROTOR, Vec3(0, 0, -20)), Vec3(0, 0, 0), Vec3(9, 9, 0), T0
    )
    assert obs.visible is False
    assert obs.target_position == Vec3(9, 9, 0)


def test_fuse_both_visible():
    obs = [
        TargetObservation(T0, "a", Vec3(1, 0, 0), True),
        TargetObservation(T0, "b", Vec3(1, 0, 0), True),
    ]
    assert fuse_observations(obs, Vec3(9, 9, 9)) == Vec3(1, 0, 0)


def test_fuse_single_visible():
    obs = [
        TargetObservation(T0, "a", Vec3(2, 0, 0), True),
        TargetObservation(T0, "b", Vec3(7, 7, 7), False),
    ]
    assert fuse_observations(obs, Vec3(9, 9, 9)) == Vec3(2, 0, 0)


def test_fuse_none_visible_holds_last():
    obs = [TargetObservation(T0, "a", Vec3(7, 7, 7), False)]
    assert fuse_observations(obs, Vec3(5, 5, 0)) == Vec3(5, 5, 0)
    assert fuse_observations([], Vec3(5, 5, 0)) == Vec3(5, 5, 0)


def test_standoff_uav_equilibrium_zero_horizontal():
    params = StandoffParams(desired_distance=14.0, gain=0.8, observer_altitude=12.0)
    # exactly 14 m away in 3-D at the commanded altitude
    uav = agent(VehicleType.MULTIROTOR, Vec3(-math.sqrt(14**2 - 12**2), 0, -12.0))
    cmd = standoff_command(uav, Vec3(0, 0, 0), params)
    assert cmd.velocity_cmd.horizontal_norm() < 1e-9
    assert abs(cmd.velocity_cmd.d) < 1e-9


def test_standoff_speed_example():
    # distance 20, desired 14, gain 0.8: speed 4.8 toward the target
    params = StandoffParams(desired_distance=14.0, gain=0.8, observer_altitude=0.0)
    uav = agent(VehicleType.MULTIROTOR, Vec3(-20.0, 0.0, 0.0))
    cmd = standoff_command(uav, Vec3(0, 0, 0), params)
    assert cmd.velocity_cmd.n == pytest.approx(4.8)
    assert cmd.velocity_cmd.e == pytest.approx(0.0)


def test_standoff_ugv_retreats_inside_radius():
    params = StandoffParams(desired_distance=6.0, gain=0.8)
    ugv = agent(VehicleType.CAR, Vec3(-3.0, 0.0, 0.0))  # 3 m from target, facing it
    cmd = standoff_command(ugv, Vec3(0, 0, 0), params)
    assert cmd.mode == "waypoint"
    assert cmd.speed_cmd == pytest.approx(-2.4)


def test_standoff_yaw_points_at_target():
    params = StandoffParams(desired_distance=14.0, gain=0.8, observer_altitude=10.0)
    uav = agent(VehicleType.MULTIROTOR, Vec3(0.0, -10.0, -10.0))
    cmd = standoff_command(uav, Vec3(0, 0, 0), params)
    assert cmd.yaw_cmd == pytest.approx(math.pi / 2)


def test_xy_error_zero_at_exact_standoff():
    # pinned at the exact standoff point: XY error 0, 3-D distance = desired
    target = Vec3(0, 0, 0)
    pos = Vec3(-math.sqrt(14**2 - 12**2), 0.0, -12.0)
    assert xy_tracking_error(pos, target, 14.0) == pytest.approx(0.0, abs=1e-12)
    assert (pos - target).norm() == pytest.approx(14.0)
    assert xy_tracking_error(Vec3(-6, 0, 0), target, 6.0) == pytest.approx(0.0, abs=1e-12)


def test_yaw_error_definition():
    ugv = agent(VehicleType.CAR, Vec3(0, 0, 0), yaw=0.0)
    assert yaw_error_deg(ugv, Vec3(10, 0, 0)) == pytest.approx(0.0)
    assert yaw_error_deg(ugv, Vec3(0, 10, 0)) == pytest.approx(90.0)
    assert yaw_error_deg(ugv, Vec3(-10, 0, 0)) == pytest.approx(180.0)
    assert 0.0 <= yaw_error_deg(ugv, Vec3(-10, -1, 0)) <= 180.0


def spec_of(n_ugv=3, m_uav=4):
    return FormationSpec(
        tuple(f"ugv{i}" for i in range(n_ugv)),
        tuple(f"uav{i}" for i in range(m_uav)),
        CirclePattern(Vec3(0, 0, 0), 10.0, 0.2),
        SquarePattern(Vec3(0, 0, 0), 20.0, 12.0, 2.0),
    )


def test_circle_reference_phase_zero():
    ref = circle_reference(CirclePattern(Vec3(0, 0, 0), 10.0, 0.2), 0, 3, 0.0)
    assert ref.n == pytest.approx(10.0)
    assert ref.e == pytest.approx(0.0)


def test_square_reference_one_side_per_10s():
    # side 20 at speed 2: after 10 s the reference sits at the next corner
    pattern = SquarePattern(Vec3(0, 0, 0), 20.0, 12.0, 2.0)
    start = square_reference(pattern, 0, 4, 0.0)
    after = square_reference(pattern, 0, 4, 10.0)
    assert (start - Vec3(10, 10, -12)).norm() < 1e-9
    assert (after - Vec3(-10, 10, -12)).norm() < 1e-9


def test_square_phase_offsets_start_at_corners():
    pattern = SquarePattern(Vec3(0, 0, 0), 20.0, 12.0, 2.0)
    corners = [square_reference(pattern, k, 4, 0.0) for k in range(4)]
    expected = [Vec3(10, 10, -12), Vec3(-10, 10, -12), Vec3(-10, -10, -12), Vec3(10, -10, -12)]
    for got, want in zip(corners, expected):
        assert (got - want).norm() < 1e-9


def test_ugv_angular_separation_constant():
    spec = spec_of()
    for t in np.linspace(0.0, 60.0, 25):
        refs = formation_references(spec, float(t))
        angles = [math.atan2(refs[f"ugv{i}"].e, refs[f"ugv{i}"].n) for i in range(3)]
        for i in range(3):
            sep = (angles[(i + 1) % 3] - angles[i]) % (2 * math.pi)
            assert sep == pytest.approx(2 * math.pi / 3, abs=1e-9)
