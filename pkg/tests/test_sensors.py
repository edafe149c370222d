import math

import numpy as np
import pytest

from agsim.geometry import NedPose, Quaternion, RigidTransform, Vec3
from agsim.sensors import (
    DepthConfig,
    LidarConfig,
    capture_depth,
    cloud_to_world,
    depth_to_world_points,
    lidar_scan,
    sensor_pose,
)
from agsim.world import Obstacle, Scene


NADIR = RigidTransform(Quaternion.from_yaw_pitch_roll(0.0, -math.pi / 2.0, 0.0), Vec3())


def test_lidar_ground_ring_ranges(open_field):
    # downward channels hit the ground at altitude / sin(|elev|)
    pose = NedPose(Vec3(0, 0, -10))
    cfg = LidarConfig(channels=4, vfov_deg=(-40.0, -10.0), points_per_channel=36, max_range=100.0)
    cloud = lidar_scan(open_field, pose, cfg)
    elevs = np.linspace(-40.0, -10.0, 4)
    expected = {round(10.0 / math.sin(math.radians(abs(e))), 6) for e in elevs}
    ranges = np.linalg.norm(cloud.points, axis=1)
    got = {round(float(r), 6) for r in ranges}
    assert got == expected
    assert len(cloud.points) == 4 * 36


def test_lidar_short_range_returns_empty(open_field):
    pose = NedPose(Vec3(0, 0, -10))
    cfg = LidarConfig(channels=4, vfov_deg=(-40.0, -10.0), points_per_channel=36, max_range=1.0)
    cloud = lidar_scan(open_field, pose, cfg)
    assert len(cloud.points) == 0


def test_lidar_deterministic_without_noise(bridge_town):
    pose = NedPose(Vec3(5, 5, -3), Quaternion.from_yaw_pitch_roll(0.3))
    cfg = LidarConfig(channels=8, points_per_channel=90, max_range=60.0)
    a = lidar_scan(bridge_town, pose, cfg)
    b = lidar_scan(bridge_town, pose, cfg)
    assert np.array_equal(a.points, b.points)


def test_lidar_points_on_geometry_within_noise_bound(bridge_town):
    sigma = 0.05
    pose = NedPose(Vec3(10, -5, -2), Quaternion.from_yaw_pitch_roll(-0.4))
    cfg = LidarConfig(channels=8, points_per_channel=120, max_range=50.0, noise_sigma=sigma)
    rng = np.random.default_rng(42)
    cloud = lidar_scan(bridge_town, pose, cfg, rng)
    sp = sensor_pose(pose, cfg.mount)
    world = cloud_to_world(cloud, sp)
    origin = sp.position.to_array()
    tol = max(1e-6, 3.0 * sigma)
    for p in world[::7]:
        ray = p - origin
        dist = np.linalg.norm(ray)
        clean = bridge_town.cast_rays(origin.reshape(1, 3), (ray / dist).reshape(1, 3), cfg.max_range + 1.0)
        true_dist = clean[0][0]
        assert abs(dist - true_dist) <= tol + 1e-9


def test_lidar_cloud_size_bound(bridge_town):
    pose = NedPose(Vec3(0, 0, -5))
    cfg = LidarConfig(channels=16, points_per_channel=360, max_range=100.0)
    cloud = lidar_scan(bridge_town, pose, cfg)
    assert len(cloud.points) <= 16 * 360


def test_depth_single_nadir_cell(open_field):
    pose = NedPose(Vec3(0, 0, -85))
    grid = capture_depth(open_field, pose, 1, 1, 70.0, NADIR, max_range=150.0)
    assert grid.ranges.shape == (1, 1)
    assert grid.ranges[0, 0] == pytest.approx(85.0)


def test_depth_oblique_edges_follow_cosine(open_field):
    pose = NedPose(Vec3(0, 0, -85))
    grid = capture_depth(open_field, pose, 9, 9, 70.0, NADIR, max_range=400.0)
    f = (9 / 2.0) / math.tan(math.radians(70.0) / 2.0)
    for r in range(9):
        for c in range(9):
            y = (c - 4.0) / f
            z = (r - 4.0) / f
            cos_theta = 1.0 / math.sqrt(1.0 + y * y + z * z)
            assert grid.ranges[r, c] == pytest.approx(85.0 / cos_theta, rel=1e-9)


def test_depth_sees_building_top():
    scene = Scene(
        [Obstacle("tower", Vec3(-10, -10, -20), Vec3(10, 10, 0), "building")],
        bounds=(Vec3(-100, -100, -120), Vec3(100, 100, 1)),
    )
    pose = NedPose(Vec3(0, 0, -85))
    grid = capture_depth(scene, pose, 1, 1, 70.0, NADIR, max_range=150.0)
    assert grid.ranges[0, 0] == pytest.approx(65.0)


def test_depth_no_hit_is_inf(open_field):
    # looking straight up: nothing to hit
    up = RigidTransform(Quaternion.from_yaw_pitch_roll(0.0, math.pi / 2.0, 0.0), Vec3())
    grid = capture_depth(open_field, NedPose(Vec3(0, 0, -5)), 3, 3, 40.0, up, max_range=100.0)
    assert np.all(np.isinf(grid.ranges))


def test_depth_world_points_land_on_ground(open_field):
    pose = NedPose(Vec3(3, -7, -40))
    grid = capture_depth(open_field, pose, 16, 16, 60.0, NADIR, max_range=200.0)
    pts = depth_to_world_points(grid, pose)
    assert len(pts) == 256
    assert np.allclose(pts[:, 2], 0.0, atol=1e-9)


def test_depth_config_defaults():
    cfg = DepthConfig()
    assert cfg.width == 64 and cfg.height == 64
