import math

import numpy as np
import pytest

from agsim.errors import DegenerateInput, InsufficientCorrespondences, NoPairs
from agsim.geometry import NedPose, Quaternion, RigidTransform, Vec3
from agsim.registration import (
    IcpParams,
    VoxelHash,
    best_fit_transform,
    cloud_rmse,
    icp,
    voxel_downsample,
)
from agsim.sensors import LidarConfig, lidar_scan
from conftest import random_rigid


def brute_force_nn(queries, targets, max_dist):
    """Independent oracle for the voxel-hash search."""
    idx = np.full(len(queries), -1, dtype=np.int64)
    for i, q in enumerate(queries):
        d = np.linalg.norm(targets - q, axis=1)
        j = int(np.argmin(d))
        if d[j] <= max_dist:
            idx[i] = j
    return idx


@pytest.fixture(scope="module")
def scene_cloud(bridge_town):
    pose = NedPose(Vec3(10.0, 10.0, -2.0), Quaternion.from_yaw_pitch_roll(0.5))
    cfg = LidarConfig(channels=16, vfov_deg=(-25.0, 10.0), points_per_channel=360, max_range=35.0)
    cloud = lidar_scan(bridge_town, pose, cfg)
    world = cloud.points @ pose.orientation.to_matrix().T + pose.position.to_array()
    rng = np.random.default_rng(99)
    return world[rng.choice(len(world), size=500, replace=False)]


def test_best_fit_identity():
    pts = np.random.default_rng(1).uniform(-5, 5, size=(40, 3))
    t = best_fit_transform(pts, pts)
    assert t.translation.norm() < 1e-12
    assert t.rotation.angle_to(Quaternion.identity()) < 1e-12


def test_best_fit_pure_translation():
    pts = np.random.default_rng(2).uniform(-5, 5, size=(40, 3))
    t = best_fit_transform(pts, pts + np.array([1.0, 0.0, 0.0]))
    assert t.translation.n == pytest.approx(1.0, abs=1e-12)
    assert t.rotation.angle_to(Quaternion.identity()) < 1e-10


def test_best_fit_yaw90():
    pts = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [2.0, 1.0, -1.0]])
    q = Quaternion.from_yaw_pitch_roll(math.pi / 2)
    tgt = pts @ q.to_matrix().T
    t = best_fit_transform(pts, tgt)
    for basis in (Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)):
        assert (t.apply(basis) - q.rotate(basis)).norm() < 1e-9


def test_best_fit_rotation_is_proper():
    rng = np.random.default_rng(31)
    for _ in range(25):
        pts = rng.uniform(-3, 3, size=(20, 3))
        t = random_rigid(rng, 170.0, 2.0)
        tgt = t.apply_array(pts)
        est = best_fit_transform(pts, tgt)
        m = est.rotation.to_matrix()
        assert np.allclose(m @ m.T, np.eye(3), atol=1e-9)
        assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-9)


def test_best_fit_too_few_points():
    with pytest.raises(DegenerateInput):
        best_fit_transform(np.zeros((2, 3)), np.zeros((2, 3)))


def test_best_fit_collinear_degenerate():
    line = np.array([[float(i), 0.0, 0.0] for i in range(10)])
    with pytest.raises(DegenerateInput):
        best_fit_transform(line, line + 1.0)


def test_voxel_hash_matches_brute_force():
    rng = np.random.default_rng(4)
    targets = rng.uniform(-10, 10, size=(400, 3))
    queries = rng.uniform(-11, 11, size=(300, 3))
    for max_dist in (0.5, 1.5, 4.0):
        got, _ = VoxelHash(targets, max_dist).query(queries, max_dist)
        want = brute_force_nn(queries, targets, max_dist)
        assert np.array_equal(got, want)


def test_voxel_hash_tie_breaks_lowest_index():
    targets = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    idx, _ = VoxelHash(targets, 2.0).query(np.array([[1.0, 0.0, 0.0]]), 2.0)
    assert idx[0] == 0


def test_icp_identical_clouds():
    pts = np.random.default_rng(5).uniform(-8, 8, size=(200, 3))
    res = icp(pts, pts)
    assert res.rmse < 1e-12
    assert res.converged
    assert res.iterations <= 2
    assert res.transform.translation.norm() < 1e-9


def test_icp_recovers_small_shift():
    pts = np.random.default_rng(6).uniform(-8, 8, size=(300, 3))
    shift = np.array([0.3, -0.1, 0.2])
    res = icp(pts + shift, pts)
    t = res.transform.translation
    assert abs(t.n + 0.3) < 1e-3 and abs(t.e - 0.1) < 1e-3 and abs(t.d + 0.2) < 1e-3
    assert res.rmse < 1e-6


def test_icp_noiseless_recovery_property(scene_cloud):
    rng = np.random.default_rng(12)
    params = IcpParams(max_iterations=100, correspondence_max_dist=15.0, convergence_eps=1e-9)
    centroid = scene_cloud.mean(axis=0)
    for _ in range(20):
        t = random_rigid(rng, 20.0, 1.0)
        src = (scene_cloud - centroid) @ t.rotation.to_matrix().T + centroid + t.translation.to_array()
        res = icp(src, scene_cloud, None, params)
        moved = res.transform.apply_array(src)
        assert np.abs(moved - scene_cloud).max() < 1e-3
        assert math.degrees(res.transform.rotation.angle_to(t.rotation.conjugate())) < 0.1
        assert res.rmse < 1e-6


def test_icp_rmse_history_monotone(scene_cloud):
    rng = np.random.default_rng(13)
    t = random_rigid(rng, 15.0, 0.8)
    src = t.apply_array(scene_cloud)
    res = icp(src, scene_cloud, None, IcpParams(max_iterations=100, correspondence_max_dist=20.0, convergence_eps=1e-12))
    hist = res.rmse_history
    assert len(hist) >= 2
    for a, b in zip(hist, hist[1:]):
        assert b <= a + 1e-9


def test_icp_insufficient_correspondences():
    a = np.random.default_rng(7).uniform(0, 1, size=(50, 3))
    b = a + 100.0
    with pytest.raises(InsufficientCorrespondences):
        icp(a, b, None, IcpParams(correspondence_max_dist=1.0))


def test_cloud_rmse_identity_zero():
    pts = np.random.default_rng(8).uniform(-3, 3, size=(50, 3))
    assert cloud_rmse(pts, pts, RigidTransform.identity(), 1.0) == 0.0


def test_cloud_rmse_single_points():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[1.0, 0.0, 0.0]])
    assert cloud_rmse(a, b, RigidTransform.identity(), 2.0) == pytest.approx(1.0)


def test_cloud_rmse_hand_case():
    # residual distances {3, 4} -> sqrt((9+16)/2)
    src = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    tgt = np.array([[3.0, 0.0, 0.0], [10.0, 4.0, 0.0]])
    got = cloud_rmse(src, tgt, RigidTransform.identity(), 6.0)
    assert got == pytest.approx(math.sqrt(12.5))


def test_cloud_rmse_no_pairs():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[50.0, 0.0, 0.0]])
    with pytest.raises(NoPairs):
        cloud_rmse(a, b, RigidTransform.identity(), 1.0)


def test_voxel_downsample_deterministic_and_reducing():
    rng = np.random.default_rng(9)
    pts = rng.uniform(-5, 5, size=(2000, 3))
    a = voxel_downsample(pts, 0.5)
    b = voxel_downsample(pts, 0.5)
    assert np.array_equal(a, b)
    assert len(a) < len(pts)
