"""Synthetic perception: spinning lidar, nadir-capable depth grid, odometry.

All sensors are pure functions of (scene, pose, config) plus an explicit
rng for range noise, so captures are deterministic and thread-safe. Points
are reported in the sensor frame; consumers move them to NED with the pose
carried at the same stamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import NedPose, RigidTransform, Vec3
from .simtime import SimTime
from .world import Scene


@dataclass(frozen=True)
class LidarConfig:
    channels: int = 16
    vfov_deg: tuple[float, float] = (-15.0, 15.0)
    hfov_deg: float = 360.0
    points_per_channel: int = 360
    max_range: float = 100.0
    noise_sigma: float = 0.0
    mount: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if not self.vfov_deg[0] < self.vfov_deg[1]:
            raise ValueError("vfov min must be below max")


@dataclass(frozen=True)
class DepthConfig:
    width: int = 64
    height: int = 64
    hfov_deg: float = 70.0
    max_range: float = 200.0
    mount: RigidTransform = field(default_factory=RigidTransform)


@dataclass(frozen=True)
class PointCloud:
    frame_id: str
    stamp: SimTime
    points: np.ndarray  # (N, 3) float64, in the declared frame


@dataclass(frozen=True)
class Odometry:
    vehicle_id: str
    stamp: SimTime
    pose: NedPose
    velocity: Vec3


@dataclass(frozen=True)
class DepthGrid:
    stamp: SimTime
    width: int
    height: int
    hfov_deg: float
    ranges: np.ndarray  # (height, width) hit distances, +inf for no hit
    mount: RigidTransform = field(default_factory=RigidTransform)


def _lidar_directions(cfg: LidarConfig) -> np.ndarray:
    """Unit ray directions in the sensor frame, (channels*ppc, 3)."""
    vmin, vmax = cfg.vfov_deg
    if cfg.channels == 1:
        elevs = np.array([(vmin + vmax) / 2.0])
    else:
        elevs = np.linspace(vmin, vmax, cfg.channels)
    if cfg.hfov_deg >= 360.0:
        az = np.arange(cfg.points_per_channel) * (360.0 / cfg.points_per_channel)
    else:
        az = np.linspace(-cfg.hfov_deg / 2.0, cfg.hfov_deg / 2.0, cfg.points_per_channel)
    el = np.radians(elevs)[:, None]
    azr = np.radians(az)[None, :]
    dirs = np.stack(
        [
            np.cos(el) * np.cos(azr) * np.ones_like(azr),
            np.cos(el) * np.sin(azr) * np.ones_like(azr),
            -np.sin(el) * np.ones_like(azr),
        ],
        axis=-1,
    )
    return dirs.reshape(-1, 3)


def sensor_pose(vehicle_pose: NedPose, mount: RigidTransform) -> NedPose:
    t = vehicle_pose.as_transform().compose(mount)
    return NedPose(t.translation, t.rotation)


def lidar_scan(scene: Scene, vehicle_pose: NedPose, cfg: LidarConfig, rng=None,
               stamp: SimTime = SimTime(0, 0.0), frame_id: str = "lidar") -> PointCloud:
    """One full scan. Hits become sensor-frame points; misses are omitted.

    Range noise is Gaussian with sigma cfg.noise_sigma, truncated at 3 sigma
    so every point stays on scene geometry within the documented tolerance.
    """
    sp = sensor_pose(vehicle_pose, cfg.mount)
    dirs_sensor = _lidar_directions(cfg)
    rot = sp.orientation.to_matrix()
    dirs_world = dirs_sensor @ rot.T
    origin = sp.position.to_array()
    origins = np.broadcast_to(origin, dirs_world.shape)
    dist, hit = scene.cast_rays(origins, dirs_world, cfg.max_range)
    mask = hit != -1
    ranges = dist[mask]
    if cfg.noise_sigma > 0.0 and rng is not None:
        noise = rng.normal(0.0, cfg.noise_sigma, size=ranges.shape)
        np.clip(noise, -3.0 * cfg.noise_sigma, 3.0 * cfg.noise_sigma, out=noise)
        ranges = np.maximum(ranges + noise, 0.0)
    pts = dirs_sensor[mask] * ranges[:, None]
    return PointCloud(frame_id, stamp, pts)


def capture_depth(scene: Scene, vehicle_pose: NedPose, width: int, height: int,
                  hfov_deg: float, mount: RigidTransform = RigidTransform(),
                  max_range: float = 200.0, stamp: SimTime = SimTime(0, 0.0)) -> DepthGrid:
    """Pinhole-style ray fan; each cell holds the first-hit distance or +inf.

    Camera frame: x is the optical axis, y spans columns (right), z spans
    rows (down). Ranges are Euclidean distances along each ray.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    sp = sensor_pose(vehicle_pose, mount)
    f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    cols = (np.arange(width) - (width - 1) / 2.0) / f
    rows = (np.arange(height) - (height - 1) / 2.0) / f
    yy, zz = np.meshgrid(cols, rows)
    dirs = np.stack([np.ones_like(yy), yy, zz], axis=-1).reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    rot = sp.orientation.to_matrix()
    dirs_world = dirs @ rot.T
    origin = sp.position.to_array()
    ranges = np.full(dirs_world.shape[0], np.inf)
    # Chunked to bound the (rays x boxes) slab temporaries.
    chunk = 16384
    for s in range(0, dirs_world.shape[0], chunk):
        sl = slice(s, s + chunk)
        origins = np.broadcast_to(origin, dirs_world[sl].shape)
        dist, hit = scene.cast_rays(origins, dirs_world[sl], max_range)
        ranges[sl] = np.where(hit != -1, dist, np.inf)
    return DepthGrid(stamp, width, height, hfov_deg, ranges.reshape(height, width), mount)


def depth_to_world_points(grid: DepthGrid, vehicle_pose: NedPose) -> np.ndarray:
    """World-frame hit points of a depth grid's finite cells, (N, 3)."""
    sp = sensor_pose(vehicle_pose, grid.mount)
    f = (grid.width / 2.0) / math.tan(math.radians(grid.hfov_deg) / 2.0)
    cols = (np.arange(grid.width) - (grid.width - 1) / 2.0) / f
    rows = (np.arange(grid.height) - (grid.height - 1) / 2.0) / f
    yy, zz = np.meshgrid(cols, rows)
    dirs = np.stack([np.ones_like(yy), yy, zz], axis=-1).reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    r = grid.ranges.reshape(-1)
    mask = np.isfinite(r)
    rot = sp.orientation.to_matrix()
    return (dirs[mask] * r[mask][:, None]) @ rot.T + sp.position.to_array()


def cloud_to_world(cloud: PointCloud, sensor_pose_at_stamp: NedPose) -> np.ndarray:
    """Sensor-frame cloud points into world NED, (N, 3)."""
    rot = sensor_pose_at_stamp.orientation.to_matrix()
    return cloud.points @ rot.T + sensor_pose_at_stamp.position.to_array()


def save_cloud(path_txt, points_world: np.ndarray, frame_id: str, stamp: SimTime) -> None:
    """Write `n e d` lines plus the sidecar JSON header."""
    import json
    from pathlib import Path

    path_txt = Path(path_txt)
    with open(path_txt, "w", encoding="utf-8") as f:
        for p in points_world:
            f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
    header = {"frame_id": frame_id, "stamp_tick": stamp.tick, "count": int(len(points_world))}
    with open(path_txt.with_suffix(".json"), "w", encoding="utf-8") as f:
        json.dump(header, f, indent=1)
        f.write("\n")
