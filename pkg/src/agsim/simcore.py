"""Lockstep simulation core.

One thread owns the step loop. Each tick consumes the freshest mailbox
command per vehicle (latest wins), advances all vehicles by dt, then
refreshes sensor snapshots — everything stamped with the same SimTime.
External callers interact only through the thread-safe command mailbox and
immutable published snapshots, so the loop never blocks on clients.
"""

from __future__ import annotations

import threading
import time as _wall
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DuplicateId, NoSuchSensor, TypeMismatch, UnknownVehicle
from .geometry import NedPose, Quaternion, Vec3
from .sensors import (
    DepthConfig,
    DepthGrid,
    LidarConfig,
    Odometry,
    PointCloud,
    capture_depth,
    cloud_to_world,
    lidar_scan,
    sensor_pose,
)
from .simtime import SimTime
from .vehicles import (
    CarCommand,
    UavCommand,
    VehicleParams,
    VehicleState,
    VehicleType,
    step_car,
    step_uav,
)
from .world import Scene

# A scripted vehicle's pose is a pure function of time:
# script(seconds) -> (position Vec3, yaw, velocity Vec3)
Script = Callable[[float], tuple[Vec3, float, Vec3]]


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02
    duration: float = 10.0
    seed: int = 0
    realtime_factor: float = 0.0  # 0 = as fast as possible

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class SensorSuite:
    lidar: LidarConfig | None = None
    lidar_every: int = 1
    depth: DepthConfig | None = None
    depth_every: int = 1


@dataclass
class _Entry:
    vtype: VehicleType
    state: VehicleState
    sensors: SensorSuite
    params: VehicleParams
    script: Script | None = None
    pending: object | None = None  # mailbox, latest command wins
    held: object | None = None  # command applied until replaced
    odometry: Odometry | None = None
    lidar_cloud: PointCloud | None = None
    depth_grid: DepthGrid | None = None


@dataclass(frozen=True)
class PublishedTick:
    """Immutable per-tick snapshot served to RPC handlers."""

    time: SimTime
    states: dict
    odometry: dict
    lidar: dict
    depth: dict


class VehicleHandle:
    """Per-vehicle API scoped to exactly one registered vehicle."""

    def __init__(self, sim: "Simulator", vehicle_id: str):
        self._sim = sim
        self.vehicle_id = vehicle_id

    def state(self) -> VehicleState:
        return self._sim.state(self.vehicle_id)

    def odometry(self) -> Odometry:
        return self._sim.odometry(self.vehicle_id)

    def lidar(self) -> PointCloud:
        return self._sim.lidar(self.vehicle_id)

    def depth(self) -> DepthGrid:
        return self._sim.depth(self.vehicle_id)

    def command(self, cmd) -> None:
        self._sim.submit_command(self.vehicle_id, cmd)


class Simulator:
    def __init__(self, scene: Scene, config: SimConfig, params: VehicleParams | None = None):
        self.scene = scene
        self.config = config
        self.default_params = params or VehicleParams()
        self._entries: dict[str, _Entry] = {}
        self._tick = 0
        self._mailbox_lock = threading.Lock()
        self._rng = np.random.default_rng(config.seed)
        self.published: PublishedTick | None = None

    # -- registry ----------------------------------------------------------

    def register_vehicle(self, vehicle_id: str, vtype: VehicleType, initial: NedPose,
                         sensors: SensorSuite | None = None,
                         params: VehicleParams | None = None,
                         script: Script | None = None) -> VehicleHandle:
        if vehicle_id in self._entries:
            raise DuplicateId(f"vehicle id '{vehicle_id}' already registered")
        state = VehicleState(vehicle_id, vtype, initial, Vec3(), 0.0, SimTime.at(self._tick, self.config.dt))
        entry = _Entry(vtype, state, sensors or SensorSuite(), params or self.default_params, script)
        self._entries[vehicle_id] = entry
        self._refresh_sensors(entry, state.stamp, force=True)
        self._publish()
        return VehicleHandle(self, vehicle_id)

    def vehicle_ids(self) -> list[str]:
        return list(self._entries)

    def vehicle_type(self, vehicle_id: str) -> VehicleType:
        return self._require(vehicle_id).vtype

    def target_vehicle_id(self) -> str | None:
        for vid, entry in self._entries.items():
            if entry.script is not None:
                return vid
        return None

    def _require(self, vehicle_id: str) -> _Entry:
        entry = self._entries.get(vehicle_id)
        if entry is None:
            raise UnknownVehicle(f"no vehicle '{vehicle_id}' registered")
        return entry

    # -- queries (immutable snapshots) --------------------------------------

    def time(self) -> SimTime:
        return SimTime.at(self._tick, self.config.dt)

    def state(self, vehicle_id: str) -> VehicleState:
        return self._require(vehicle_id).state

    def odometry(self, vehicle_id: str) -> Odometry:
        odom = self._require(vehicle_id).odometry
        assert odom is not None
        return odom

    def lidar(self, vehicle_id: str) -> PointCloud:
        entry = self._require(vehicle_id)
        if entry.sensors.lidar is None or entry.lidar_cloud is None:
            raise NoSuchSensor(f"vehicle '{vehicle_id}' has no lidar")
        return entry.lidar_cloud

    def depth(self, vehicle_id: str) -> DepthGrid:
        entry = self._require(vehicle_id)
        if entry.sensors.depth is None or entry.depth_grid is None:
            raise NoSuchSensor(f"vehicle '{vehicle_id}' has no depth camera")
        return entry.depth_grid

    # -- commands ------------------------------------------------------------

    def submit_command(self, vehicle_id: str, cmd) -> None:
        entry = self._require(vehicle_id)
        if entry.vtype is VehicleType.MULTIROTOR and not isinstance(cmd, UavCommand):
            raise TypeMismatch(f"vehicle '{vehicle_id}' expects UavCommand")
        if entry.vtype is VehicleType.CAR and not isinstance(cmd, CarCommand):
            raise TypeMismatch(f"vehicle '{vehicle_id}' expects CarCommand")
        with self._mailbox_lock:
            entry.pending = cmd

    # -- stepping ------------------------------------------------------------

    def step(self) -> SimTime:
        dt = self.config.dt
        with self._mailbox_lock:
            for entry in self._entries.values():
                if entry.pending is not None:
                    entry.held = entry.pending
                    entry.pending = None
        stamp = SimTime.at(self._tick + 1, dt)
        for entry in self._entries.values():
            if entry.script is not None:
                pos, yaw, vel = entry.script(stamp.seconds)
                entry.state = VehicleState(
                    entry.state.id, entry.vtype, NedPose(pos, Quaternion.from_yaw_pitch_roll(yaw)), vel, 0.0, stamp
                )
            elif entry.vtype is VehicleType.MULTIROTOR:
                new = step_uav(entry.state, entry.held, entry.params, dt, self.scene.ground_d)
                entry.state = replace(new, stamp=stamp)
            else:
                new = step_car(entry.state, entry.held, entry.params, self.scene, dt)
                entry.state = replace(new, stamp=stamp)
        self._tick += 1
        for entry in self._entries.values():
            self._refresh_sensors(entry, stamp)
        self._publish()
        return stamp

    def _refresh_sensors(self, entry: _Entry, stamp: SimTime, force: bool = False) -> None:
        state = entry.state
        entry.odometry = Odometry(state.id, stamp, state.pose, state.velocity)
        suite = entry.sensors
        if suite.lidar is not None and (force or self._tick % max(1, suite.lidar_every) == 0):
            entry.lidar_cloud = lidar_scan(
                self.scene, state.pose, suite.lidar, self._rng, stamp, frame_id=f"{state.id}/lidar"
            )
        if suite.depth is not None and (force or self._tick % max(1, suite.depth_every) == 0):
            cfg = suite.depth
            entry.depth_grid = capture_depth(
                self.scene, state.pose, cfg.width, cfg.height, cfg.hfov_deg, cfg.mount, cfg.max_range, stamp
            )

    def _publish(self) -> None:
        self.published = PublishedTick(
            SimTime.at(self._tick, self.config.dt),
            {vid: e.state for vid, e in self._entries.items()},
            {vid: e.odometry for vid, e in self._entries.items()},
            {vid: e.lidar_cloud for vid, e in self._entries.items()},
            {vid: e.depth_grid for vid, e in self._entries.items()},
        )


def read_odometry(sim: Simulator, vehicle_id: str) -> Odometry:
    """Latest-tick odometry snapshot for one vehicle."""
    return sim.odometry(vehicle_id)


@dataclass
class RunArtifacts:
    rows: list = field(default_factory=list)  # trajectory rows, one per vehicle per tick
    clouds: dict = field(default_factory=dict)  # vehicle id -> accumulated world-frame points
    extras: dict = field(default_factory=dict)
    tick_overruns: int = 0


TRAJECTORY_HEADER = "tick,seconds,vehicle_id,n,e,d,yaw,vn,ve,vd"


def _trajectory_row(state: VehicleState) -> tuple:
    p = state.pose.position
    v = state.velocity
    return (
        state.stamp.tick,
        state.stamp.seconds,
        state.id,
        p.n,
        p.e,
        p.d,
        state.pose.orientation.yaw(),
        v.n,
        v.e,
        v.d,
    )


def run(sim: Simulator, controller: Callable[[Simulator], None] | None = None,
        on_tick: Callable[[Simulator], None] | None = None,
        collect_clouds: tuple[str, ...] = ()) -> RunArtifacts:
    """Execute duration/dt lockstep ticks and gather logs.

    The controller runs before each step on the previous tick's snapshots
    and may only submit commands; on_tick runs after each step for metric
    collection. Deterministic for a fixed (config, scenario).
    """
    art = RunArtifacts()
    acc: dict[str, list] = {vid: [] for vid in collect_clouds}
    cfg = sim.config
    pace = cfg.realtime_factor > 0
    t0 = _wall.perf_counter()
    for k in range(cfg.n_ticks):
        if pace:
            target = (k * cfg.dt) / cfg.realtime_factor
            lag = target - (_wall.perf_counter() - t0)
            if lag > 0:
                _wall.sleep(lag)
        tick_start = _wall.perf_counter()
        if controller is not None:
            controller(sim)
        sim.step()
        for vid in sim.vehicle_ids():
            art.rows.append(_trajectory_row(sim.state(vid)))
        for vid in acc:
            entry = sim._entries[vid]
            cloud = entry.lidar_cloud
            if cloud is not None and cloud.stamp.tick == sim.time().tick:
                pose = sensor_pose(entry.state.pose, entry.sensors.lidar.mount)
                acc[vid].append(cloud_to_world(cloud, pose))
        if on_tick is not None:
            on_tick(sim)
        if pace and (_wall.perf_counter() - tick_start) > cfg.dt / cfg.realtime_factor:
            art.tick_overruns += 1
    for vid, chunks in acc.items():
        art.clouds[vid] = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 3))
    return art


def write_trajectory_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(TRAJECTORY_HEADER + "\n")
        for r in rows:
            f.write(f"{r[0]},{r[1]!r},{r[2]},{r[3]!r},{r[4]!r},{r[5]!r},{r[6]!r},{r[7]!r},{r[8]!r},{r[9]!r}\n")
