"""Declarative scenario configuration: scene, vehicles, sensors, task, run.

Validation errors name the offending field path so the CLI can print a
single actionable diagnostic and exit with the config-error code.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ParseError
from .geometry import NedPose, Quaternion, RigidTransform, Vec3
from .sensors import DepthConfig, LidarConfig
from .simcore import SensorSuite, SimConfig
from .vehicles import VehicleType
from .world import Scene, bundled_scene, load_scene

TASK_TYPES = ("mapping", "planning", "tracking", "formation", "none")


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    vtype: VehicleType
    initial: NedPose
    sensors: SensorSuite = field(default_factory=SensorSuite)


@dataclass
class ScenarioConfig:
    scene_name: str
    scene: Scene
    sim: SimConfig
    vehicles: list
    task_type: str
    task: dict
    outputs: str


def _expect(doc: dict, key: str, typ, where: str):
    if key not in doc:
        raise ConfigError(f"{where}.{key}: missing")
    val = doc[key]
    if typ is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(f"{where}.{key}: expected a number")
        return float(val)
    if not isinstance(val, typ) or (typ is int and isinstance(val, bool)):
        raise ConfigError(f"{where}.{key}: expected {typ.__name__}")
    return val


def _number(val, where: str) -> float:
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ConfigError(f"{where}: expected a number")
    return float(val)


def _point2(raw, where: str) -> tuple[float, float]:
    if not isinstance(raw, list) or len(raw) != 2:
        raise ConfigError(f"{where}: expected [n, e]")
    return _number(raw[0], where), _number(raw[1], where)


def _point3(raw, where: str) -> Vec3:
    if not isinstance(raw, list) or len(raw) != 3:
        raise ConfigError(f"{where}: expected [n, e, d]")
    return Vec3(_number(raw[0], where), _number(raw[1], where), _number(raw[2], where))


def _parse_lidar(doc: dict, where: str) -> tuple[LidarConfig, int]:
    known = {"channels", "vfov_deg", "hfov_deg", "points_per_channel", "max_range", "noise_sigma", "mount_d", "every"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown field")
    vfov = doc.get("vfov_deg", [-15.0, 15.0])
    if not isinstance(vfov, list) or len(vfov) != 2:
        raise ConfigError(f"{where}.vfov_deg: expected [min, max]")
    mount = RigidTransform(Quaternion.identity(), Vec3(0.0, 0.0, _number(doc.get("mount_d", 0.0), f"{where}.mount_d")))
    try:
        cfg = LidarConfig(
            channels=int(doc.get("channels", 16)),
            vfov_deg=(_number(vfov[0], f"{where}.vfov_deg"), _number(vfov[1], f"{where}.vfov_deg")),
            hfov_deg=_number(doc.get("hfov_deg", 360.0), f"{where}.hfov_deg"),
            points_per_channel=int(doc.get("points_per_channel", 360)),
            max_range=_number(doc.get("max_range", 100.0), f"{where}.max_range"),
            noise_sigma=_number(doc.get("noise_sigma", 0.0), f"{where}.noise_sigma"),
            mount=mount,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return cfg, int(doc.get("every", 1))


def _parse_depth(doc: dict, where: str) -> tuple[DepthConfig, int]:
    known = {"width", "height", "hfov_deg", "max_range", "every"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown field")
    # Nadir mount: optical axis pitched straight down (pitch -90 in NED).
    mount = RigidTransform(Quaternion.from_yaw_pitch_roll(0.0, -math.pi / 2.0, 0.0), Vec3())
    cfg = DepthConfig(
        width=int(doc.get("width", 64)),
        height=int(doc.get("height", 64)),
        hfov_deg=_number(doc.get("hfov_deg", 70.0), f"{where}.hfov_deg"),
        max_range=_number(doc.get("max_range", 200.0), f"{where}.max_range"),
        mount=mount,
    )
    return cfg, int(doc.get("every", 1))


def _parse_vehicle(doc: dict, idx: int) -> VehicleSpec:
    where = f"vehicles[{idx}]"
    known = {"id", "type", "initial", "sensors"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown field")
    vid = _expect(doc, "id", str, where)
    if not vid:
        raise ConfigError(f"{where}.id: must be nonempty")
    vtype_raw = _expect(doc, "type", str, where)
    try:
        vtype = VehicleType(vtype_raw)
    except ValueError:
        raise ConfigError(f"{where}.type: '{vtype_raw}' is not multirotor|car") from None
    init = _expect(doc, "initial", dict, where)
    n = _number(init.get("n", 0.0), f"{where}.initial.n")
    e = _number(init.get("e", 0.0), f"{where}.initial.e")
    d = _number(init.get("d", 0.0), f"{where}.initial.d")
    yaw = math.radians(_number(init.get("yaw_deg", 0.0), f"{where}.initial.yaw_deg"))
    pose = NedPose(Vec3(n, e, d), Quaternion.from_yaw_pitch_roll(yaw))
    sensors = SensorSuite()
    if "sensors" in doc and doc["sensors"] is not None:
        sdoc = doc["sensors"]
        if not isinstance(sdoc, dict):
            raise ConfigError(f"{where}.sensors: expected an object")
        lidar = lidar_every = depth = depth_every = None
        if sdoc.get("lidar") is not None:
            lidar, lidar_every = _parse_lidar(sdoc["lidar"], f"{where}.sensors.lidar")
        if sdoc.get("depth") is not None:
            depth, depth_every = _parse_depth(sdoc["depth"], f"{where}.sensors.depth")
        sensors = SensorSuite(lidar, lidar_every or 1, depth, depth_every or 1)
    return VehicleSpec(vid, vtype, pose, sensors)


def _require_task_keys(task: dict, keys, where: str = "task"):
    for key in keys:
        if key not in task:
            raise ConfigError(f"{where}.{key}: missing for task '{task.get('type')}'")


def _validate_task(task: dict, vehicle_ids: set) -> None:
    ttype = task.get("type")
    if ttype not in TASK_TYPES:
        raise ConfigError(f"task.type: '{ttype}' is not one of {TASK_TYPES}")

    def check_vehicle(key):
        vid = task.get(key)
        if not isinstance(vid, str) or vid not in vehicle_ids:
            raise ConfigError(f"task.{key}: '{vid}' is not a configured vehicle id")

    if ttype == "mapping":
        _require_task_keys(task, ("uav_id", "ugv_id", "uav_route", "ugv_route", "uav_speed", "ugv_speed"))
        check_vehicle("uav_id")
        check_vehicle("ugv_id")
        for key in ("uav_route", "ugv_route"):
            route = task[key]
            if not isinstance(route, list) or len(route) < 2:
                raise ConfigError(f"task.{key}: expected at least 2 waypoints")
    elif ttype == "planning":
        _require_task_keys(task, ("uav_id", "ugv_id", "goals", "grid", "height_threshold"))
        check_vehicle("uav_id")
        check_vehicle("ugv_id")
        goals = task["goals"]
        if not isinstance(goals, list) or not goals:
            raise ConfigError("task.goals: expected a nonempty list of [n, e]")
        for i, g in enumerate(goals):
            _point2(g, f"task.goals[{i}]")
        grid = task["grid"]
        for key in ("origin", "resolution", "width", "height"):
            if key not in grid:
                raise ConfigError(f"task.grid.{key}: missing")
    elif ttype == "tracking":
        _require_task_keys(task, ("uav_id", "ugv_id", "target_id", "target", "uav_standoff", "ugv_standoff"))
        check_vehicle("uav_id")
        check_vehicle("ugv_id")
        target_id = task["target_id"]
        if not isinstance(target_id, str) or not target_id:
            raise ConfigError("task.target_id: expected a nonempty string")
        if target_id in vehicle_ids:
            raise ConfigError(f"task.target_id: '{target_id}' collides with a configured vehicle id")
        tgt = task["target"]
        if not isinstance(tgt, dict) or not isinstance(tgt.get("waypoints"), list) or len(tgt["waypoints"]) < 2:
            raise ConfigError("task.target.waypoints: expected at least 2 waypoints")
        if _number(tgt.get("speed", 0), "task.target.speed") <= 0:
            raise ConfigError("task.target.speed: must be positive")
    elif ttype == "formation":
        _require_task_keys(task, ("ugv_ids", "uav_ids", "circle", "square"))
        for key in ("ugv_ids", "uav_ids"):
            ids = task[key]
            if not isinstance(ids, list) or not ids:
                raise ConfigError(f"task.{key}: expected a nonempty id list")
            for vid in ids:
                if vid not in vehicle_ids:
                    raise ConfigError(f"task.{key}: '{vid}' is not a configured vehicle id")
        for key in ("circle", "square"):
            if not isinstance(task[key], dict):
                raise ConfigError(f"task.{key}: expected an object")


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    known = {"scene", "sim", "vehicles", "task", "outputs"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"config.{sorted(extra)[0]}: unknown field")
    scene_name = _expect(doc, "scene", str, "config")
    if os.sep in scene_name or scene_name.endswith(".json"):
        path = Path(scene_name)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        scene = load_scene(path)
    else:
        scene = bundled_scene(scene_name)
    sim_doc = _expect(doc, "sim", dict, "config")
    try:
        sim = SimConfig(
            dt=_number(sim_doc.get("dt", 0.02), "sim.dt"),
            duration=_number(sim_doc.get("duration", 10.0), "sim.duration"),
            seed=int(_expect(sim_doc, "seed", int, "sim")) if "seed" in sim_doc else 0,
            realtime_factor=_number(sim_doc.get("realtime_factor", 0.0), "sim.realtime_factor"),
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc
    vehicles_doc = _expect(doc, "vehicles", list, "config")
    vehicles = [_parse_vehicle(v, i) for i, v in enumerate(vehicles_doc)]
    seen = set()
    for i, v in enumerate(vehicles):
        if v.id in seen:
            raise ConfigError(f"vehicles[{i}].id: duplicate vehicle id '{v.id}'")
        seen.add(v.id)
    task = _expect(doc, "task", dict, "config")
    _validate_task(task, seen)
    outputs = doc.get("outputs", "out")
    if not isinstance(outputs, str):
        raise ConfigError("config.outputs: expected a string path")
    return ScenarioConfig(scene_name, scene, sim, vehicles, task["type"], task, outputs)


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc, path.parent)


def bundled_config_path(name: str) -> Path:
    from importlib import resources

    return Path(str(resources.files("agsim").joinpath(f"data/configs/{name}.json")))


def with_overrides(cfg: ScenarioConfig, seed: int | None = None,
                   realtime: float | None = None, outputs: str | None = None) -> ScenarioConfig:
    sim = cfg.sim
    if seed is not None or realtime is not None:
        sim = SimConfig(
            sim.dt,
            sim.duration,
            sim.seed if seed is None else seed,
            sim.realtime_factor if realtime is None else realtime,
        )
    return ScenarioConfig(
        cfg.scene_name, cfg.scene, sim, cfg.vehicles, cfg.task_type, cfg.task,
        cfg.outputs if outputs is None else outputs,
    )
