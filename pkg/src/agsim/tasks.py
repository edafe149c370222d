"""Task runners: wire a scenario through the sim core and emit artifacts.

Each runner builds the simulator from a ScenarioConfig, drives per-tick
controllers through the command mailbox, and writes the task's report plus
its delimited artifacts into the output directory. Everything downstream
of the seed is deterministic.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

from .config import ScenarioConfig
from .errors import NoPath, PathExhausted, TaskError
from .geometry import NedPose, Quaternion, RigidTransform, Vec3
from .metrics import error_stats, error_stats_dict, traj_stats, traj_stats_dict
from .planning import (
    FREE,
    OCCUPIED,
    OccupancyGrid,
    PurePursuitParams,
    astar,
    build_occupancy,
    inflate,
    lookahead_point,
    pure_pursuit_step,
    save_grid_pgm,
)
from .registration import IcpParams, icp, registration_report, voxel_downsample
from .sensors import depth_to_world_points, save_cloud
from .simcore import Simulator, run, write_trajectory_csv
from .tracking import (
    CirclePattern,
    FormationSpec,
    SquarePattern,
    StandoffParams,
    TargetScript,
    formation_commands,
    formation_references,
    fuse_observations,
    observe_target,
    standoff_command,
    xy_tracking_error,
    yaw_error_deg,
)
from .vehicles import CarCommand, UavCommand, VehicleType


def build_simulator(cfg: ScenarioConfig) -> Simulator:
    """Register all configured vehicles (plus the scripted tracking target)."""
    sim = Simulator(cfg.scene, cfg.sim)
    for spec in cfg.vehicles:
        sim.register_vehicle(spec.id, spec.vtype, spec.initial, spec.sensors)
    if cfg.task_type == "tracking":
        script = target_script_from_task(cfg)
        pos, yaw, _ = script.sample(0.0)
        sim.register_vehicle(
            cfg.task["target_id"], VehicleType.CAR,
            NedPose(pos, Quaternion.from_yaw_pitch_roll(yaw)),
            script=script.sample,
        )
    return sim


def target_script_from_task(cfg: ScenarioConfig) -> TargetScript:
    tgt = cfg.task["target"]
    ground = cfg.scene.ground_d
    wps = tuple(Vec3(float(w[0]), float(w[1]), ground) for w in tgt["waypoints"])
    return TargetScript(wps, float(tgt.get("speed", 2.0)), bool(tgt.get("loop", False)))


def _samples_for(rows, vehicle_id: str):
    return [(r[1], r[3], r[4], r[5]) for r in rows if r[2] == vehicle_id]


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


# -- mapping -------------------------------------------------------------------


def run_mapping_task(cfg: ScenarioConfig, outdir: Path) -> dict:
    sim = build_simulator(cfg)
    task = cfg.task
    uav_id, ugv_id = task["uav_id"], task["ugv_id"]
    uav_route = [Vec3(float(w[0]), float(w[1]), float(w[2])) for w in task["uav_route"]]
    ugv_route = [Vec3(float(w[0]), float(w[1]), cfg.scene.ground_d) for w in task["ugv_route"]]
    pursuit = PurePursuitParams(cruise_speed=float(task["ugv_speed"]))
    uav_speed = float(task["uav_speed"])
    leg = {"uav": 0}

    def controller(sim: Simulator):
        states = sim.published.states
        try:
            sim.submit_command(ugv_id, pure_pursuit_step(states[ugv_id], ugv_route, pursuit))
        except PathExhausted:
            sim.submit_command(ugv_id, CarCommand())
        uav = states[uav_id]
        wp = uav_route[leg["uav"]]
        if (wp - uav.pose.position).norm() < 0.6 and leg["uav"] < len(uav_route) - 1:
            leg["uav"] += 1
            wp = uav_route[leg["uav"]]
        yaw = math.atan2(wp.e - uav.pose.position.e, wp.n - uav.pose.position.n)
        sim.submit_command(uav_id, UavCommand("waypoint", waypoint=wp, yaw_cmd=yaw, speed_limit=uav_speed))

    art = run(sim, controller, collect_clouds=(uav_id, ugv_id))

    mis = task.get("misalignment", {"translation": [0.3, -0.2, 0.25], "yaw_deg": 2.0})
    t_mis = RigidTransform(
        Quaternion.from_yaw_pitch_roll(math.radians(float(mis.get("yaw_deg", 0.0)))),
        Vec3(*[float(x) for x in mis.get("translation", [0.0, 0.0, 0.0])]),
    )
    uav_pts = t_mis.apply_array(art.clouds[uav_id])
    ugv_pts = art.clouds[ugv_id]
    icp_doc = task.get("icp", {})
    voxel = float(icp_doc.get("voxel", 0.4))
    src = voxel_downsample(uav_pts, voxel)
    tgt = voxel_downsample(ugv_pts, voxel)
    params = IcpParams(
        max_iterations=int(icp_doc.get("max_iterations", 50)),
        correspondence_max_dist=float(icp_doc.get("max_dist", 2.0)),
        convergence_eps=float(icp_doc.get("eps", 1e-6)),
    )
    result = icp(src, tgt, RigidTransform.identity(), params)

    stamp = sim.time()
    save_cloud(outdir / "cloud_uav.txt", uav_pts, f"{uav_id}/lidar", stamp)
    save_cloud(outdir / "cloud_ugv.txt", ugv_pts, f"{ugv_id}/lidar", stamp)
    report = {
        "task": "mapping",
        "ugv": traj_stats_dict(traj_stats(_samples_for(art.rows, ugv_id))),
        "uav": traj_stats_dict(traj_stats(_samples_for(art.rows, uav_id))),
        "registration": registration_report(result),
        "cloud_points": {"uav": int(len(uav_pts)), "ugv": int(len(ugv_pts))},
        "misalignment_truth": {
            "translation": [t_mis.translation.n, t_mis.translation.e, t_mis.translation.d],
            "yaw_deg": float(mis.get("yaw_deg", 0.0)),
        },
    }
    _write_json(outdir / "registration.json", report["registration"])
    _write_json(outdir / "mapping_report.json", report)
    write_trajectory_csv(outdir / "trajectory.csv", art.rows)
    return report


# -- planning ------------------------------------------------------------------


def run_planning_task(cfg: ScenarioConfig, outdir: Path) -> dict:
    sim = build_simulator(cfg)
    task = cfg.task
    uav_id, ugv_id = task["uav_id"], task["ugv_id"]
    scene = cfg.scene
    grid_doc = task["grid"]
    origin_n, origin_e = float(grid_doc["origin"][0]), float(grid_doc["origin"][1])
    resolution = float(grid_doc["resolution"])
    width, height = int(grid_doc["width"]), int(grid_doc["height"])

    depth_grid = sim.depth(uav_id)
    uav_pose = sim.state(uav_id).pose
    cloud = depth_to_world_points(depth_grid, uav_pose)
    occupancy = build_occupancy(
        [cloud], scene.ground_d, origin_n, origin_e, resolution, width, height,
        float(task["height_threshold"]), scene=scene,
    )
    inflate_cells = int(task.get("inflate_cells", 2))
    # truth holds sensed occupancy plus cells discovered by blocking; working
    # adds the vehicle-footprint margin on top.
    truth = OccupancyGrid(origin_n, origin_e, resolution, occupancy.cells.copy())
    working = inflate(truth, inflate_cells)

    pdoc = task.get("pursuit", {})
    pursuit = PurePursuitParams(
        lookahead=float(pdoc.get("lookahead", 3.0)),
        waypoint_capture=float(pdoc.get("capture", 1.0)),
        cruise_speed=float(pdoc.get("cruise", 3.6)),
    )
    goals = [(float(g[0]), float(g[1])) for g in task["goals"]]
    car = sim.default_params.car
    hover = sim.state(uav_id).pose.position

    ctl = {
        "leg": 0, "path": None, "blocked_s": 0.0, "reverse_m": 0.0, "reverse_min": 0.0,
        "reversed": 0.0, "replans": 0, "done": False, "failed": None, "last_cmd_speed": 0.0,
        "done_tick": None, "violations": 0, "legs": [],
    }

    def plan_to(goal_idx: int):
        state = sim.state(ugv_id)
        start = working.cell_of(state.pose.position.n, state.pose.position.e)
        goal = working.cell_of(*goals[goal_idx])
        if not working.in_grid(*start) or not working.in_grid(*goal):
            raise TaskError(f"cell outside planning grid: start={start} goal={goal}")
        grid2 = OccupancyGrid(working.origin_n, working.origin_e, working.resolution, working.cells.copy())
        # Relax the footprint margin (not the sensed truth) around the start
        # so a vehicle wedged against a margin band can plan its way out.
        rlo, rhi = max(0, start[0] - 2), min(working.height, start[0] + 3)
        clo, chi = max(0, start[1] - 2), min(working.width, start[1] + 3)
        grid2.cells[rlo:rhi, clo:chi] = truth.cells[rlo:rhi, clo:chi]
        grid2.cells[start[0], start[1]] = FREE
        grid2.cells[goal[0], goal[1]] = FREE
        path = astar(grid2, start, goal, unknown_is="occupied")
        ctl["path"] = path
        ctl["legs"].append({"goal": list(goals[goal_idx]), "cells": len(path.cells), "cost": path.cost})
        return path

    def discover_and_replan():
        state = sim.state(ugv_id)
        p = state.pose.position
        radius = 6.0
        r0 = truth.cell_of(p.n - radius, p.e - radius)
        r1 = truth.cell_of(p.n + radius, p.e + radius)
        for row in range(max(0, r0[0]), min(truth.height, r1[0] + 1)):
            for col in range(max(0, r0[1]), min(truth.width, r1[1] + 1)):
                cn, ce = truth.center_of(row, col)
                if math.hypot(cn - p.n, ce - p.e) > radius:
                    continue
                try:
                    free = scene.is_traversable(cn, ce, car.clearance)
                except Exception:
                    free = False
                if not free:
                    truth.cells[row, col] = OCCUPIED
        working.cells[:] = inflate(truth, inflate_cells).cells
        ctl["replans"] += 1
        ctl["blocked_s"] = 0.0
        if ctl["replans"] > 40:
            ctl["failed"] = "replan limit reached"
            ctl["done"] = True
            return
        try:
            plan_to(ctl["leg"])
        except NoPath as exc:
            ctl["failed"] = str(exc)
            ctl["done"] = True
            return
        # Physically blocked: always back away from the contact before
        # resuming pursuit, whatever the new path's bearing.
        ctl["reverse_m"] = 2.5
        ctl["reverse_min"] = 1.5
        ctl["reversed"] = 0.0

    plan_to(0)

    # Pure pursuit cannot reach a lookahead point far off the nose; back up
    # with opposite lock until the path is roughly ahead again.
    REV_ENGAGE = 1.9
    REV_RELEASE = 1.2
    REV_BUDGET = 6.0

    def controller(sim: Simulator):
        states = sim.published.states
        uav = states[uav_id]
        sim.submit_command(uav_id, UavCommand("waypoint", waypoint=hover, yaw_cmd=uav.pose.orientation.yaw(), speed_limit=2.0))
        if ctl["done"]:
            sim.submit_command(ugv_id, CarCommand())
            return
        state = states[ugv_id]
        speed_now = state.velocity.horizontal_norm()
        if ctl["last_cmd_speed"] > 0.1 and speed_now < 1e-9:
            ctl["blocked_s"] += sim.config.dt
        else:
            ctl["blocked_s"] = 0.0
        if ctl["blocked_s"] > 1.0:
            discover_and_replan()
            if ctl["done"]:
                sim.submit_command(ugv_id, CarCommand())
                return
        _, alpha, _, captured = lookahead_point(state, ctl["path"], pursuit)
        if ctl["reverse_m"] > 0.0:
            if ctl["reversed"] >= ctl["reverse_min"] and abs(alpha) < REV_RELEASE:
                ctl["reverse_m"] = 0.0
            else:
                step = max(speed_now, 0.0) * sim.config.dt
                ctl["reverse_m"] -= step
                ctl["reversed"] += step
                sim.submit_command(ugv_id, CarCommand("drive", -1.2, -math.copysign(car.max_steer, alpha)))
                ctl["last_cmd_speed"] = 1.2
                return
        elif not captured and abs(alpha) > REV_ENGAGE:
            ctl["reverse_m"] = REV_BUDGET
            ctl["reverse_min"] = 0.0
            ctl["reversed"] = 0.0
            sim.submit_command(ugv_id, CarCommand("drive", -1.2, -math.copysign(car.max_steer, alpha)))
            ctl["last_cmd_speed"] = 1.2
            return
        cmd = pure_pursuit_step(state, ctl["path"], pursuit, car.wheelbase, car.max_steer)
        if cmd.speed_cmd == 0.0:
            if ctl["leg"] + 1 < len(goals):
                ctl["leg"] += 1
                try:
                    plan_to(ctl["leg"])
                except NoPath as exc:
                    ctl["failed"] = str(exc)
                    ctl["done"] = True
            else:
                ctl["done"] = True
                ctl["done_tick"] = sim.time().tick
            sim.submit_command(ugv_id, CarCommand())
            ctl["last_cmd_speed"] = 0.0
            return
        sim.submit_command(ugv_id, cmd)
        ctl["last_cmd_speed"] = abs(cmd.speed_cmd)

    def on_tick(sim: Simulator):
        state = sim.state(ugv_id)
        p = state.pose.position
        try:
            if not scene.is_traversable(p.n, p.e, car.clearance):
                ctl["violations"] += 1
        except Exception:
            ctl["violations"] += 1

    art = run(sim, controller, on_tick=on_tick)

    if ctl["failed"]:
        raise TaskError(f"planning failed: {ctl['failed']}")

    samples = _samples_for(art.rows, ugv_id)
    if ctl["done_tick"] is not None:
        samples = samples[: ctl["done_tick"]]
    stats = traj_stats(samples)
    save_grid_pgm(outdir / "occupancy.pgm", occupancy)
    report = {
        "task": "planning",
        "ugv": traj_stats_dict(stats),
        "completed": bool(ctl["done"] and ctl["failed"] is None),
        "replans": ctl["replans"],
        "traversability_violations": ctl["violations"],
        "legs": ctl["legs"],
        "grid": {"width": width, "height": height, "resolution": resolution},
    }
    _write_json(outdir / "planning_report.json", report)
    write_trajectory_csv(outdir / "trajectory.csv", art.rows)
    return report


# -- tracking ------------------------------------------------------------------


def run_tracking_task(cfg: ScenarioConfig, outdir: Path) -> dict:
    sim = build_simulator(cfg)
    task = cfg.task
    uav_id, ugv_id, target_id = task["uav_id"], task["ugv_id"], task["target_id"]
    scene = cfg.scene
    uav_doc = task["uav_standoff"]
    ugv_doc = task["ugv_standoff"]
    uav_so = StandoffParams(
        desired_distance=float(uav_doc.get("distance", 14.0)),
        gain=float(uav_doc.get("gain", 0.8)),
        observer_altitude=float(uav_doc.get("altitude", 12.0)),
    )
    ugv_so = StandoffParams(
        desired_distance=float(ugv_doc.get("distance", 6.0)),
        gain=float(ugv_doc.get("gain", 0.8)),
    )
    script = target_script_from_task(cfg)
    est0, _, _ = script.sample(0.0)
    ctl = {"est": est0, "ff": Vec3(), "obs": []}
    series = []
    dt = cfg.sim.dt

    def controller(sim: Simulator):
        pub = sim.published
        states = pub.states
        truth = states[target_id].pose.position
        obs = [
            observe_target(scene, states[uav_id], truth, ctl["est"], pub.time),
            observe_target(scene, states[ugv_id], truth, ctl["est"], pub.time),
        ]
        new_est = fuse_observations(obs, ctl["est"])
        raw = (new_est - ctl["est"]) * (1.0 / dt)
        beta = 0.05
        ff = Vec3(
            ctl["ff"].n * (1 - beta) + raw.n * beta,
            ctl["ff"].e * (1 - beta) + raw.e * beta,
            0.0,
        )
        speed = ff.horizontal_norm()
        if speed > 4.0:
            ff = ff * (4.0 / speed)
        ctl["ff"] = ff
        ctl["est"] = new_est
        ctl["obs"] = obs
        sim.submit_command(uav_id, standoff_command(states[uav_id], new_est, uav_so, ff, scene.ground_d))
        sim.submit_command(ugv_id, standoff_command(states[ugv_id], new_est, ugv_so, ff, scene.ground_d))

    def on_tick(sim: Simulator):
        states = sim.published.states
        truth = states[target_id].pose.position
        uav_p = states[uav_id].pose.position
        ugv_p = states[ugv_id].pose.position
        series.append(
            {
                "seconds": sim.time().seconds,
                "uav_dist": (uav_p - truth).norm(),
                "ugv_dist": (ugv_p - truth).norm(),
                "uav_xy_err": xy_tracking_error(uav_p, truth, uav_so.desired_distance),
                "ugv_xy_err": xy_tracking_error(ugv_p, truth, ugv_so.desired_distance),
                "yaw_err_deg": yaw_error_deg(states[ugv_id], truth),
                "fused_err": (ctl["est"] - truth).norm(),
                "uav_visible": bool(ctl["obs"] and ctl["obs"][0].visible),
                "ugv_visible": bool(ctl["obs"] and ctl["obs"][1].visible),
            }
        )

    art = run(sim, controller, on_tick=on_tick)

    dist_csv = outdir / "distance_series.csv"
    with open(dist_csv, "w", encoding="utf-8") as f:
        f.write("seconds,uav_dist_m,ugv_dist_m,uav_desired_m,ugv_desired_m,uav_visible,ugv_visible,fused_err_m\n")
        for s in series:
            f.write(
                f"{s['seconds']!r},{s['uav_dist']!r},{s['ugv_dist']!r},"
                f"{uav_so.desired_distance!r},{ugv_so.desired_distance!r},"
                f"{int(s['uav_visible'])},{int(s['ugv_visible'])},{s['fused_err']!r}\n"
            )
    yaw_csv = outdir / "yaw_err_series.csv"
    with open(yaw_csv, "w", encoding="utf-8") as f:
        f.write("seconds,yaw_err_deg\n")
        for s in series:
            f.write(f"{s['seconds']!r},{s['yaw_err_deg']!r}\n")

    def xy_stats(values):
        stats = error_stats(values)
        return {
            "mean_xy_err_m": stats.mean,
            "var_xy_err_m2": stats.variance,
            "max_xy_err_m": stats.max,
            "count": stats.count,
        }

    window = series[int(len(series) * 0.75):]
    blind = [s for s in series if not s["uav_visible"]]
    report = {
        "task": "tracking",
        "uav": xy_stats([s["uav_xy_err"] for s in series]),
        "ugv": xy_stats([s["ugv_xy_err"] for s in series]),
        "distance_series_csv_path": dist_csv.name,
        "yaw_err_series_csv_path": yaw_csv.name,
        "desired_distance": {"uav": uav_so.desired_distance, "ugv": ugv_so.desired_distance},
        "steady_state": {
            "window_start_s": window[0]["seconds"] if window else None,
            "uav_mean_abs_dist_err_m": sum(abs(s["uav_dist"] - uav_so.desired_distance) for s in window) / len(window),
            "ugv_mean_abs_dist_err_m": sum(abs(s["ugv_dist"] - ugv_so.desired_distance) for s in window) / len(window),
            "ugv_yaw_err_mean_deg": sum(s["yaw_err_deg"] for s in window) / len(window),
        },
        "occlusion": {
            "uav_blind_ticks": len(blind),
            "max_fused_err_m": max((s["fused_err"] for s in series), default=0.0),
        },
    }
    _write_json(outdir / "tracking_report.json", report)
    write_trajectory_csv(outdir / "trajectory.csv", art.rows)
    return report


# -- formation -----------------------------------------------------------------


def formation_spec_from_task(cfg: ScenarioConfig) -> FormationSpec:
    task = cfg.task
    cdoc, sdoc = task["circle"], task["square"]
    circle = CirclePattern(
        Vec3(float(cdoc["center"][0]), float(cdoc["center"][1]), 0.0),
        float(cdoc["radius"]),
        float(cdoc["angular_speed"]),
    )
    square = SquarePattern(
        Vec3(float(sdoc["center"][0]), float(sdoc["center"][1]), 0.0),
        float(sdoc["side"]),
        float(sdoc["altitude"]),
        float(sdoc["speed"]),
    )
    return FormationSpec(tuple(task["ugv_ids"]), tuple(task["uav_ids"]), circle, square)


def run_formation_task(cfg: ScenarioConfig, outdir: Path) -> dict:
    sim = build_simulator(cfg)
    spec = formation_spec_from_task(cfg)
    gain = float(cfg.task.get("gain", 0.8))
    ref_errors = {vid: [] for vid in spec.ugv_ids + spec.uav_ids}
    sync = {"violations": 0, "ticks": 0}

    def controller(sim: Simulator):
        cmds = formation_commands(spec, sim.published.time.seconds, sim.published.states, gain)
        for vid, cmd in cmds.items():
            sim.submit_command(vid, cmd)

    def on_tick(sim: Simulator):
        pub = sim.published
        t = pub.time
        stamps = {s.stamp for s in pub.states.values()}
        stamps |= {o.stamp for o in pub.odometry.values() if o is not None}
        for snap in list(pub.lidar.values()) + list(pub.depth.values()):
            if snap is not None and snap.stamp.tick == t.tick:
                stamps.add(snap.stamp)
        sync["ticks"] += 1
        if len(stamps) != 1:
            sync["violations"] += 1
        refs = formation_references(spec, t.seconds)
        for vid, ref in refs.items():
            err = (pub.states[vid].pose.position - ref).norm()
            ref_errors[vid].append(err)

    art = run(sim, controller, on_tick=on_tick)
    report = {
        "task": "formation",
        "vehicles": {vid: error_stats_dict(error_stats(errs)) for vid, errs in ref_errors.items()},
        "sync": {"ticks": sync["ticks"], "stamp_violations": sync["violations"]},
        "counts": {"ugv": len(spec.ugv_ids), "uav": len(spec.uav_ids)},
    }
    _write_json(outdir / "formation_report.json", report)
    write_trajectory_csv(outdir / "trajectory.csv", art.rows)
    return report


def run_none_task(cfg: ScenarioConfig, outdir: Path) -> dict:
    sim = build_simulator(cfg)
    art = run(sim)
    report = {"task": "none", "ticks": cfg.sim.n_ticks, "vehicles": sim.vehicle_ids(), "tick_overruns": art.tick_overruns}
    write_trajectory_csv(outdir / "trajectory.csv", art.rows)
    _write_json(outdir / "run_report.json", report)
    return report


_RUNNERS = {
    "mapping": run_mapping_task,
    "planning": run_planning_task,
    "tracking": run_tracking_task,
    "formation": run_formation_task,
    "none": run_none_task,
}


def run_scenario(cfg: ScenarioConfig, outdir) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = _RUNNERS[cfg.task_type](cfg, outdir)
    meta = {
        "task": cfg.task_type,
        "scene": cfg.scene_name,
        "seed": cfg.sim.seed,
        "dt": cfg.sim.dt,
        "duration": cfg.sim.duration,
    }
    _write_json(outdir / "run_meta.json", meta)
    return report
