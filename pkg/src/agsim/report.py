"""Render task artifacts into aligned text tables and PNG figures.

Tables round to one decimal; the JSON artifacts keep full precision. All
figure rendering lives here, behind the CLI report path, so batch runs
stay headless and byte-deterministic.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import MissingArtifact


def _fmt(x: float) -> str:
    return f"{x:.1f}"


def _fmt_range(rng) -> str:
    return f"[{rng[0]:.1f}, {rng[1]:.1f}]"


def _rows_to_text(rows: list[tuple[str, str, str]]) -> str:
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    lines = [f"{r[0]:<{w0}}  {r[1]:<{w1}}  {r[2]}" for r in rows]
    rule = "-" * max(len(s) for s in lines)
    return "\n".join([rule] + lines + [rule])


def read_trajectory(path) -> dict:
    """trajectory.csv -> {vehicle_id: list of row dicts}."""
    out: dict[str, list] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            rec = {k: (row[k] if k == "vehicle_id" else float(row[k])) for k in row}
            out.setdefault(row["vehicle_id"], []).append(rec)
    return out


def mapping_table(report: dict) -> str:
    rows = []
    for label in ("ugv", "uav"):
        stats = report[label]
        rows.append((label.upper(), "Duration (s)", _fmt(stats["duration_s"])))
        rows.append(("", "Total Length (m)", _fmt(stats["total_length_m"])))
        rows.append(("", "Average Speed (m/s)", _fmt(stats["average_speed_mps"])))
    reg = report["registration"]
    est = ", ".join(f"{v:.3f}" for v in reg["est_translation"])
    rows.append(("Cloud Points (ICP)", "Est Translation (m)", f"[{est}]"))
    rows.append(("", "RMSE (m)", f"{reg['rmse_m']:.3f}"))
    rows.append(("", "Iterations", str(reg["iterations"])))
    rows.append(("", "Converged", str(reg["converged"])))
    return _rows_to_text(rows)


def planning_table(report: dict) -> str:
    stats = report["ugv"]
    rows = [
        ("Metric", "", "Data"),
        ("Duration (s)", "", _fmt(stats["duration_s"])),
        ("Total Length (m)", "", _fmt(stats["total_length_m"])),
        ("Average Speed (m/s)", "", _fmt(stats["average_speed_mps"])),
        ("X Range (m)", "", _fmt_range(stats["n_range_m"])),
        ("Y Range (m)", "", _fmt_range(stats["e_range_m"])),
        ("Z Range (m)", "", _fmt_range(stats["alt_range_m"])),
        ("Completed", "", str(report["completed"])),
        ("Replans", "", str(report["replans"])),
    ]
    return _rows_to_text(rows)


def tracking_table(report: dict) -> str:
    rows = []
    for label in ("uav", "ugv"):
        stats = report[label]
        rows.append((label.upper(), "Mean XY Error (m)", _fmt(stats["mean_xy_err_m"])))
        rows.append(("", "Variance (m^2)", _fmt(stats["var_xy_err_m2"])))
        rows.append(("", "Max XY Error (m)", _fmt(stats["max_xy_err_m"])))
    ss = report["steady_state"]
    rows.append(("Steady state", "UAV |dist - desired| (m)", f"{ss['uav_mean_abs_dist_err_m']:.2f}"))
    rows.append(("", "UGV |dist - desired| (m)", f"{ss['ugv_mean_abs_dist_err_m']:.2f}"))
    rows.append(("", "UGV Yaw Error (deg)", f"{ss['ugv_yaw_err_mean_deg']:.2f}"))
    occ = report["occlusion"]
    rows.append(("Occlusion", "UAV blind ticks", str(occ["uav_blind_ticks"])))
    rows.append(("", "Max fused est error (m)", f"{occ['max_fused_err_m']:.2f}"))
    return _rows_to_text(rows)


def formation_table(report: dict) -> str:
    rows = [("Vehicle", "Mean Ref Error (m)", "Max (m)")]
    for vid, stats in report["vehicles"].items():
        rows.append((vid, _fmt(stats["mean_m"]), _fmt(stats["max_m"])))
    sync = report["sync"]
    rows.append(("Sync", f"{sync['ticks']} ticks", f"{sync['stamp_violations']} stamp violations"))
    return _rows_to_text(rows)


def none_table(report: dict) -> str:
    return _rows_to_text([("Run", f"{report['ticks']} ticks", ", ".join(report["vehicles"]))])


# -- figures -------------------------------------------------------------------


def _load_cloud(path: Path):
    import numpy as np

    if not path.exists():
        return None
    data = np.loadtxt(path, ndmin=2)
    return data if data.size else None


def _fig_trajectories(traj: dict, out: Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    for vid, rows in traj.items():
        ax.plot([r["e"] for r in rows], [r["n"] for r in rows], label=vid, linewidth=1.2)
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_title(title)
    ax.axis("equal")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    plt.close(fig)


def _fig_mapping(artdir: Path, figdir: Path) -> list[str]:
    made = []
    uav = _load_cloud(artdir / "cloud_uav.txt")
    ugv = _load_cloud(artdir / "cloud_ugv.txt")
    if uav is not None and ugv is not None:
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.scatter(ugv[:, 1], ugv[:, 0], s=0.4, c="green", label="UGV cloud")
        ax.scatter(uav[:, 1], uav[:, 0], s=0.4, c="blue", label="UAV cloud")
        ax.set_xlabel("east (m)")
        ax.set_ylabel("north (m)")
        ax.set_title("fused point cloud map (top view)")
        ax.axis("equal")
        ax.legend(fontsize=8, markerscale=8)
        fig.tight_layout()
        fig.savefig(figdir / "fused_map.png", dpi=130)
        plt.close(fig)
        made.append("fused_map.png")
    return made


def _fig_planning(artdir: Path, figdir: Path) -> list[str]:
    import numpy as np

    from .planning import load_grid_pgm

    made = []
    pgm = artdir / "occupancy.pgm"
    traj_path = artdir / "trajectory.csv"
    if pgm.exists():
        grid = load_grid_pgm(pgm)
        shade = np.full(grid.cells.shape, 128, dtype=np.uint8)
        shade[grid.cells == 0] = 255
        shade[grid.cells == 1] = 0
        extent = [
            grid.origin_e,
            grid.origin_e + grid.width * grid.resolution,
            grid.origin_n,
            grid.origin_n + grid.height * grid.resolution,
        ]
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.imshow(shade, cmap="gray", origin="lower", extent=extent, vmin=0, vmax=255)
        if traj_path.exists():
            traj = read_trajectory(traj_path)
            for vid, rows in traj.items():
                ax.plot([r["e"] for r in rows], [r["n"] for r in rows], linewidth=1.2, label=vid)
            ax.legend(fontsize=8)
        ax.set_xlabel("east (m)")
        ax.set_ylabel("north (m)")
        ax.set_title("occupancy grid and executed route")
        fig.tight_layout()
        fig.savefig(figdir / "occupancy_route.png", dpi=130)
        plt.close(fig)
        made.append("occupancy_route.png")
    if traj_path.exists():
        traj = read_trajectory(traj_path)
        fig, ax = plt.subplots(figsize=(7, 3))
        for vid, rows in traj.items():
            ax.plot([r["seconds"] for r in rows], [-r["d"] for r in rows], label=vid, linewidth=1.2)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("altitude (m)")
        ax.set_title("altitude profile")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(figdir / "altitude_profile.png", dpi=130)
        plt.close(fig)
        made.append("altitude_profile.png")
    return made


def _fig_tracking(artdir: Path, figdir: Path, report: dict) -> list[str]:
    made = []
    dist_path = artdir / report.get("distance_series_csv_path", "distance_series.csv")
    if dist_path.exists():
        rows = list(csv.DictReader(open(dist_path, newline="", encoding="utf-8")))
        t = [float(r["seconds"]) for r in rows]
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.plot(t, [float(r["uav_dist_m"]) for r in rows], label="UAV", linewidth=1.0)
        ax.plot(t, [float(r["ugv_dist_m"]) for r in rows], label="UGV", linewidth=1.0)
        ax.axhline(float(rows[0]["uav_desired_m"]), linestyle=":", color="tab:blue")
        ax.axhline(float(rows[0]["ugv_desired_m"]), linestyle=":", color="tab:orange")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("3-D distance to target (m)")
        ax.set_title("standoff distances (dotted: expected)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(figdir / "distances.png", dpi=130)
        plt.close(fig)
        made.append("distances.png")
    yaw_path = artdir / report.get("yaw_err_series_csv_path", "yaw_err_series.csv")
    if yaw_path.exists():
        rows = list(csv.DictReader(open(yaw_path, newline="", encoding="utf-8")))
        t = [float(r["seconds"]) for r in rows]
        y = [float(r["yaw_err_deg"]) for r in rows]
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.plot(t, y, linewidth=0.9)
        if y:
            ax.axhline(sum(y) / len(y), linestyle=":", color="black", label=f"mean {sum(y)/len(y):.2f} deg")
            ax.legend(fontsize=8)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("UGV yaw error (deg)")
        ax.set_title("tracker orientation error")
        fig.tight_layout()
        fig.savefig(figdir / "yaw_error.png", dpi=130)
        plt.close(fig)
        made.append("yaw_error.png")
    traj_path = artdir / "trajectory.csv"
    if traj_path.exists():
        _fig_trajectories(read_trajectory(traj_path), figdir / "trajectories.png", "tracking trajectories")
        made.append("trajectories.png")
    return made


_TABLES = {
    "mapping": ("mapping_report.json", mapping_table),
    "planning": ("planning_report.json", planning_table),
    "tracking": ("tracking_report.json", tracking_table),
    "formation": ("formation_report.json", formation_table),
    "none": ("run_report.json", none_table),
}


def render_report(artdir) -> str:
    """Render the tables and figures for one artifacts directory.

    Returns the table text (also written to report.txt); figures land in
    figures/ next to the artifacts.
    """
    artdir = Path(artdir)
    meta_path = artdir / "run_meta.json"
    if not meta_path.exists():
        expected = ", ".join(["run_meta.json"] + [v[0] for v in _TABLES.values()])
        raise MissingArtifact(f"{artdir}: no run_meta.json (expected artifacts like: {expected})")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    task = meta.get("task", "none")
    report_name, table_fn = _TABLES[task]
    report_path = artdir / report_name
    if not report_path.exists():
        raise MissingArtifact(f"{artdir}: missing {report_name}")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    header = f"task: {task}   scene: {meta.get('scene')}   seed: {meta.get('seed')}"
    text = header + "\n" + table_fn(report)

    figdir = artdir / "figures"
    figdir.mkdir(exist_ok=True)
    made: list[str] = []
    traj_path = artdir / "trajectory.csv"
    if task == "mapping":
        made += _fig_mapping(artdir, figdir)
        if traj_path.exists():
            _fig_trajectories(read_trajectory(traj_path), figdir / "trajectories.png", "mapping trajectories")
            made.append("trajectories.png")
    elif task == "planning":
        made += _fig_planning(artdir, figdir)
    elif task == "tracking":
        made += _fig_tracking(artdir, figdir, report)
    else:
        if traj_path.exists():
            _fig_trajectories(read_trajectory(traj_path), figdir / "trajectories.png", f"{task} trajectories")
            made.append("trajectories.png")
    if made:
        text += "\nfigures: " + ", ".join(sorted(made))
    (artdir / "report.txt").write_text(text + "\n", encoding="utf-8")
    return text
