"""Aerial-assisted ground planning: occupancy grids, A*, pure pursuit.

The UAV's nadir depth capture becomes a world-frame cloud, the cloud a 2-D
occupancy grid, the grid an 8-connected A* path, and the path a stream of
pure-pursuit car commands with blocking-triggered replans.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCell, NoPath, PathExhausted
from .geometry import Vec3, wrap_angle
from .vehicles import CarCommand, VehicleState, pursuit_steer

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

SQRT2 = math.sqrt(2.0)


@dataclass
class OccupancyGrid:
    origin_n: float
    origin_e: float
    resolution: float
    cells: np.ndarray  # (height, width) uint8 of FREE/OCCUPIED/UNKNOWN

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def cell_of(self, n: float, e: float) -> tuple[int, int]:
        return (
            int(math.floor((n - self.origin_n) / self.resolution)),
            int(math.floor((e - self.origin_e) / self.resolution)),
        )

    def center_of(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin_n + (row + 0.5) * self.resolution,
            self.origin_e + (col + 0.5) * self.resolution,
        )

    def in_grid(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width


@dataclass(frozen=True)
class GridPath:
    cells: tuple  # ((row, col), ...) consecutive cells 8-adjacent
    world_waypoints: tuple  # (Vec3, ...) cell centers
    cost: float = 0.0


@dataclass(frozen=True)
class PurePursuitParams:
    lookahead: float = 3.0
    waypoint_capture: float = 1.0
    cruise_speed: float = 3.6


def build_occupancy(clouds, ground_d: float, origin_n: float, origin_e: float,
                    resolution: float, width: int, height: int,
                    height_threshold: float, scene=None) -> OccupancyGrid:
    """Rasterize world-frame clouds into free/occupied/unknown cells.

    A cell is occupied iff any point in it rises more than height_threshold
    above the ground plane and is not on a drivable bridge-deck box. Cells
    with no points at all stay unknown.
    """
    cells = np.full((height, width), UNKNOWN, dtype=np.uint8)
    pts_list = [np.asarray(getattr(c, "points", c), dtype=float) for c in clouds]
    pts_list = [p for p in pts_list if len(p)]
    if not pts_list:
        return OccupancyGrid(origin_n, origin_e, resolution, cells)
    pts = np.concatenate(pts_list, axis=0)
    rows = np.floor((pts[:, 0] - origin_n) / resolution).astype(np.int64)
    cols = np.floor((pts[:, 1] - origin_e) / resolution).astype(np.int64)
    inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    pts, rows, cols = pts[inside], rows[inside], cols[inside]
    high = (ground_d - pts[:, 2]) > height_threshold
    on_deck = np.zeros(len(pts), dtype=bool)
    if scene is not None and len(scene.obstacles):
        tol = 0.01
        deck = scene._deck
        mins, maxs = scene._mins[deck], scene._maxs[deck]
        for mn, mx in zip(mins, maxs):
            on_deck |= np.all((pts >= mn - tol) & (pts <= mx + tol), axis=1)
    obstacle_pt = high & ~on_deck
    cells[rows, cols] = FREE
    cells[rows[obstacle_pt], cols[obstacle_pt]] = OCCUPIED
    return OccupancyGrid(origin_n, origin_e, resolution, cells)


def _passable(cells: np.ndarray, row: int, col: int) -> bool:
    return cells[row, col] != OCCUPIED


def astar(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int],
          unknown_is: str = "occupied") -> GridPath:
    """Minimal-cost 8-connected path (straight 1, diagonal sqrt 2).

    Octile heuristic; diagonal moves may not cut corners (both orthogonal
    neighbors must be passable). unknown_is selects whether unknown cells
    count as free or occupied.
    """
    if unknown_is not in ("free", "occupied"):
        raise ValueError("unknown_is must be 'free' or 'occupied'")
    cells = grid.cells
    if unknown_is == "occupied":
        cells = np.where(cells == UNKNOWN, OCCUPIED, cells)
    else:
        cells = np.where(cells == UNKNOWN, FREE, cells)
    for name, (r, c) in (("start", start), ("goal", goal)):
        if not grid.in_grid(r, c):
            raise InvalidCell(f"{name} cell {(r, c)} out of grid")
        if cells[r, c] == OCCUPIED:
            raise InvalidCell(f"{name} cell {(r, c)} occupied")

    def heuristic(r: int, c: int) -> float:
        dr, dc = abs(r - goal[0]), abs(c - goal[1])
        return max(dr, dc) + (SQRT2 - 1.0) * min(dr, dc)

    g = {start: 0.0}
    parent = {}
    counter = 0
    frontier = [(heuristic(*start), 0, start)]
    closed = set()
    while frontier:
        _, _, cur = heapq.heappop(frontier)
        if cur in closed:
            continue
        if cur == goal:
            break
        closed.add(cur)
        r, c = cur
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                nr, nc = r + dr, c + dc
                if not grid.in_grid(nr, nc) or not _passable(cells, nr, nc):
                    continue
                if dr != 0 and dc != 0:
                    if not (_passable(cells, r + dr, c) and _passable(cells, r, c + dc)):
                        continue
                    step = SQRT2
                else:
                    step = 1.0
                ng = g[cur] + step
                if ng < g.get((nr, nc), math.inf) - 1e-12:
                    g[(nr, nc)] = ng
                    parent[(nr, nc)] = cur
                    counter += 1
                    heapq.heappush(frontier, (ng + heuristic(nr, nc), counter, (nr, nc)))
    if goal not in g:
        raise NoPath(f"no path from {start} to {goal}")
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    waypoints = tuple(Vec3(*grid.center_of(r, c), 0.0) for r, c in path)
    return GridPath(tuple(path), waypoints, g[goal])


def lookahead_point(state: VehicleState, path, params: PurePursuitParams):
    """Lookahead target on the path: (waypoint, alpha, dist, captured).

    The target is the path point at arc distance >= lookahead past the
    nearest path point; alpha is its bearing in the body frame. captured
    flags the final waypoint inside the capture radius.
    """
    waypoints = list(getattr(path, "world_waypoints", path))
    if not waypoints:
        raise PathExhausted("path has no waypoints")
    p = state.pose.position
    psi = state.pose.orientation.yaw()
    dists = [math.hypot(w.n - p.n, w.e - p.e) for w in waypoints]
    nearest = min(range(len(waypoints)), key=lambda i: dists[i])
    final = waypoints[-1]
    if math.hypot(final.n - p.n, final.e - p.e) <= params.waypoint_capture:
        return final, 0.0, 0.0, True
    arc = 0.0
    target = waypoints[-1]
    for i in range(nearest, len(waypoints) - 1):
        arc += math.hypot(
            waypoints[i + 1].n - waypoints[i].n, waypoints[i + 1].e - waypoints[i].e
        )
        if arc >= params.lookahead:
            target = waypoints[i + 1]
            break
    dist = math.hypot(target.n - p.n, target.e - p.e)
    alpha = wrap_angle(math.atan2(target.e - p.e, target.n - p.n) - psi)
    return target, alpha, dist, False


def pure_pursuit_step(state: VehicleState, path, params: PurePursuitParams,
                      wheelbase: float = 2.5, max_steer: float = 0.6) -> CarCommand:
    """One pure-pursuit command toward the path's lookahead point.

    steer = atan(2 L_wb sin(alpha) / L). Speed is cruise, zero once the
    final waypoint is inside the capture radius.
    """
    _, alpha, dist, captured = lookahead_point(state, path, params)
    if captured:
        return CarCommand(mode="drive", speed_cmd=0.0, steer_cmd=0.0)
    steer = max(-max_steer, min(max_steer, pursuit_steer(wheelbase, alpha, dist)))
    return CarCommand(mode="drive", speed_cmd=params.cruise_speed, steer_cmd=steer)


def inflate(grid: OccupancyGrid, cells: int) -> OccupancyGrid:
    """Chebyshev-dilate occupied cells by the given radius."""
    occ = grid.cells == OCCUPIED
    out = occ.copy()
    for dr in range(-cells, cells + 1):
        for dc in range(-cells, cells + 1):
            if dr == 0 and dc == 0:
                continue
            shifted = np.zeros_like(occ)
            rs = slice(max(0, dr), occ.shape[0] + min(0, dr))
            cs = slice(max(0, dc), occ.shape[1] + min(0, dc))
            rs_src = slice(max(0, -dr), occ.shape[0] + min(0, -dr))
            cs_src = slice(max(0, -dc), occ.shape[1] + min(0, -dc))
            shifted[rs, cs] = occ[rs_src, cs_src]
            out |= shifted
    new = grid.cells.copy()
    new[out] = OCCUPIED
    return OccupancyGrid(grid.origin_n, grid.origin_e, grid.resolution, new)


def save_grid_pgm(path, grid: OccupancyGrid) -> None:
    """ASCII PGM (P2): 0 = occupied, 128 = unknown, 255 = free."""
    from pathlib import Path

    shade = {FREE: 255, OCCUPIED: 0, UNKNOWN: 128}
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write("P2\n")
        f.write(f"{grid.width} {grid.height}\n255\n")
        for row in grid.cells:
            f.write(" ".join(str(shade[int(v)]) for v in row) + "\n")
    sidecar = {"origin_n": grid.origin_n, "origin_e": grid.origin_e, "resolution": grid.resolution}
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=1)
        f.write("\n")


def load_grid_pgm(path) -> OccupancyGrid:
    from pathlib import Path

    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        tokens = f.read().split()
    if tokens[0] != "P2":
        raise ValueError("expected ASCII PGM (P2)")
    width, height = int(tokens[1]), int(tokens[2])
    values = np.array(tokens[4 : 4 + width * height], dtype=np.int64).reshape(height, width)
    cells = np.full((height, width), UNKNOWN, dtype=np.uint8)
    cells[values == 255] = FREE
    cells[values == 0] = OCCUPIED
    with open(path.with_suffix(".json"), "r", encoding="utf-8") as f:
        meta = json.load(f)
    return OccupancyGrid(meta["origin_n"], meta["origin_e"], meta["resolution"], cells)
