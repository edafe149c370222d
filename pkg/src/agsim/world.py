"""Static scene: flat ground plane plus axis-aligned box obstacles.

The scene is the headless stand-in for a rendered environment. Boxes are
enough to express buildings and a bridge (deck, piers, stepped ramps), and
they keep ray casting exact. A scene is immutable after load and safe to
share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfBounds, ParseError, SchemaError, ValidationError
from .geometry import Ray, Vec3, ray_aabbs_batch

OBSTACLE_TAGS = ("building", "bridge_deck", "bridge_pier", "generic")

# Batch cast hit codes for the non-obstacle cases.
HIT_NONE = -1
HIT_GROUND = -2

# Largest single step a ground vehicle can climb onto (ramp step rise bound).
MAX_STEP_UP = 0.35


@dataclass(frozen=True)
class Obstacle:
    id: str
    box_min: Vec3
    box_max: Vec3
    tag: str = "generic"


@dataclass
class Scene:
    """Validated obstacle set with cached arrays for batch queries."""

    obstacles: list[Obstacle]
    ground_d: float = 0.0
    bounds: tuple[Vec3, Vec3] = (Vec3(-100.0, -100.0, -120.0), Vec3(100.0, 100.0, 1.0))
    _mins: np.ndarray = field(init=False, repr=False)
    _maxs: np.ndarray = field(init=False, repr=False)
    _deck: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        seen = set()
        for ob in self.obstacles:
            if ob.id in seen:
                raise ValidationError(f"duplicate obstacle id '{ob.id}'")
            seen.add(ob.id)
            if ob.tag not in OBSTACLE_TAGS:
                raise ValidationError(f"obstacle '{ob.id}': unknown tag '{ob.tag}'")
            mn, mx = ob.box_min, ob.box_max
            if not (mn.n <= mx.n and mn.e <= mx.e and mn.d <= mx.d):
                raise ValidationError(f"obstacle '{ob.id}': box_min exceeds box_max")
            lo, hi = self.bounds
            if not (lo.n <= mn.n and lo.e <= mn.e and lo.d <= mn.d and mx.n <= hi.n and mx.e <= hi.e and mx.d <= hi.d):
                raise ValidationError(f"obstacle '{ob.id}': outside scene bounds")
        k = len(self.obstacles)
        self._mins = np.array([[o.box_min.n, o.box_min.e, o.box_min.d] for o in self.obstacles], dtype=float).reshape(k, 3)
        self._maxs = np.array([[o.box_max.n, o.box_max.e, o.box_max.d] for o in self.obstacles], dtype=float).reshape(k, 3)
        self._deck = np.array([o.tag == "bridge_deck" for o in self.obstacles], dtype=bool)

    def in_bounds(self, n: float, e: float) -> bool:
        lo, hi = self.bounds
        return lo.n <= n <= hi.n and lo.e <= e <= hi.e

    def cast_rays(self, origins: np.ndarray, dirs: np.ndarray, max_range: float):
        """Batch nearest-hit cast against ground and all obstacles.

        Returns (dist, hit): dist inf on miss; hit is HIT_NONE, HIT_GROUND,
        or an obstacle index.
        """
        origins = np.asarray(origins, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        n = origins.shape[0]
        dist = np.full(n, np.inf)
        hit = np.full(n, HIT_NONE, dtype=np.int64)
        dz = dirs[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            tg = (self.ground_d - origins[:, 2]) / dz
        ok = np.isfinite(tg) & (tg >= 0.0) & (tg <= max_range)
        dist[ok] = tg[ok]
        hit[ok] = HIT_GROUND
        bdist, bidx = ray_aabbs_batch(origins, dirs, self._mins, self._maxs, max_range)
        closer = bdist < dist
        dist[closer] = bdist[closer]
        hit[closer] = bidx[closer]
        return dist, hit

    def cast_ray(self, ray: Ray, max_range: float):
        """Nearest hit as (distance, obstacle_id or "ground"), or None."""
        if max_range <= 0:
            raise ValueError("max_range must be positive")
        dist, hit = self.cast_rays(
            ray.origin.to_array().reshape(1, 3), ray.direction.to_array().reshape(1, 3), max_range
        )
        if hit[0] == HIT_NONE:
            return None
        name = "ground" if hit[0] == HIT_GROUND else self.obstacles[int(hit[0])].id
        return float(dist[0]), name

    def _footprint_mask(self, n: float, e: float) -> np.ndarray:
        return (
            (self._mins[:, 0] <= n)
            & (n <= self._maxs[:, 0])
            & (self._mins[:, 1] <= e)
            & (e <= self._maxs[:, 1])
        )

    def is_traversable(self, n: float, e: float, clearance_d: float) -> bool:
        """True iff the ground-level clearance band at (n, e) is unobstructed.

        The band is d in [ground_d - clearance_d, ground_d]. Boxes tagged
        bridge_deck never block: their tops are drivable surfaces.
        """
        if not self.in_bounds(n, e):
            raise OutOfBounds(f"({n}, {e}) outside scene bounds")
        if len(self.obstacles) == 0:
            return True
        mask = self._footprint_mask(n, e) & ~self._deck
        if not mask.any():
            return True
        band_lo = self.ground_d - clearance_d
        overlap = (self._mins[mask, 2] <= self.ground_d) & (self._maxs[mask, 2] >= band_lo)
        return not overlap.any()

    def support_d(self, n: float, e: float, current_d: float, max_step: float = MAX_STEP_UP) -> float:
        """Down-coordinate of the surface a ground vehicle at (n, e) stands on.

        Candidates are the ground plane and the tops of bridge_deck boxes
        whose footprint contains the point; the vehicle takes the highest
        candidate no more than max_step above its current height.
        """
        cur_alt = -current_d
        best_alt = -self.ground_d
        if len(self.obstacles):
            mask = self._footprint_mask(n, e) & self._deck
            if mask.any():
                tops = -self._mins[mask, 2]
                tops = tops[tops <= cur_alt + max_step]
                if tops.size:
                    best_alt = max(best_alt, float(tops.max()))
        return -best_alt

    def clearance_free(self, n: float, e: float, support_d: float, clearance_d: float) -> bool:
        """Like is_traversable but relative to an elevated support surface.

        Used by car stepping so piers below a deck do not block driving on
        top of it. Out-of-bounds counts as blocked.
        """
        if not self.in_bounds(n, e):
            return False
        if len(self.obstacles) == 0:
            return True
        mask = self._footprint_mask(n, e) & ~self._deck
        if not mask.any():
            return True
        band_hi = support_d - 0.05
        band_lo = support_d - clearance_d
        overlap = (self._mins[mask, 2] <= band_hi) & (self._maxs[mask, 2] >= band_lo)
        return not overlap.any()


def _vec3_from_list(v, where: str) -> Vec3:
    if not isinstance(v, list) or len(v) != 3 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise SchemaError(f"{where}: expected [n, e, d] numbers")
    return Vec3(float(v[0]), float(v[1]), float(v[2]))


def scene_from_dict(doc: dict) -> Scene:
    if not isinstance(doc, dict):
        raise SchemaError("scene: top level must be an object")
    allowed = {"ground_d", "bounds", "obstacles"}
    unknown = set(doc) - allowed
    if unknown:
        raise SchemaError(f"scene: unknown field '{sorted(unknown)[0]}'")
    for key in allowed:
        if key not in doc:
            raise SchemaError(f"scene: missing field '{key}'")
    if not isinstance(doc["ground_d"], (int, float)) or isinstance(doc["ground_d"], bool):
        raise SchemaError("scene.ground_d: expected a number")
    bounds_raw = doc["bounds"]
    if not isinstance(bounds_raw, list) or len(bounds_raw) != 2:
        raise SchemaError("scene.bounds: expected [[n,e,d], [n,e,d]]")
    bounds = (_vec3_from_list(bounds_raw[0], "scene.bounds[0]"), _vec3_from_list(bounds_raw[1], "scene.bounds[1]"))
    if not isinstance(doc["obstacles"], list):
        raise SchemaError("scene.obstacles: expected an array")
    obstacles = []
    for i, raw in enumerate(doc["obstacles"]):
        where = f"scene.obstacles[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: expected an object")
        extra = set(raw) - {"id", "min", "max", "tag"}
        if extra:
            raise SchemaError(f"{where}: unknown field '{sorted(extra)[0]}'")
        for key in ("id", "min", "max", "tag"):
            if key not in raw:
                raise SchemaError(f"{where}: missing field '{key}'")
        if not isinstance(raw["id"], str) or not raw["id"]:
            raise SchemaError(f"{where}.id: expected a nonempty string")
        if not isinstance(raw["tag"], str):
            raise SchemaError(f"{where}.tag: expected a string")
        obstacles.append(
            Obstacle(
                raw["id"],
                _vec3_from_list(raw["min"], f"{where}.min"),
                _vec3_from_list(raw["max"], f"{where}.max"),
                raw["tag"],
            )
        )
    return Scene(obstacles, float(doc["ground_d"]), bounds)


def load_scene(path) -> Scene:
    """Load and validate a scene JSON file."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return scene_from_dict(doc)


def bundled_scene(name: str) -> Scene:
    """Load one of the scenes shipped with the package."""
    from importlib import resources

    ref = resources.files("agsim").joinpath(f"data/scenes/{name}.json")
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ParseError(f"no bundled scene named '{name}'") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:  # pragma: no cover - bundled data is tested
        raise ParseError(f"bundled scene '{name}': {exc}") from exc
    return scene_from_dict(doc)
