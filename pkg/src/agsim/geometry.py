"""Frame algebra for the North-East-Down world.

Conventions used everywhere in this package:

* World frame is NED: n north, e east, d down. Right-handed, so altitude
  is ``-d``.
* Body frame is x forward, y right, z down.
* Euler angles follow the aerospace Z-Y-X order (yaw, pitch, roll), with
  yaw positive rotating North toward East.

All geometry is 64-bit float. Vectors and transforms are immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class Vec3:
    """A point or free vector in the NED world frame (meters)."""

    n: float = 0.0
    e: float = 0.0
    d: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.n + other.n, self.e + other.e, self.d + other.d)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.n - other.n, self.e - other.e, self.d - other.d)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.n * s, self.e * s, self.d * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.n, -self.e, -self.d)

    def dot(self, other: "Vec3") -> float:
        return self.n * other.n + self.e * other.e + self.d * other.d

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.e * other.d - self.d * other.e,
            self.d * other.n - self.n * other.d,
            self.n * other.e - self.e * other.n,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def horizontal_norm(self) -> float:
        return math.hypot(self.n, self.e)

    def normalized(self) -> "Vec3":
        m = self.norm()
        if m < 1e-300:
            raise ValueError("cannot normalize a zero vector")
        return Vec3(self.n / m, self.e / m, self.d / m)

    def is_finite(self) -> bool:
        return math.isfinite(self.n) and math.isfinite(self.e) and math.isfinite(self.d)

    def to_array(self) -> np.ndarray:
        return np.array([self.n, self.e, self.d], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion orientation, Hamilton convention (w, x, y, z)."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_yaw_pitch_roll(cls, yaw: float, pitch: float = 0.0, roll: float = 0.0) -> "Quaternion":
        """Aerospace Z-Y-X Euler angles (radians) to quaternion."""
        cy, sy = math.cos(yaw * 0.5), math.sin(yaw * 0.5)
        cp, sp = math.cos(pitch * 0.5), math.sin(pitch * 0.5)
        cr, sr = math.cos(roll * 0.5), math.sin(roll * 0.5)
        return cls(
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        )

    @classmethod
    def from_axis_angle(cls, axis: Vec3, angle: float) -> "Quaternion":
        u = axis.normalized()
        h = angle * 0.5
        s = math.sin(h)
        return cls(math.cos(h), u.n * s, u.e * s, u.d * s)

    def __mul__(self, o: "Quaternion") -> "Quaternion":
        return Quaternion(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Quaternion":
        m = self.norm()
        if m < 1e-300:
            raise ValueError("cannot normalize a zero quaternion")
        return Quaternion(self.w / m, self.x / m, self.y / m, self.z / m)

    def rotate(self, v: Vec3) -> Vec3:
        # v' = v + 2 w (q_v x v) + 2 q_v x (q_v x v)
        qv = Vec3(self.x, self.y, self.z)
        t = qv.cross(v) * 2.0
        return v + t * self.w + qv.cross(t)

    def to_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=float,
        )

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Quaternion":
        """Rotation matrix to quaternion (Shepperd's method)."""
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0.0:
            s = math.sqrt(tr + 1.0) * 2.0
            q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
        return cls(*q).normalized()

    def yaw_pitch_roll(self) -> tuple[float, float, float]:
        m = self.to_matrix()
        yaw = math.atan2(m[1, 0], m[0, 0])
        pitch = -math.asin(max(-1.0, min(1.0, m[2, 0])))
        roll = math.atan2(m[2, 1], m[2, 2])
        return yaw, pitch, roll

    def yaw(self) -> float:
        return self.yaw_pitch_roll()[0]

    def angle_to(self, other: "Quaternion") -> float:
        """Smallest rotation angle (radians) taking self to other."""
        r = self.conjugate() * other
        vec = math.sqrt(r.x * r.x + r.y * r.y + r.z * r.z)
        return 2.0 * math.atan2(vec, abs(r.w))

    def is_unit(self, tol: float = _UNIT_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol


@dataclass(frozen=True)
class NedPose:
    """Position and orientation of a body in the global NED frame."""

    position: Vec3 = Vec3()
    orientation: Quaternion = Quaternion()

    def as_transform(self) -> "RigidTransform":
        return RigidTransform(self.orientation, self.position)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation followed by translation: p' = R p + t."""

    rotation: Quaternion = Quaternion()
    translation: Vec3 = Vec3()

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def apply(self, p: Vec3) -> Vec3:
        return self.rotation.rotate(p) + self.translation

    def apply_array(self, pts: np.ndarray) -> np.ndarray:
        """Apply to an (N, 3) array of points."""
        return np.asarray(pts, dtype=float) @ self.rotation.to_matrix().T + self.translation.to_array()

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying `other` first, then self."""
        return RigidTransform(
            (self.rotation * other.rotation).normalized(),
            self.rotation.rotate(other.translation) + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rinv = self.rotation.conjugate()
        return RigidTransform(rinv, -rinv.rotate(self.translation))


@dataclass(frozen=True)
class Ray:
    """Origin plus unit direction. Direction must be unit within 1e-9."""

    origin: Vec3
    direction: Vec3

    def __post_init__(self):
        if abs(self.direction.norm() - 1.0) > _UNIT_TOL:
            raise ValueError("ray direction must be a unit vector")

    @classmethod
    def make(cls, origin: Vec3, direction: Vec3) -> "Ray":
        return cls(origin, direction.normalized())


def apply_transform(t: RigidTransform, p: Vec3) -> Vec3:
    return t.apply(p)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def body_to_ned(pose: NedPose, p_body: Vec3) -> Vec3:
    """Body-frame point (x fwd, y right, z down) to world NED."""
    return pose.orientation.rotate(p_body) + pose.position


def ned_to_body(pose: NedPose, p_ned: Vec3) -> Vec3:
    return pose.orientation.conjugate().rotate(p_ned - pose.position)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def ray_aabb(ray: Ray, box_min: Vec3, box_max: Vec3):
    """Slab-method ray vs axis-aligned box intersection.

    Returns the smallest nonnegative hit distance, or None when the ray
    misses. An origin inside the box reports distance 0.
    """
    tmin = -math.inf
    tmax = math.inf
    o = (ray.origin.n, ray.origin.e, ray.origin.d)
    dvec = (ray.direction.n, ray.direction.e, ray.direction.d)
    lo = (box_min.n, box_min.e, box_min.d)
    hi = (box_max.n, box_max.e, box_max.d)
    for i in range(3):
        if abs(dvec[i]) < 1e-300:
            if o[i] < lo[i] or o[i] > hi[i]:
                return None
            continue
        t1 = (lo[i] - o[i]) / dvec[i]
        t2 = (hi[i] - o[i]) / dvec[i]
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
    if tmax < max(tmin, 0.0):
        return None
    return max(tmin, 0.0)


def ray_aabbs_batch(origins: np.ndarray, dirs: np.ndarray, mins: np.ndarray, maxs: np.ndarray, max_range: float):
    """Vectorized slab test: (N,3) rays against (K,3)/(K,3) boxes.

    Returns (dist, idx): per-ray nearest hit distance (inf on miss) and the
    index of the hit box (-1 on miss). Origins inside a box hit at 0.
    """
    origins = np.asarray(origins, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    n = origins.shape[0]
    dist = np.full(n, np.inf)
    idx = np.full(n, -1, dtype=np.int64)
    if len(mins) == 0 or n == 0:
        return dist, idx
    small = np.abs(dirs) < 1e-300
    inv = np.where(small, 1e300, 1.0 / np.where(small, 1.0, dirs))
    t1 = (mins[None, :, :] - origins[:, None, :]) * inv[:, None, :]
    t2 = (maxs[None, :, :] - origins[:, None, :]) * inv[:, None, :]
    lo = np.minimum(t1, t2).max(axis=2)
    hi = np.maximum(t1, t2).min(axis=2)
    cand = np.maximum(lo, 0.0)
    bad = (hi < cand) | (cand > max_range)
    cand[bad] = np.inf
    best_k = np.argmin(cand, axis=1)
    best = cand[np.arange(n), best_k]
    hitmask = np.isfinite(best)
    dist[hitmask] = best[hitmask]
    idx[hitmask] = best_k[hitmask]
    return dist, idx
