"""Rigid-transform algebra with explicit frame semantics.

A transform named ``a_from_b`` maps points expressed in frame ``b`` to frame
``a``: ``p_a = R @ p_b + t``. Its ``from_frame`` is ``b`` and its
``to_frame`` is ``a``. Composition is only defined when the inner tags
match: ``compose(a_from_b, b_from_c) -> a_from_c``. Frame tags are plain
strings checked at composition time; they carry no other meaning.

Rotations are stored as unit quaternions (w, x, y, z), renormalized after
every operation and canonicalized to w >= 0 so equal rotations compare
equal. Tolerances: 1e-9 for algebraic identities, 1e-6 once Euler
conversions are involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FrameMismatch

WORLD = "world"

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class Rotation:
    """Unit quaternion, scalar-first, canonicalized to w >= 0."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        w, x, y, z = float(self.w), float(self.x), float(self.y), float(self.z)
        n = math.sqrt(w**2 + x**2 + y**2 + z**2)
        if n < _NORM_EPS:
            raise ValueError("zero-norm quaternion")
        # renormalizing a unit quaternion would perturb the last ulp and
        # break exact round-trips, so only touch it when it actually drifted
        if abs(n - 1.0) > 1e-12:
            w, x, y, z = w / n, x / n, y / n, z / n
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(1.0, 0.0, 0.0, 0.0)

    def multiply(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix mapping from_frame vectors to to_frame."""
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )

    def rotate(self, v: np.ndarray) -> np.ndarray:
        return self.matrix() @ np.asarray(v, dtype=float)

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic angle between two rotations, radians."""
        d = self.conjugate().multiply(other)
        return 2.0 * math.atan2(math.sqrt(d.x**2 + d.y**2 + d.z**2), abs(d.w))


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element mapping points in from_frame to to_frame."""

    rotation: Rotation
    translation: np.ndarray
    from_frame: str
    to_frame: str

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return (
            self.rotation == other.rotation
            and bool(np.array_equal(self.translation, other.translation))
            and self.from_frame == other.from_frame
            and self.to_frame == other.to_frame
        )

    @staticmethod
    def identity(frame: str = WORLD) -> "RigidTransform":
        return RigidTransform(Rotation.identity(), np.zeros(3), frame, frame)

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Map a point from from_frame into to_frame."""
        return self.rotation.rotate(p) + self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix()
        m[:3, 3] = self.translation
        return m


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a_from_b composed with b_from_c, yielding a_from_c."""
    if a.from_frame != b.to_frame:
        raise FrameMismatch(
            f"cannot compose: inner frames differ "
            f"({a.to_frame}<-{a.from_frame} vs {b.to_frame}<-{b.from_frame})"
        )
    rot = a.rotation.multiply(b.rotation)
    t = a.rotation.rotate(b.translation) + a.translation
    return RigidTransform(rot, t, from_frame=b.from_frame, to_frame=a.to_frame)


def inverse(a: RigidTransform) -> RigidTransform:
    rot = a.rotation.conjugate()
    t = -rot.rotate(a.translation)
    return RigidTransform(rot, t, from_frame=a.to_frame, to_frame=a.from_frame)


def relative_pose(a_from_w: RigidTransform, b_from_w: RigidTransform) -> RigidTransform:
    """a_from_b given two poses sharing a base frame (typically the world)."""
    if a_from_w.from_frame != b_from_w.from_frame:
        raise FrameMismatch(
            f"poses share no base frame: {a_from_w.from_frame} vs {b_from_w.from_frame}"
        )
    return compose(a_from_w, inverse(b_from_w))


def rotation_to_vector(r: Rotation) -> np.ndarray:
    """Axis-angle 3-vector; magnitude in [0, pi] thanks to w >= 0."""
    n = math.sqrt(r.x**2 + r.y**2 + r.z**2)
    if n < 1e-12:
        # first-order: q ~ (1, v/2)
        return 2.0 * np.array([r.x, r.y, r.z])
    angle = 2.0 * math.atan2(n, r.w)
    return (angle / n) * np.array([r.x, r.y, r.z])


def vector_to_rotation(v: np.ndarray) -> Rotation:
    v = np.asarray(v, dtype=float).reshape(3)
    angle = float(np.linalg.norm(v))
    if angle < 1e-12:
        return Rotation(1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2])
    axis = v / angle
    s = math.sin(0.5 * angle)
    return Rotation(math.cos(0.5 * angle), axis[0] * s, axis[1] * s, axis[2] * s)


def euler_to_rotation(yaw: float, pitch: float, roll: float) -> Rotation:
    """Intrinsic Z-Y-X: yaw about z, then pitch about y, then roll about x."""
    qz = Rotation(math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw))
    qy = Rotation(math.cos(0.5 * pitch), 0.0, math.sin(0.5 * pitch), 0.0)
    qx = Rotation(math.cos(0.5 * roll), math.sin(0.5 * roll), 0.0, 0.0)
    return qz.multiply(qy).multiply(qx)
