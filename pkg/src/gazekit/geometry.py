"""3D scene geometry: head pose, user plane, and screen re-calibration.

Conventions (pinned by fixture tests): the screen is the plane z = 0 with
the camera at its center; the world frame is right-handed with +x toward
the user's right, +y up, and +z pointing from the screen toward the user.
Screen pixel (0, 0) is the top-left corner, so the pixel-to-mm conversion
flips y. Head rotations compose as Rz(wz) @ Ry(wy) @ Rx(wx), each a
standard right-handed rotation about its axis.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import CalibrationSet, ScreenPoint
from .errors import (
    DegenerateGeometryError,
    InvalidInputError,
    NoIntersectionError,
)

__all__ = [
    "HeadPose",
    "ScreenGeometry",
    "Plane3",
    "Ray3",
    "RigidTransform",
    "UserPointSet",
    "intersect_line_plane",
    "head_local_frame",
    "build_user_plane",
    "project_calibration_to_user_points",
    "reproject_user_points",
    "natural_rotation_bounds",
    "zero_plane",
    "load_pose_csv",
    "save_pose_csv",
    "save_user_points",
    "load_user_points",
    "DEFAULT_SCREEN",
    "DEFAULT_PLANE_OFFSET_MM",
]

PARALLEL_EPS = 1e-9
DEFAULT_PLANE_OFFSET_MM = 100.0


@dataclass(frozen=True)
class HeadPose:
    """6-DoF pose: rotations in radians, translation in mm, camera frame."""

    wx: float = 0.0
    wy: float = 0.0
    wz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 750.0

    def __post_init__(self):
        vals = (self.wx, self.wy, self.wz, self.tx, self.ty, self.tz)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("pose parameters must be finite")
        if not self.tz > 0:
            raise InvalidInputError("head must be in front of the camera (tz > 0)")
        for name in ("wx", "wy", "wz", "tx", "ty", "tz"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def origin(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])


@dataclass(frozen=True)
class ScreenGeometry:
    """Screen raster and physical size; the screen is the zero plane."""

    width_px: int = 1280
    height_px: int = 1024
    width_mm: float = 430.0
    height_mm: float = 320.0

    def __post_init__(self):
        if min(self.width_px, self.height_px) <= 0:
            raise InvalidInputError("screen resolution must be positive")
        if min(self.width_mm, self.height_mm) <= 0:
            raise InvalidInputError("screen size must be positive")

    @property
    def mm_per_px_x(self) -> float:
        return self.width_mm / self.width_px

    @property
    def mm_per_px_y(self) -> float:
        return self.height_mm / self.height_px

    def px_to_mm(self, point: ScreenPoint) -> np.ndarray:
        """Screen pixel to world mm on the zero plane (y flipped, z = 0)."""
        return np.array(
            [
                (point.sx - self.width_px / 2.0) * self.mm_per_px_x,
                (self.height_px / 2.0 - point.sy) * self.mm_per_px_y,
                0.0,
            ]
        )

    def mm_to_px(self, xyz) -> ScreenPoint:
        x, y = float(xyz[0]), float(xyz[1])
        return ScreenPoint(
            x / self.mm_per_px_x + self.width_px / 2.0,
            self.height_px / 2.0 - y / self.mm_per_px_y,
        )


DEFAULT_SCREEN = ScreenGeometry()


@dataclass(frozen=True)
class Plane3:
    """Plane through three non-collinear points (mm)."""

    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray

    def __post_init__(self):
        for name in ("p1", "p2", "p3"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = np.cross(self.p2 - self.p1, self.p3 - self.p1)
        if np.linalg.norm(n) <= 1e-9:
            raise InvalidInputError("plane points are collinear")

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.p2 - self.p1, self.p3 - self.p1)
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class Ray3:
    """Line through two distinct points (mm)."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64))
        if np.linalg.norm(self.b - self.a) == 0.0:
            raise InvalidInputError("ray endpoints coincide")


def zero_plane() -> Plane3:
    """The screen plane z = 0."""
    return Plane3(np.zeros(3), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))


def intersect_line_plane(plane: Plane3, ray: Ray3) -> tuple[np.ndarray, float]:
    """Intersect a line with a plane via the 4x4 determinant ratio.

    Returns (point, t) with point = a + (b - a) * t. Raises
    NoIntersectionError when the line is parallel to the plane and
    DegenerateGeometryError when it lies inside it.
    """
    x1, x2, x3 = plane.p1, plane.p2, plane.p3
    x4, x5 = ray.a, ray.b
    num = np.linalg.det(
        np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [x1[0], x2[0], x3[0], x4[0]],
                [x1[1], x2[1], x3[1], x4[1]],
                [x1[2], x2[2], x3[2], x4[2]],
            ]
        )
    )
    d = x5 - x4
    den = np.linalg.det(
        np.array(
            [
                [1.0, 1.0, 1.0, 0.0],
                [x1[0], x2[0], x3[0], d[0]],
                [x1[1], x2[1], x3[1], d[1]],
                [x1[2], x2[2], x3[2], d[2]],
            ]
        )
    )
    if abs(den) <= PARALLEL_EPS:
        if abs(num) <= PARALLEL_EPS:
            raise DegenerateGeometryError("line lies in the plane")
        raise NoIntersectionError("line is parallel to the plane")
    t = -num / den
    return x4 + d * t, float(t)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation mapping head-local coordinates to world mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rotation=rt, translation=-rt @ self.translation)


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def head_local_frame(pose: HeadPose) -> RigidTransform:
    """Rigid transform from head-local to world coordinates."""
    rot = _rz(pose.wz) @ _ry(pose.wy) @ _rx(pose.wx)
    return RigidTransform(rotation=rot, translation=pose.origin)


def build_user_plane(pose: HeadPose, offset_mm: float = DEFAULT_PLANE_OFFSET_MM) -> Plane3:
    """Plane parallel to the head-local xy-plane at head-local z = -offset.

    The plane rides with the head, sitting ``offset_mm`` in front of the
    head origin on the screen side.
    """
    if not offset_mm > 0:
        raise InvalidInputError("plane offset must be positive")
    frame = head_local_frame(pose)
    local = np.array(
        [[0.0, 0.0, -offset_mm], [1.0, 0.0, -offset_mm], [0.0, 1.0, -offset_mm]]
    )
    world = frame.apply(local)
    return Plane3(world[0], world[1], world[2])


@dataclass(frozen=True)
class UserPointSet:
    """Calibration points frozen onto the user plane, in head-local mm."""

    indices: tuple[int, ...]
    points: np.ndarray  # (N, 3) head-local
    pose_at_construction: HeadPose

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] != len(self.indices):
            raise InvalidInputError("user points must be (N, 3) matching indices")
        if not np.isfinite(pts).all():
            raise InvalidInputError("user points must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


def project_calibration_to_user_points(
    pose0: HeadPose, plane: Plane3, screen: ScreenGeometry, cal: CalibrationSet
) -> UserPointSet:
    """Trace head-origin rays through the calibration targets onto the plane.

    Each screen target (converted to mm on the zero plane) defines a ray from
    the head origin; its intersection with the user plane, expressed in the
    head-local frame of ``pose0``, becomes that index's user point.
    """
    frame = head_local_frame(pose0)
    inv = frame.inverse()
    origin = pose0.origin
    indices = []
    pts = []
    for s in cal.samples:
        target_mm = screen.px_to_mm(s.target)
        try:
            world, _ = intersect_line_plane(plane, Ray3(origin, target_mm))
        except (NoIntersectionError, DegenerateGeometryError) as exc:
            raise DegenerateGeometryError(
                f"calibration index {s.index}: ray misses the user plane ({exc})"
            ) from exc
        indices.append(s.index)
        pts.append(inv.apply(world))
    return UserPointSet(
        indices=tuple(indices), points=np.array(pts), pose_at_construction=pose0
    )


def reproject_user_points(
    pose_now: HeadPose, ups: UserPointSet, screen: ScreenGeometry
) -> dict[int, ScreenPoint]:
    """Re-calibrated screen points for the current pose, keyed by index.

    User points move rigidly with the head; the line through each world user
    point and the current head origin is extended to the zero plane and the
    crossing converted back to (unclamped) screen pixels.
    """
    frame = head_local_frame(pose_now)
    origin = pose_now.origin
    plane = zero_plane()
    world_pts = frame.apply(ups.points)
    out = {}
    for idx, wp in zip(ups.indices, world_pts):
        if np.linalg.norm(wp - origin) == 0.0:
            raise DegenerateGeometryError(f"user point {idx} coincides with head origin")
        try:
            point, _ = intersect_line_plane(plane, Ray3(wp, origin))
        except (NoIntersectionError, DegenerateGeometryError) as exc:
            raise DegenerateGeometryError(
                f"user point {idx}: ray misses the screen plane ({exc})"
            ) from exc
        out[idx] = screen.mm_to_px(point)
    return out


def natural_rotation_bounds(screen: ScreenGeometry, depth_mm: float) -> tuple[float, float]:
    """Head-rotation angles (degrees) subtending the screen half-extents.

    alpha = atan(half_width / depth), beta = atan(half_height / depth): the
    yaw/pitch needed to face the screen edges from ``depth_mm`` away.
    """
    if not depth_mm > 0:
        raise InvalidInputError("depth must be positive")
    alpha = math.degrees(math.atan((screen.width_mm / 2.0) / depth_mm))
    beta = math.degrees(math.atan((screen.height_mm / 2.0) / depth_mm))
    return alpha, beta


# ---------------------------------------------------------------------------
# Streams and persistence

def load_pose_csv(path) -> list[tuple[int, HeadPose]]:
    """Read `frame,wx,wy,wz,tx,ty,tz` rows (radians, mm)."""
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["frame", "wx", "wy", "wz", "tx", "ty", "tz"]
        if header is None or [h.strip() for h in header] != expected:
            raise InvalidInputError(f"{path}: expected header '{','.join(expected)}'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise InvalidInputError(f"{path}:{lineno}: expected 7 fields")
            try:
                frame = int(row[0])
                pose = HeadPose(*(float(v) for v in row[1:]))
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
            out.append((frame, pose))
    return out


def save_pose_csv(poses, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "wx", "wy", "wz", "tx", "ty", "tz"])
        for frame, p in poses:
            writer.writerow(
                [frame, repr(p.wx), repr(p.wy), repr(p.wz), repr(p.tx), repr(p.ty), repr(p.tz)]
            )


def save_user_points(ups: UserPointSet, path) -> None:
    p = ups.pose_at_construction
    doc = {
        "indices": list(ups.indices),
        "points": [list(row) for row in ups.points],
        "pose": [p.wx, p.wy, p.wz, p.tx, p.ty, p.tz],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_user_points(path) -> UserPointSet:
    doc = json.loads(Path(path).read_text())
    return UserPointSet(
        indices=tuple(int(i) for i in doc["indices"]),
        points=np.array(doc["points"], dtype=np.float64),
        pose_at_construction=HeadPose(*(float(v) for v in doc["pose"])),
    )
