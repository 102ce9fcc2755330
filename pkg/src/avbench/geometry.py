"""Poses, pinhole camera model, and voxel indexing.

Camera frame convention (OpenCV style): +Z is the optical axis pointing
into the scene, +X points to image right, +Y points to image down.
World frame: +Z up. Poses store a unit quaternion (w, x, y, z) mapping
camera coordinates into world coordinates.

Voxel keys follow the floor convention: key = floor(coordinate / r)
componentwise, so a voxel with key k spans [k*r, (k+1)*r) on each axis.
The same discretization is shared by scenes, maps, and evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VoxelKey = tuple[int, int, int]


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite 3-vector: {v!r}")
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid camera pose: position in meters, orientation as unit quaternion (w,x,y,z)."""

    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float]

    def __post_init__(self):
        p = _as_vec3(self.position)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"orientation quaternion norm {n} != 1")
        object.__setattr__(self, "position", tuple(float(x) for x in p))
        object.__setattr__(self, "orientation", tuple(float(x) for x in q))

    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation matrix (columns are the camera axes in world frame)."""
        w, x, y, z = self.orientation
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def optical_axis(self) -> np.ndarray:
        return self.rotation()[:, 2]

    def to_world(self, pts_cam: np.ndarray) -> np.ndarray:
        """Transform (N,3) or (3,) camera-frame points into the world frame."""
        pts = np.asarray(pts_cam, dtype=float)
        return pts @ self.rotation().T + np.asarray(self.position)

    def to_camera(self, pts_world: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts_world, dtype=float)
        return (pts - np.asarray(self.position)) @ self.rotation()

    def as_row(self) -> tuple[float, ...]:
        """Seven numbers (px py pz qw qx qy qz) for logging."""
        return self.position + self.orientation


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    z_near: float
    z_far: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.z_near < self.z_far):
            raise ValueError("require 0 < z_near < z_far")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")


# Scaled-down RGB-D stand-in used throughout the benchmark; small enough for fast tests.
DEFAULT_INTRINSICS = CameraIntrinsics(
    fx=120.0, fy=120.0, cx=80.0, cy=60.0, width=160, height=120, z_near=0.1, z_far=2.0
)


def deproject(pixel: tuple[int, int], depth: float, intr: CameraIntrinsics) -> np.ndarray:
    """Back-project a pixel at a given depth (camera-frame z, meters) to a camera-frame point."""
    u, v = pixel
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise ValueError(f"pixel ({u},{v}) outside {intr.width}x{intr.height} image")
    if not math.isfinite(depth) or not (intr.z_near <= depth <= intr.z_far):
        raise ValueError(f"depth {depth} outside [{intr.z_near}, {intr.z_far}]")
    return np.array(
        [(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth]
    )


def project(point, intr: CameraIntrinsics) -> tuple[float, float, float]:
    """Project a camera-frame point to (u, v, depth). Requires z > 0."""
    p = _as_vec3(point)
    if p[2] <= 0:
        raise ValueError(f"point behind camera: z={p[2]}")
    u = intr.fx * p[0] / p[2] + intr.cx
    v = intr.fy * p[1] / p[2] + intr.cy
    return float(u), float(v), float(p[2])


def _quat_from_matrix(m: np.ndarray) -> tuple[float, float, float, float]:
    # Shepperd's method; stable for all rotations.
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z])
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q  # canonical sign so equal rotations serialize identically
    return tuple(float(c) for c in q)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Pose at `eye` whose optical axis (+Z) points toward `target`.

    `up` fixes the roll: camera +Y (image down) points opposite the
    projection of `up` onto the image plane.
    """
    eye = _as_vec3(eye)
    target = _as_vec3(target)
    up = _as_vec3(up)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("look_at: eye and target coincide")
    z = fwd / n
    x = np.cross(z, up)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise ValueError("look_at: up is parallel to the viewing direction")
    x /= nx
    y = np.cross(z, x)
    rot = np.column_stack([x, y, z])
    return Pose(tuple(eye), _quat_from_matrix(rot))


def voxel_key_of(point, r: float) -> VoxelKey:
    """Voxel key of a world point at resolution r (floor convention)."""
    if r <= 0:
        raise ValueError("resolution must be positive")
    p = _as_vec3(point)
    return (
        int(math.floor(p[0] / r)),
        int(math.floor(p[1] / r)),
        int(math.floor(p[2] / r)),
    )


def voxel_keys_of(points: np.ndarray, r: float) -> np.ndarray:
    """Vectorized voxel_key_of: (N,3) points -> (N,3) int64 keys."""
    if r <= 0:
        raise ValueError("resolution must be positive")
    return np.floor(np.asarray(points, dtype=float) / r).astype(np.int64)


def key_center(key, r: float) -> np.ndarray:
    """World-frame center of a voxel key."""
    return (np.asarray(key, dtype=float) + 0.5) * r
