"""Simulated RGB-D camera over a ground-truth voxel scene.

render_view casts one ray per pixel center against the scene voxels and
records the camera-frame depth at which the first occupied voxel is
entered (0 = no return), plus that voxel's class in a label image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Pose
from .raycast import DenseGrid, cast_rays, pixel_rays
from .scene import CLASS_CODES, CODE_CLASSES, GroundTruthScene, SemanticClass


@dataclass
class DepthImage:
    width: int
    height: int
    data: np.ndarray  # (height, width) float64 meters, 0 = no return

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(self.height, self.width)


@dataclass
class LabelImage:
    width: int
    height: int
    data: np.ndarray  # (height, width) uint8 class codes, background = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8).reshape(self.height, self.width)

    def class_at(self, u: int, v: int) -> SemanticClass:
        return CODE_CLASSES[int(self.data[v, u])]


def scene_grid(scene: GroundTruthScene) -> tuple[DenseGrid, np.ndarray]:
    """Dense occupancy plus a parallel class-code array for a scene."""
    keys = np.array(sorted(scene.voxels), dtype=np.int64).reshape(-1, 3)
    grid = DenseGrid.from_keys(keys, scene.r)
    codes = np.zeros(grid.occ.shape, dtype=np.uint8)
    idx = grid.cell_index(keys)
    vals = np.array([CLASS_CODES[scene.voxels[tuple(k)]] for k in keys.tolist()], dtype=np.uint8)
    codes[idx[:, 0], idx[:, 1], idx[:, 2]] = vals
    return grid, codes


def render_view(
    scene: GroundTruthScene,
    pose: Pose,
    intr: CameraIntrinsics,
    _cache: tuple[DenseGrid, np.ndarray] | None = None,
) -> tuple[DepthImage, LabelImage]:
    """Render depth and ground-truth label images from `pose`.

    `_cache` may carry a precomputed scene_grid() to avoid rebuilding the
    dense grid for every view of the same scene.
    """
    grid, codes = _cache if _cache is not None else scene_grid(scene)
    uu, vv, dirs = pixel_rays(pose, intr, stride=1)
    hit, keys, t_entry = cast_rays(grid, np.asarray(pose.position), dirs, intr.z_near, intr.z_far)

    depth = np.zeros((intr.height, intr.width), dtype=float)
    labels = np.zeros((intr.height, intr.width), dtype=np.uint8)
    if hit.any():
        cells = grid.cell_index(keys[hit])
        depth[vv[hit], uu[hit]] = t_entry[hit]
        labels[vv[hit], uu[hit]] = codes[cells[:, 0], cells[:, 1], cells[:, 2]]
    return (
        DepthImage(intr.width, intr.height, depth),
        LabelImage(intr.width, intr.height, labels),
    )


def depth_to_cloud(
    depth: DepthImage,
    labels: LabelImage | None,
    pose: Pose,
    intr: CameraIntrinsics,
    stride: int = 1,
) -> list[tuple[np.ndarray, SemanticClass | None]]:
    """World points for every non-zero sampled pixel, with optional classes."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if labels is not None and (labels.width != depth.width or labels.height != depth.height):
        raise ValueError("label image dimensions do not match depth image")
    d = depth.data[::stride, ::stride]
    vs, us = np.nonzero(d > 0)
    if len(us) == 0:
        return []
    u = us * stride
    v = vs * stride
    z = d[vs, us]
    pts_cam = np.stack([(u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z], axis=1)
    pts = pose.to_world(pts_cam)
    if labels is None:
        return [(p, None) for p in pts]
    codes = labels.data[v, u]
    return [(p, CODE_CLASSES[int(c)]) for p, c in zip(pts, codes)]


def apply_depth_noise(
    depth: DepthImage,
    sigma: float,
    dropout_p: float,
    rng_seed: int,
    z_near: float = 0.1,
    z_far: float = 2.0,
) -> DepthImage:
    """Additive Gaussian depth noise (clamped to the clip range) plus pixel dropout."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if not (0.0 <= dropout_p <= 1.0):
        raise ValueError("dropout_p must be in [0,1]")
    rng = np.random.default_rng(rng_seed & 0x7FFFFFFFFFFFFFFF)
    data = depth.data.copy()
    valid = data > 0
    if sigma > 0:
        noise = rng.normal(0.0, sigma, size=data.shape)
        data[valid] = np.clip(data[valid] + noise[valid], z_near, z_far)
    else:
        rng.normal(0.0, 1.0, size=data.shape)  # keep the stream layout stable
    if dropout_p > 0:
        drop = rng.random(size=data.shape) < dropout_p
        data[drop] = 0.0
    return DepthImage(depth.width, depth.height, data)


def write_pgm(depth: DepthImage, path: str, z_far: float = 2.0) -> None:
    """Debug dump: depth as a binary portable graymap (0 = no return)."""
    scaled = np.clip(depth.data / z_far * 255.0, 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{depth.width} {depth.height}\n255\n".encode("ascii"))
        f.write(scaled.tobytes())


_CLASS_COLORS = {
    0: (0, 0, 0),
    1: (220, 40, 40),
    2: (60, 170, 60),
    3: (140, 100, 40),
    4: (110, 70, 30),
    5: (120, 120, 130),
}


def write_ppm(labels: LabelImage, path: str) -> None:
    """Debug dump: labels as a binary portable pixmap with fixed class colors."""
    rgb = np.zeros((labels.height, labels.width, 3), dtype=np.uint8)
    for code, color in _CLASS_COLORS.items():
        rgb[labels.data == code] = color
    with open(path, "wb") as f:
        f.write(f"P6\n{labels.width} {labels.height}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())
