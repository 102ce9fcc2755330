"""Next-best-view planning over the semantic occupancy map.

Utility of a candidate viewpoint is the summed binary entropy of the
confidence of every stored voxel that is visible from it and inside the
attention region. Candidates are sampled on a spherical sector facing
the plant's front; the current pose always competes as candidate 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Pose, VoxelKey, key_center, look_at
from .mapping import SemanticOccupancyMap, effective_confidence
from .raycast import DenseGrid, cast_rays, pixel_rays
from .scene import SemanticClass

Box = tuple[tuple[float, float, float], tuple[float, float, float]]

# The plant's front side faces +y; azimuth rotates about world z toward +x.
_FRONT = np.array([0.0, 1.0, 0.0])
_SIDE = np.array([1.0, 0.0, 0.0])
_UP = np.array([0.0, 0.0, 1.0])


class PlannerError(Exception):
    pass


def semantic_information(p: float) -> float:
    """Binary entropy of a confidence value, in bits (0*log0 taken as 0)."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"confidence {p} outside [0,1]")
    h = 0.0
    if p > 0.0:
        h -= p * math.log2(p)
    if p < 1.0:
        h -= (1.0 - p) * math.log2(1.0 - p)
    return h


@dataclass(frozen=True)
class AttentionRegion:
    box: Box
    mode: str = "fixed"  # fixed | auto
    margin: float = 0.10

    def __post_init__(self):
        lo, hi = self.box
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("attention box must be non-degenerate")
        if self.mode not in ("fixed", "auto"):
            raise ValueError(f"unknown region mode {self.mode!r}")

    def resolve(self, vmap: SemanticOccupancyMap) -> Box:
        """Effective box: in auto mode the dilated bounding box of
        fruit-labeled voxels, falling back to the fixed box when none."""
        if self.mode == "fixed":
            return self.box
        fruit = vmap.labeled_keys(SemanticClass.FRUIT)
        if not fruit:
            return self.box
        centers = np.array([key_center(k, vmap.r) for k in sorted(fruit)])
        lo = centers.min(axis=0) - self.margin
        hi = centers.max(axis=0) + self.margin
        return (tuple(lo.tolist()), tuple(hi.tolist()))


@dataclass
class PlannerConfig:
    candidates: int = 32  # K
    radius_min: float = 0.4
    radius_max: float = 0.8
    azimuth_deg: float = 75.0
    elev_min_deg: float = -10.0
    elev_max_deg: float = 45.0
    workspace: Box = ((-1.2, -1.2, 0.0), (1.2, 1.2, 1.8))
    ray_stride: int = 4
    max_steps: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.candidates < 1:
            raise ValueError("candidates must be >= 1")
        if not (0 < self.radius_min <= self.radius_max):
            raise ValueError("require 0 < radius_min <= radius_max")
        if self.ray_stride < 1:
            raise ValueError("ray_stride must be >= 1")


@dataclass
class ViewpointCandidate:
    pose: Pose
    id: int
    utility: float = 0.0
    visible_count: int = 0


def sample_candidates(
    cfg: PlannerConfig,
    region: Box,
    current: Pose,
    rng: np.random.Generator,
) -> list[ViewpointCandidate]:
    """Current pose (id 0) plus K poses on the spherical sector around the
    region centroid, aimed at the centroid, filtered to the workspace box."""
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    centroid = (lo + hi) / 2.0
    ws_lo = np.asarray(cfg.workspace[0])
    ws_hi = np.asarray(cfg.workspace[1])

    out = [ViewpointCandidate(pose=current, id=0)]
    kept = 0
    for i in range(cfg.candidates):
        radius = rng.uniform(cfg.radius_min, cfg.radius_max)
        az = math.radians(rng.uniform(-cfg.azimuth_deg, cfg.azimuth_deg))
        el = math.radians(rng.uniform(cfg.elev_min_deg, cfg.elev_max_deg))
        d = math.cos(el) * (math.cos(az) * _FRONT + math.sin(az) * _SIDE) + math.sin(el) * _UP
        eye = centroid + radius * d
        if np.any(eye < ws_lo) or np.any(eye > ws_hi):
            continue
        kept += 1
        out.append(ViewpointCandidate(pose=look_at(eye, centroid), id=kept))
    if kept == 0:
        raise PlannerError(
            "no sampled viewpoint lies inside the workspace box; widen the workspace "
            "or shrink the sampling radii"
        )
    return out


def map_grid(vmap: SemanticOccupancyMap) -> DenseGrid:
    keys = np.array(sorted(vmap.records), dtype=np.int64).reshape(-1, 3)
    return DenseGrid.from_keys(keys, vmap.r)


def raycast_visible(
    vmap: SemanticOccupancyMap,
    pose: Pose,
    intr: CameraIntrinsics,
    stride: int,
    region: Box,
    _grid: DenseGrid | None = None,
) -> tuple[set[VoxelKey], int]:
    """(visible stored voxels inside region, total distinct visible count).

    One ray per stride-sampled pixel; the first stored voxel along each
    ray is visible, everything behind it is not. Unknown space does not
    block rays.
    """
    grid = _grid if _grid is not None else map_grid(vmap)
    _, _, dirs = pixel_rays(pose, intr, stride=stride)
    hit, keys, _ = cast_rays(grid, np.asarray(pose.position), dirs, intr.z_near, intr.z_far)
    if not hit.any():
        return set(), 0
    uniq = np.unique(keys[hit], axis=0)
    lo = np.asarray(region[0], dtype=float)
    hi = np.asarray(region[1], dtype=float)
    centers = (uniq + 0.5) * vmap.r
    inside = np.all((centers >= lo) & (centers <= hi), axis=1)
    visible_in_region = set(map(tuple, uniq[inside].tolist()))
    return visible_in_region, int(len(uniq))


def expected_gain(vmap: SemanticOccupancyMap, visible_in_region: set[VoxelKey]) -> float:
    """Summed semantic entropy (bits) over the given stored voxels."""
    return sum(
        semantic_information(effective_confidence(vmap.records[k])) for k in visible_in_region
    )


def select_nbv(
    vmap: SemanticOccupancyMap,
    candidates: list[ViewpointCandidate],
    intr: CameraIntrinsics,
    cfg: PlannerConfig,
    region: Box,
    current: Pose,
) -> tuple[ViewpointCandidate, list[ViewpointCandidate]]:
    """Evaluate all candidates and return (winner, per-candidate report).

    Ties on utility fall to the candidate nearest the current pose, then
    to the smaller id, so the result is invariant under input order.
    """
    if not candidates:
        raise PlannerError("select_nbv needs at least one candidate")
    grid = map_grid(vmap)
    cur_pos = np.asarray(current.position)
    evaluated = []
    for cand in sorted(candidates, key=lambda c: c.id):
        vis, total = raycast_visible(vmap, cand.pose, intr, cfg.ray_stride, region, _grid=grid)
        evaluated.append(
            ViewpointCandidate(
                pose=cand.pose,
                id=cand.id,
                utility=expected_gain(vmap, vis),
                visible_count=total,
            )
        )
    best = min(
        evaluated,
        key=lambda c: (
            -c.utility,
            float(np.linalg.norm(np.asarray(c.pose.position) - cur_pos)),
            c.id,
        ),
    )
    return best, evaluated


@dataclass
class ZigzagConfig:
    columns: int = 4
    rows: int = 2
    standoff: float = 0.55
    centroid: tuple[float, float, float] = (0.0, 0.0, 0.5)
    width: float = 0.6
    height: float = 0.6


def zigzag_poses(cfg: ZigzagConfig | None = None) -> list[Pose]:
    """Serpentine grid of poses on a vertical plane in front of the plant,
    each aimed at the plant centroid. Open loop: independent of any map."""
    cfg = cfg or ZigzagConfig()
    c = np.asarray(cfg.centroid, dtype=float)
    xs = np.linspace(c[0] - cfg.width / 2, c[0] + cfg.width / 2, cfg.columns)
    zs = np.linspace(c[2] - cfg.height / 2, c[2] + cfg.height / 2, cfg.rows)
    y = c[1] + cfg.standoff
    poses = []
    for ri, z in enumerate(zs):
        cols = xs if ri % 2 == 0 else xs[::-1]
        for x in cols:
            poses.append(look_at(np.array([x, y, z]), c))
    return poses
