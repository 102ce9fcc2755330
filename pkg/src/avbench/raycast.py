"""Vectorized voxel traversal over a dense occupancy grid.

Rays are parameterized by camera depth t: p(t) = origin + t * dir, where
dir is the per-pixel camera ray with unit z-component rotated into the
world frame. t is then exactly the camera-frame depth of p(t), so hit
depths can be written straight into a depth image.

Traversal is grid marching (Amanatides-Woo): track the next axis-boundary
crossing per ray and step one voxel at a time, all rays advanced together
with numpy and compacted as they terminate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, Pose


@dataclass
class DenseGrid:
    """Boolean occupancy over a key-aligned box: key k occupies cell k - origin."""

    r: float
    origin: np.ndarray  # (3,) int64, key of the grid corner
    occ: np.ndarray  # (nx,ny,nz) bool

    @classmethod
    def from_keys(cls, keys: np.ndarray, r: float, pad: int = 1) -> "DenseGrid":
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        if len(keys) == 0:
            origin = np.zeros(3, dtype=np.int64)
            return cls(r=r, origin=origin, occ=np.zeros((1, 1, 1), dtype=bool))
        lo = keys.min(axis=0) - pad
        hi = keys.max(axis=0) + pad + 1
        occ = np.zeros(tuple(hi - lo), dtype=bool)
        idx = keys - lo
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return cls(r=r, origin=lo, occ=occ)

    @property
    def shape(self) -> np.ndarray:
        return np.asarray(self.occ.shape, dtype=np.int64)

    def world_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.origin * self.r
        hi = (self.origin + self.shape) * self.r
        return lo, hi

    def cell_index(self, keys: np.ndarray) -> np.ndarray:
        return np.asarray(keys, dtype=np.int64) - self.origin


def pixel_rays(pose: Pose, intr: CameraIntrinsics, stride: int = 1):
    """World-frame ray directions through pixel centers, one per sampled pixel.

    Returns (us, vs, dirs) where dirs has unit camera-z so the ray parameter
    equals camera depth. us/vs are flat arrays of the sampled pixel coords.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    us = np.arange(0, intr.width, stride)
    vs = np.arange(0, intr.height, stride)
    uu, vv = np.meshgrid(us, vs, indexing="xy")
    uu = uu.ravel()
    vv = vv.ravel()
    dirs_cam = np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu, dtype=float)],
        axis=1,
    )
    dirs_world = dirs_cam @ pose.rotation().T
    return uu, vv, dirs_world


def cast_rays(
    grid: DenseGrid,
    origin: np.ndarray,
    dirs: np.ndarray,
    t_min: float,
    t_max: float,
):
    """First-occupied-voxel query for rays origin + t*dirs, t in [t_min, t_max].

    Returns (hit, keys, t_entry): hit is (N,) bool; keys is (N,3) int64, valid
    where hit; t_entry is the ray parameter at which the hit voxel was entered.
    """
    origin = np.asarray(origin, dtype=float).reshape(3)
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    n = len(dirs)
    hit = np.zeros(n, dtype=bool)
    hit_keys = np.zeros((n, 3), dtype=np.int64)
    hit_t = np.zeros(n, dtype=float)
    if n == 0 or not grid.occ.any():
        return hit, hit_keys, hit_t

    r = grid.r
    lo, hi = grid.world_bounds()

    # Slab test: clip each ray's t-range to the grid box.
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        ta = (lo[None, :] - origin[None, :]) * inv
        tb = (hi[None, :] - origin[None, :]) * inv
    near = np.minimum(ta, tb)
    far = np.maximum(ta, tb)
    # Axis-parallel rays: inside the slab -> (-inf, inf), outside -> empty.
    zero = dirs == 0
    if zero.any():
        inside = np.broadcast_to((origin >= lo) & (origin <= hi), zero.shape)
        near[zero] = np.where(inside[zero], -np.inf, np.inf)
        far[zero] = np.where(inside[zero], np.inf, -np.inf)
    t0 = np.maximum(near.max(axis=1), t_min)
    t1 = np.minimum(far.min(axis=1), t_max)
    alive = t0 < t1
    if not alive.any():
        return hit, hit_keys, hit_t

    idx = np.nonzero(alive)[0]
    d = dirs[idx]
    t_cur = t0[idx]
    t_stop = t1[idx]
    # Nudge only the key computation off exact boundaries; reported t is exact.
    start = origin[None, :] + (t_cur + 1e-9)[:, None] * d
    key = np.floor(start / r).astype(np.int64)
    step = np.sign(d).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (key + (step > 0)) * r
        t_next = np.where(d != 0, (bound - origin[None, :]) / d, np.inf)
        t_delta = np.where(d != 0, r / np.abs(d), np.inf)

    max_iters = int(grid.shape.sum()) * 3 + 8
    for _ in range(max_iters):
        if len(idx) == 0:
            break
        cell = key - grid.origin
        inside = np.all((cell >= 0) & (cell < grid.shape[None, :]), axis=1)
        occ_here = np.zeros(len(idx), dtype=bool)
        if inside.any():
            c = cell[inside]
            occ_here[inside] = grid.occ[c[:, 0], c[:, 1], c[:, 2]]
        just_hit = occ_here
        if just_hit.any():
            tgt = idx[just_hit]
            hit[tgt] = True
            hit_keys[tgt] = key[just_hit]
            hit_t[tgt] = t_cur[just_hit]
        cont = ~just_hit
        # Advance surviving rays to the next boundary crossing. Axes whose
        # crossings coincide (corner hits) are stepped together so the ray
        # never "visits" a zero-chord cell it merely grazes.
        t_new = t_next.min(axis=1)
        cont &= t_new <= t_stop
        if not cont.any():
            break
        idx = idx[cont]
        key = key[cont]
        step = step[cont]
        t_next = t_next[cont]
        t_delta = t_delta[cont]
        t_stop = t_stop[cont]
        t_cur = t_new[cont]
        tied = t_next <= (t_cur + 1e-12 * (1.0 + np.abs(t_cur)))[:, None]
        key += np.where(tied, step, 0)
        t_next += np.where(tied, t_delta, 0.0)

    return hit, hit_keys, hit_t
