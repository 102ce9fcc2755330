"""Sparse semantic occupancy map.

Only observed-occupied voxels are stored; unknown space is not
represented, so visibility queries treat it as transparent. Each record
carries the best semantic hypothesis so far (max fusion across
observations) plus a count k of times the voxel was seen without any
mask claiming it, which decays the confidence prior used for utility.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import CameraIntrinsics, Pose, VoxelKey, key_center, voxel_keys_of
from .protocol import rle_decode
from .scene import CLASS_BY_NAME, SemanticClass

CONFIDENCE_FLOOR = 0.01  # labeled records never fall below this
UNLABELED_PRIOR = 0.5
UNLABELED_DECAY = 0.6
UNLABELED_MIN = 0.05


@dataclass(frozen=True)
class SemanticRecord:
    cls: SemanticClass | None = None  # None = occupied but never segmented
    p_s: float = 0.0
    instance_id: int | None = None
    labeled_hits: int = 0
    unlabeled_observations: int = 0  # k

    def __post_init__(self):
        if self.cls is None and self.instance_id is not None:
            raise ValueError("unlabeled record cannot carry an instance id")
        if self.cls is not None and self.p_s < CONFIDENCE_FLOOR:
            raise ValueError(f"labeled record confidence {self.p_s} below floor")
        if self.labeled_hits < 0 or self.unlabeled_observations < 0:
            raise ValueError("counts must be >= 0")

    @property
    def labeled(self) -> bool:
        return self.cls is not None


def fuse_record(
    existing: SemanticRecord, incoming: tuple[SemanticClass, float, int | None]
) -> SemanticRecord:
    """Max fusion of one labeled observation into a record.

    Same class keeps the max confidence; a different class wins only with
    strictly higher confidence; ties keep the existing hypothesis. Any
    labeled fuse resets the unlabeled-observation count. The operation is
    idempotent: the hit counter advances only when the record changes.
    """
    cls, conf, inst = incoming
    if not (0.0 <= conf <= 1.0):
        raise ValueError("confidence must be in [0,1]")
    conf = max(conf, CONFIDENCE_FLOOR)

    if existing.cls is None:
        new = SemanticRecord(cls, conf, inst, existing.labeled_hits + 1, 0)
    elif existing.cls is cls:
        p = max(existing.p_s, conf)
        if p == existing.p_s and existing.unlabeled_observations == 0:
            return existing
        new = replace(existing, p_s=p, labeled_hits=existing.labeled_hits + 1,
                      unlabeled_observations=0)
    elif conf > existing.p_s:
        new = SemanticRecord(cls, conf, inst, existing.labeled_hits + 1, 0)
    else:
        if existing.unlabeled_observations == 0:
            return existing
        new = replace(existing, labeled_hits=existing.labeled_hits + 1,
                      unlabeled_observations=0)
    return new


def effective_confidence(record: SemanticRecord) -> float:
    """Confidence fed to the entropy utility: p_s when labeled, else a
    prior that decays with each unclaimed observation."""
    if record.labeled:
        return record.p_s
    k = record.unlabeled_observations
    return min(max(UNLABELED_PRIOR * UNLABELED_DECAY**k, UNLABELED_MIN), UNLABELED_PRIOR)


def outlier_filter(depths: np.ndarray, r: float) -> np.ndarray:
    """Boolean mask of retained points by robust depth gating.

    Keeps points within max(3 * 1.4826 * MAD, 2r) of the median depth of
    the mask's pixels.
    """
    z = np.asarray(depths, dtype=float)
    if z.size == 0:
        return np.zeros(0, dtype=bool)
    med = float(np.median(z))
    mad = float(np.median(np.abs(z - med)))
    tol = max(3.0 * 1.4826 * mad, 2.0 * r)
    return np.abs(z - med) <= tol


@dataclass
class UpdateSummary:
    new_voxels: int = 0
    updated_voxels: int = 0
    outliers_rejected: int = 0


@dataclass
class SemanticOccupancyMap:
    r: float
    records: dict[VoxelKey, SemanticRecord] = field(default_factory=dict)
    observation_epoch: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def fruit_keys(self) -> set[VoxelKey]:
        return {k for k, rec in self.records.items() if rec.cls is SemanticClass.FRUIT}

    def labeled_keys(self, cls: SemanticClass) -> set[VoxelKey]:
        return {k for k, rec in self.records.items() if rec.cls is cls}


def integrate_observation(
    vmap: SemanticOccupancyMap,
    cloud: list[tuple[np.ndarray, SemanticClass | None]],
    masks: list[tuple[np.ndarray, SemanticClass, float, int]],
    depth,
    pose: Pose,
    intr: CameraIntrinsics,
) -> UpdateSummary:
    """Fold one view into the map.

    `cloud` points insert/refresh occupied voxels. Each mask entry is
    (bool pixel mask, class, confidence, instance_id); its valid-depth
    pixels are deprojected, outlier-gated on depth, and max-fused into
    their voxels. Voxels observed with valid depth but covered by no mask
    get their unlabeled count bumped (once per integration).

    Points are keyed a quarter voxel along the viewing ray past the
    reported depth so surface samples land inside the voxel the ray
    entered rather than on its boundary.
    """
    summary = UpdateSummary()
    eye = np.asarray(pose.position)
    depth_shape = np.asarray(depth.data).shape
    for mask, _, _, _ in masks:
        if np.asarray(mask).shape != depth_shape:
            raise ValueError("mask dimensions do not match depth image")
    vmap.observation_epoch += 1

    def ray_keys(points: np.ndarray) -> np.ndarray:
        d = points - eye[None, :]
        n = np.linalg.norm(d, axis=1, keepdims=True)
        n[n == 0] = 1.0
        return voxel_keys_of(points + d / n * (vmap.r / 4), vmap.r)

    # Occupancy from the cloud.
    touched_new: set[VoxelKey] = set()
    if cloud:
        pts = np.array([p for p, _ in cloud], dtype=float)
        if not np.all(np.isfinite(pts)):
            raise ValueError("cloud contains non-finite points")
        for k in map(tuple, np.unique(ray_keys(pts), axis=0).tolist()):
            if k not in vmap.records:
                vmap.records[k] = SemanticRecord()
                touched_new.add(k)
    summary.new_voxels = len(touched_new)

    depth_data = np.asarray(depth.data, dtype=float)
    valid = depth_data > 0
    vs, us = np.nonzero(valid)
    if len(us) == 0:
        return summary

    z = depth_data[vs, us]
    pts_cam = np.stack([(us - intr.cx) * z / intr.fx, (vs - intr.cy) * z / intr.fy, z], axis=1)
    pts_world = pose.to_world(pts_cam)
    keys_all = ray_keys(pts_world)
    pix_index = np.full(depth_data.shape, -1, dtype=np.int64)
    pix_index[vs, us] = np.arange(len(us))

    updated: set[VoxelKey] = set()
    masked_voxels: set[VoxelKey] = set()
    for mask, cls, conf, inst in masks:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != depth_data.shape:
            raise ValueError("mask dimensions do not match depth image")
        sel = pix_index[mask & valid]
        sel = sel[sel >= 0]
        if len(sel) == 0:
            continue
        keep = outlier_filter(z[sel], vmap.r)
        summary.outliers_rejected += int((~keep).sum())
        sel = sel[keep]
        for k in map(tuple, np.unique(keys_all[sel], axis=0).tolist()):
            rec = vmap.records.get(k)
            if rec is None:
                vmap.records[k] = SemanticRecord()
                touched_new.add(k)
                rec = vmap.records[k]
            fused = fuse_record(rec, (cls, conf, inst))
            if fused is not rec:
                vmap.records[k] = fused
                updated.add(k)
            masked_voxels.add(k)

    # Unclaimed observations: valid depth, no mask over any pixel of the voxel.
    unmasked = np.unique(keys_all, axis=0)
    for k in map(tuple, unmasked.tolist()):
        if k in masked_voxels:
            continue
        rec = vmap.records.get(k)
        if rec is None:
            continue  # possible when the cloud was subsampled
        vmap.records[k] = replace(
            rec, unlabeled_observations=rec.unlabeled_observations + 1
        )
        updated.add(k)

    summary.new_voxels = len(touched_new)
    summary.updated_voxels = len(updated - touched_new)
    return summary


def decode_masks(resp_masks, width: int, height: int):
    """Protocol masks -> integrate_observation mask tuples."""
    out = []
    for m in resp_masks:
        cls = CLASS_BY_NAME.get(m.cls)
        if cls is None:
            continue
        out.append((rle_decode(m.rle, width, height), cls, m.confidence, m.instance_id))
    return out


def voxels_in_region(
    vmap: SemanticOccupancyMap, box: tuple[tuple[float, float, float], tuple[float, float, float]]
) -> list[tuple[VoxelKey, SemanticRecord]]:
    """Stored voxels whose centers lie inside the closed box."""
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    out = []
    for k in sorted(vmap.records):
        c = key_center(k, vmap.r)
        if np.all(c >= lo) and np.all(c <= hi):
            out.append((k, vmap.records[k]))
    return out


# ---------------------------------------------------------------------------
# Dump format: scene header plus per-voxel semantic columns:
#   i j k class p_s k instance_id


def save_map(vmap: SemanticOccupancyMap, bounds=None) -> bytes:
    keys = sorted(vmap.records)
    if bounds is None:
        arr = np.array(keys, dtype=float).reshape(-1, 3)
        lo = tuple(((arr.min(axis=0)) * vmap.r).tolist()) if keys else (0.0, 0.0, 0.0)
        hi = tuple(((arr.max(axis=0) + 1) * vmap.r).tolist()) if keys else (0.0, 0.0, 0.0)
        bounds = (lo, hi)
    lines = [f"resolution {vmap.r!r}"]
    lines.append("bounds " + " ".join(repr(float(v)) for v in (*bounds[0], *bounds[1])))
    for k in keys:
        rec = vmap.records[k]
        cls = rec.cls.value if rec.cls is not None else "unlabeled"
        inst = str(rec.instance_id) if rec.instance_id is not None else "-"
        lines.append(
            f"{k[0]} {k[1]} {k[2]} {cls} {rec.p_s!r} {rec.unlabeled_observations} {inst}"
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_map(data: bytes) -> SemanticOccupancyMap:
    from .scene import SceneFormatError

    lines = data.decode("utf-8").splitlines()
    if len(lines) < 2 or not lines[0].startswith("resolution ") or not lines[1].startswith("bounds "):
        raise SceneFormatError("missing resolution/bounds header", line=1)
    r = float(lines[0].split()[1])
    records: dict[VoxelKey, SemanticRecord] = {}
    for i in range(2, len(lines)):
        parts = lines[i].split()
        if len(parts) != 7:
            raise SceneFormatError("expected 'i j k class p_s k instance_id'", line=i + 1)
        key = (int(parts[0]), int(parts[1]), int(parts[2]))
        if key in records:
            raise SceneFormatError(f"duplicate voxel key {key}", line=i + 1)
        cls = None if parts[3] == "unlabeled" else CLASS_BY_NAME.get(parts[3])
        if parts[3] != "unlabeled" and cls is None:
            raise SceneFormatError(f"unknown class {parts[3]!r}", line=i + 1)
        inst = None if parts[6] == "-" else int(parts[6])
        records[key] = SemanticRecord(
            cls=cls,
            p_s=float(parts[4]),
            instance_id=inst,
            labeled_hits=1 if cls is not None else 0,
            unlabeled_observations=int(parts[5]),
        )
    return SemanticOccupancyMap(r=r, records=records)
