"""Ground-truth labeled voxel worlds: procedural plant scenarios and file I/O.

Plants are assembled from a pot, a trunk column, branch polylines, leaf
blob shells, and spherical fruit clusters, all voxelized onto the shared
floor-convention grid. Scenarios differ in cluster layout and occluder
placement; generation is fully deterministic per (kind, seed).
"""

from __future__ import annotations

import enum
import hashlib
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, VoxelKey, key_center, look_at, voxel_keys_of


class SemanticClass(enum.Enum):
    FRUIT = "fruit"
    LEAF = "leaf"
    BRANCH = "branch"
    TRUNK = "trunk"
    POT = "pot"
    BACKGROUND = "background"


# Stable byte codes for label-image payloads; background deliberately 0.
CLASS_CODES = {
    SemanticClass.BACKGROUND: 0,
    SemanticClass.FRUIT: 1,
    SemanticClass.LEAF: 2,
    SemanticClass.BRANCH: 3,
    SemanticClass.TRUNK: 4,
    SemanticClass.POT: 5,
}
CODE_CLASSES = {v: k for k, v in CLASS_CODES.items()}
CLASS_BY_NAME = {c.value: c for c in SemanticClass}


class GenerationError(Exception):
    """Scenario spec cannot be satisfied; message names the violated constraint."""


class SceneFormatError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SceneValidationError(Exception):
    pass


SCENARIO_KINDS = ("full_occlusion", "multiple_clusters", "single_cluster", "unoriented_start")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    seed: int = 7
    width: float = 0.8
    depth: float = 0.5
    height: float = 1.0
    resolution: float = 0.02
    cluster_count: int = 1
    cluster_radius: float = 0.05
    fruits_per_cluster: int = 4
    occluder_density: float = 0.5

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not (0.0 <= self.occluder_density <= 1.0):
            raise ValueError("occluder_density must be in [0,1]")
        if self.cluster_count < 1:
            raise ValueError("cluster_count must be >= 1")
        if min(self.width, self.depth, self.height, self.resolution) <= 0:
            raise ValueError("plant dimensions and resolution must be positive")

    @classmethod
    def preset(cls, kind: str, seed: int = 7, **overrides) -> "ScenarioSpec":
        """Scenario defaults calibrated to the benchmark's qualitative layout."""
        base = {
            "full_occlusion": dict(cluster_count=3, occluder_density=0.9),
            "multiple_clusters": dict(cluster_count=6, occluder_density=0.5),
            "single_cluster": dict(cluster_count=1, occluder_density=0.25),
            "unoriented_start": dict(cluster_count=5, occluder_density=0.5),
        }[kind]
        base.update(overrides)
        return cls(kind=kind, seed=seed, **base)


@dataclass
class GroundTruthScene:
    r: float
    voxels: dict[VoxelKey, SemanticClass]
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]]
    fruit_cluster_count: int = field(default=-1)

    def __post_init__(self):
        if not self.voxels:
            raise SceneValidationError("scene has no voxels")
        lo, hi = self.bounds
        for k in self.voxels:
            c = key_center(k, self.r)
            if np.any(c < np.asarray(lo)) or np.any(c > np.asarray(hi)):
                raise SceneValidationError(f"voxel {k} center outside bounds")
        if self.fruit_cluster_count < 0:
            self.fruit_cluster_count = len(connected_components(self.fruit_keys()))

    def fruit_keys(self) -> set[VoxelKey]:
        return {k for k, c in self.voxels.items() if c is SemanticClass.FRUIT}

    def centroid(self) -> np.ndarray:
        lo, hi = self.bounds
        return (np.asarray(lo) + np.asarray(hi)) / 2.0

    def __eq__(self, other):
        if not isinstance(other, GroundTruthScene):
            return NotImplemented
        return (
            self.r == other.r
            and self.bounds == other.bounds
            and self.voxels == other.voxels
        )


_NEIGHBORS_26 = [
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


def connected_components(keys: set[VoxelKey]) -> list[set[VoxelKey]]:
    """26-connectivity components of a sparse voxel key set."""
    remaining = set(keys)
    comps = []
    while remaining:
        seed = remaining.pop()
        comp = {seed}
        queue = deque([seed])
        while queue:
            i, j, k = queue.popleft()
            for dx, dy, dz in _NEIGHBORS_26:
                nb = (i + dx, j + dy, k + dz)
                if nb in remaining:
                    remaining.remove(nb)
                    comp.add(nb)
                    queue.append(nb)
        comps.append(comp)
    return comps


# ---------------------------------------------------------------------------
# Generation


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0x7FFFFFFFFFFFFFFF, salt])


def _sphere_keys(center: np.ndarray, radius: float, r: float) -> np.ndarray:
    """Keys whose centers lie within `radius` of `center`."""
    lo = np.floor((center - radius) / r).astype(np.int64)
    hi = np.floor((center + radius) / r).astype(np.int64)
    axes = [np.arange(lo[a], hi[a] + 1) for a in range(3)]
    gi, gj, gk = np.meshgrid(*axes, indexing="ij")
    keys = np.stack([gi.ravel(), gj.ravel(), gk.ravel()], axis=1)
    centers = (keys + 0.5) * r
    d2 = ((centers - center) ** 2).sum(axis=1)
    return keys[d2 <= radius * radius]


def _shell_keys(center: np.ndarray, radii: np.ndarray, r: float, inner: float) -> np.ndarray:
    """Axis-aligned ellipsoid shell: inner <= normalized radius <= 1."""
    lo = np.floor((center - radii) / r).astype(np.int64)
    hi = np.floor((center + radii) / r).astype(np.int64)
    axes = [np.arange(lo[a], hi[a] + 1) for a in range(3)]
    gi, gj, gk = np.meshgrid(*axes, indexing="ij")
    keys = np.stack([gi.ravel(), gj.ravel(), gk.ravel()], axis=1)
    centers = (keys + 0.5) * r
    q = (((centers - center) / radii) ** 2).sum(axis=1)
    return keys[(q <= 1.0) & (q >= inner * inner)]


class _Builder:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.r = spec.resolution
        self.lo = np.array([-spec.width / 2, -spec.depth / 2, 0.0])
        self.hi = np.array([spec.width / 2, spec.depth / 2, spec.height])
        self.voxels: dict[VoxelKey, SemanticClass] = {}

    def in_bounds(self, keys: np.ndarray) -> np.ndarray:
        centers = (keys + 0.5) * self.r
        return np.all((centers >= self.lo) & (centers <= self.hi), axis=1)

    def put(self, keys: np.ndarray, cls: SemanticClass, overwrite: bool = False):
        keys = keys[self.in_bounds(keys)]
        for k in map(tuple, keys.tolist()):
            if overwrite or k not in self.voxels:
                self.voxels[k] = cls


def _build_plant(b: _Builder, leaf_y_bias: tuple[float, float] | None, n_leaf: int | None = None):
    spec = b.spec
    r = b.r
    h = spec.height
    rng = _rng(spec.seed, 11)

    # Pot: short cylinder at the base.
    pot = _sphere_keys(np.array([0.0, 0.0, 0.0]), 0.10, r)
    pot = pot[(pot[:, 2] >= 0) & ((pot[:, 2] + 0.5) * r <= 0.05)]
    b.put(pot, SemanticClass.POT)

    # Trunk: 2x2 column.
    z_keys = np.arange(int(0.03 / r), int(0.78 * h / r))
    trunk = np.array([(i, j, k) for k in z_keys for i in (-1, 0) for j in (-1, 0)], dtype=np.int64)
    b.put(trunk, SemanticClass.TRUNK)

    # Branches: polylines leaving the trunk, espalier-style (mostly +-x).
    n_branches = 6
    tips = []
    for bi in range(n_branches):
        side = 1.0 if bi % 2 == 0 else -1.0
        z0 = (0.30 + 0.50 * bi / max(1, n_branches - 1)) * h
        d = np.array(
            [
                side * (0.65 + 0.35 * rng.random()),
                (rng.random() - 0.5) * 0.5,
                0.10 + 0.25 * rng.random(),
            ]
        )
        d /= np.linalg.norm(d)
        length = 0.18 + 0.20 * rng.random()
        ts = np.arange(0.0, length, r / 2)
        pts = np.array([0.0, 0.0, z0]) + ts[:, None] * d
        b.put(voxel_keys_of(pts, r), SemanticClass.BRANCH)
        tips.append(pts[-1])

    # Leaf blobs: ellipsoid shells around the crown and branch tips.
    if n_leaf is None:
        n_leaf = max(2, int(round(26 * spec.occluder_density)))
    n_leaf += len(tips)
    centers = []
    for t in tips:
        centers.append(t + (rng.random(3) - 0.5) * 0.05)
    while len(centers) < n_leaf:
        c = np.array(
            [
                rng.uniform(b.lo[0] + 0.06, b.hi[0] - 0.06),
                rng.uniform(*leaf_y_bias) if leaf_y_bias else rng.uniform(b.lo[1] + 0.05, b.hi[1] - 0.05),
                rng.uniform(0.30 * h, 0.92 * h),
            ]
        )
        centers.append(c)
    for c in centers:
        radii = np.array(
            [rng.uniform(0.045, 0.085), rng.uniform(0.035, 0.065), rng.uniform(0.030, 0.055)]
        )
        b.put(_shell_keys(np.asarray(c), radii, r, inner=rng.uniform(0.45, 0.65)), SemanticClass.LEAF)


def _add_canopy_shell(b: _Builder) -> None:
    """Convex leaf shell wrapped around the crown's front: an elliptic arc
    of solid blobs spanning azimuths +-60 degrees. Frontal sightlines are
    blocked, the flanks behind the arc ends stay open, and the curvature
    gives neighbouring viewpoints heavily-overlapping views of the shell.
    occluder_density sets the fraction of arc cells actually filled."""
    spec = b.spec
    rng = _rng(spec.seed, 41)
    h = spec.height
    a_x, b_y = 0.34, 0.16
    thetas = np.radians(np.arange(-60.0, 60.0 + 1e-9, 11.0))
    zs = np.arange(0.12 * h, 0.88 * h, 0.085)
    for th in thetas:
        for z in zs:
            if rng.random() > spec.occluder_density:
                continue
            c = np.array([a_x * math.sin(th), 0.02 + b_y * math.cos(th), z])
            c += rng.uniform(-0.015, 0.015, size=3)
            radii = np.array(
                [rng.uniform(0.045, 0.065), rng.uniform(0.040, 0.055), rng.uniform(0.050, 0.070)]
            )
            b.put(_shell_keys(c, radii, b.r, inner=0.0), SemanticClass.LEAF)


def _place_clusters(b: _Builder, fruit_y_range: tuple[float, float]) -> list[np.ndarray]:
    spec = b.spec
    rng = _rng(spec.seed, 23)
    margin = spec.cluster_radius + 2 * b.r
    x_lo, x_hi = b.lo[0] + margin, b.hi[0] - margin
    y_lo = max(b.lo[1] + margin, fruit_y_range[0])
    y_hi = min(b.hi[1] - margin, fruit_y_range[1])
    if spec.kind == "full_occlusion":
        # Fruit hugs the crown flanks, behind the frontal leaf wall.
        z_lo, z_hi = 0.38 * spec.height, 0.78 * spec.height
        x_bands = [(0.22, min(0.34, x_hi)), (max(-0.34, x_lo), -0.22)]
    else:
        z_lo, z_hi = 0.32 * spec.height, 0.88 * spec.height
        x_bands = [(x_lo, x_hi)]
    if x_lo >= x_hi or y_lo >= y_hi or z_lo >= z_hi:
        raise GenerationError("cluster region is empty: cluster_radius too large for plant bounds")
    if any(a >= bnd for a, bnd in x_bands):
        raise GenerationError("cluster flank bands are empty: plant too narrow for full_occlusion")
    min_sep = 2 * spec.cluster_radius + 4 * b.r
    for _attempt in range(64):
        centers: list[np.ndarray] = []
        tries = 0
        while len(centers) < spec.cluster_count and tries < 2000:
            tries += 1
            band = x_bands[len(centers) % len(x_bands)]
            c = np.array(
                [rng.uniform(*band), rng.uniform(y_lo, y_hi), rng.uniform(z_lo, z_hi)]
            )
            if all(np.linalg.norm(c - o) >= min_sep for o in centers):
                centers.append(c)
        if len(centers) == spec.cluster_count:
            return centers
    raise GenerationError(
        f"could not place {spec.cluster_count} clusters with separation {min_sep:.3f} inside bounds"
    )


def _add_fruit(b: _Builder, centers: list[np.ndarray]) -> None:
    spec = b.spec
    rng = _rng(spec.seed, 37)
    rf = max(spec.cluster_radius * 0.55, b.r * 1.2)
    for c in centers:
        keys = [_sphere_keys(c, rf, b.r)]
        for _ in range(max(0, spec.fruits_per_cluster - 1)):
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            off = c + d * rng.uniform(0.5, 0.95) * rf
            keys.append(_sphere_keys(off, rf * rng.uniform(0.8, 1.0), b.r))
        b.put(np.concatenate(keys), SemanticClass.FRUIT, overwrite=True)


def _line_first_hit(
    voxels: dict[VoxelKey, SemanticClass], start: np.ndarray, end: np.ndarray, r: float
) -> tuple[VoxelKey | None, int]:
    """First occupied voxel along start->end, sampling at step r/4.

    Returns (key, sample_index). The start voxel is skipped.
    """
    seg = end - start
    length = float(np.linalg.norm(seg))
    n = max(2, int(math.ceil(length / (r / 4))))
    ts = np.linspace(0.0, 1.0, n)
    pts = start[None, :] + ts[:, None] * seg[None, :]
    keys = voxel_keys_of(pts, r)
    start_key = tuple(keys[0])
    prev = None
    for idx, k in enumerate(map(tuple, keys.tolist())):
        if k == prev or k == start_key:
            continue
        prev = k
        if k in voxels:
            return k, idx
    return None, -1


def _occlude_from(b: _Builder, eye: np.ndarray) -> None:
    """Add leaf voxels until every fruit voxel is blocked along its line to `eye`."""
    r = b.r
    for _pass in range(8):
        fixed = 0
        fruit = sorted(k for k, c in b.voxels.items() if c is SemanticClass.FRUIT)
        for fk in fruit:
            target = key_center(fk, r)
            hit, idx = _line_first_hit(b.voxels, eye, target, r)
            if hit is not None and b.voxels[hit] is not SemanticClass.FRUIT:
                continue
            # Visible (or fruit-first): drop a leaf in the last free voxel before the block.
            seg = target - eye
            length = float(np.linalg.norm(seg))
            n = max(2, int(math.ceil(length / (r / 4))))
            ts = np.linspace(0.0, 1.0, n)
            pts = eye[None, :] + ts[:, None] * seg[None, :]
            keys = voxel_keys_of(pts, r)
            stop = idx if idx >= 0 else n
            free = None
            for i in range(stop - 1, 0, -1):
                k = tuple(keys[i])
                if k not in b.voxels:
                    free = k
                    break
            if free is None:
                raise GenerationError(f"cannot occlude fruit voxel {fk}: no free voxel on sight line")
            b.voxels[free] = SemanticClass.LEAF
            fixed += 1
        if fixed == 0:
            return
    raise GenerationError("occlusion repair did not converge")


def _rotate_voxels(
    voxels: dict[VoxelKey, SemanticClass], yaw: float, r: float
) -> dict[VoxelKey, SemanticClass]:
    """Rotate a voxel set about the world z axis by inverse mapping, so the
    rotated solid has no aliasing holes."""
    keys = np.array(sorted(voxels), dtype=np.int64)
    centers = (keys + 0.5) * r
    c, s = math.cos(yaw), math.sin(yaw)
    # Forward-rotate the extent to bound the target region.
    x, y = centers[:, 0], centers[:, 1]
    fx = c * x - s * y
    fy = s * x + c * y
    lo = np.array([fx.min(), fy.min(), centers[:, 2].min()]) - 2 * r
    hi = np.array([fx.max(), fy.max(), centers[:, 2].max()]) + 2 * r
    klo = np.floor(lo / r).astype(np.int64)
    khi = np.floor(hi / r).astype(np.int64)
    axes = [np.arange(klo[a], khi[a] + 1) for a in range(3)]
    gi, gj, gk = np.meshgrid(*axes, indexing="ij")
    tkeys = np.stack([gi.ravel(), gj.ravel(), gk.ravel()], axis=1)
    tc = (tkeys + 0.5) * r
    # Inverse-rotate target centers into the source frame.
    sx = c * tc[:, 0] + s * tc[:, 1]
    sy = -s * tc[:, 0] + c * tc[:, 1]
    skeys = np.stack(
        [np.floor(sx / r), np.floor(sy / r), np.floor(tc[:, 2] / r)], axis=1
    ).astype(np.int64)
    out: dict[VoxelKey, SemanticClass] = {}
    for tk, sk in zip(map(tuple, tkeys.tolist()), map(tuple, skeys.tolist())):
        cls = voxels.get(sk)
        if cls is not None:
            out[tk] = cls
    return out


def default_start_pose(scene: GroundTruthScene, kind: str = "facing") -> Pose:
    """Initial camera pose in front of (facing) or misaligned with (unoriented) the plant."""
    lo, hi = np.asarray(scene.bounds[0]), np.asarray(scene.bounds[1])
    centroid = (lo + hi) / 2.0
    if kind == "facing":
        # Steep overview: seeds the map with the canopy top and upper
        # front, leaving the lower crown as appetite for planned views.
        h = hi[2] - lo[2]
        eye = np.array([centroid[0], hi[1] + 0.37, lo[2] + 1.35 * h])
        return look_at(eye, centroid)
    if kind == "unoriented":
        eye = np.array([hi[0] + 0.35, hi[1] + 0.30, 0.40 * (hi[2] - lo[2]) + lo[2]])
        to_plant = centroid - eye
        to_plant[2] = 0.0
        to_plant /= np.linalg.norm(to_plant)
        ang = math.radians(35.0)
        axis = np.array(
            [
                math.cos(ang) * to_plant[0] - math.sin(ang) * to_plant[1],
                math.sin(ang) * to_plant[0] + math.cos(ang) * to_plant[1],
                0.0,
            ]
        )
        return look_at(eye, eye + axis)
    raise ValueError(f"unknown start pose kind {kind!r}")


def generate_scenario(spec: ScenarioSpec) -> GroundTruthScene:
    """Build the ground-truth scene for a scenario; deterministic per (kind, seed)."""
    b = _Builder(spec)
    if spec.kind == "full_occlusion":
        fruit_y = (-spec.depth / 2 + 0.03, -0.04)  # fruit in the back half
        leaf_y = (-spec.depth / 2 + 0.04, 0.04)  # sparse crown behind the wall
        crown_leaves = 10
    else:
        fruit_y = (-spec.depth / 2 + 0.03, spec.depth / 2 - 0.05)
        leaf_y = None
        crown_leaves = None

    centers = _place_clusters(b, fruit_y)
    _build_plant(b, leaf_y, n_leaf=crown_leaves)
    if spec.kind == "full_occlusion":
        _add_canopy_shell(b)
    _add_fruit(b, centers)

    voxels = b.voxels
    bounds = (tuple(b.lo.tolist()), tuple(b.hi.tolist()))
    if spec.kind == "unoriented_start":
        # The flat plant is yawed inside symmetric bounds: every pose prior
        # derived from the bounds (start pose, zig-zag anchor, fallback
        # attention box) assumes a front-facing plant and is misaligned
        # with the actual one.
        voxels = _rotate_voxels(voxels, math.radians(40.0), spec.resolution)
        arr = np.array(sorted(voxels), dtype=float)
        ext = (np.abs(arr[:, :2] + 0.5) * spec.resolution).max(axis=0) + spec.resolution
        bounds = ((-ext[0], -ext[1], b.lo[2]), (ext[0], ext[1], b.hi[2]))

    scene = GroundTruthScene(r=spec.resolution, voxels=voxels, bounds=bounds)

    if spec.kind == "full_occlusion":
        start = default_start_pose(scene, "facing")
        _occlude_from(b, np.asarray(start.position))
        scene = GroundTruthScene(r=spec.resolution, voxels=b.voxels, bounds=scene.bounds)

    if scene.fruit_cluster_count != spec.cluster_count:
        raise GenerationError(
            f"generated {scene.fruit_cluster_count} fruit components, expected {spec.cluster_count}"
        )
    return scene


# ---------------------------------------------------------------------------
# File format: text, line-oriented, LF endings.
#   resolution <r>
#   bounds <x0 y0 z0 x1 y1 z1>
#   <i> <j> <k> <class>          (one line per voxel, sorted)


def save_scene(scene: GroundTruthScene) -> bytes:
    lo, hi = scene.bounds
    lines = [f"resolution {scene.r!r}"]
    lines.append("bounds " + " ".join(repr(float(v)) for v in (*lo, *hi)))
    for k in sorted(scene.voxels):
        lines.append(f"{k[0]} {k[1]} {k[2]} {scene.voxels[k].value}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_scene(data: bytes) -> GroundTruthScene:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise SceneFormatError(f"not valid UTF-8: {e}") from None
    lines = text.splitlines()
    if len(lines) < 2:
        raise SceneFormatError("missing header lines", line=1)

    def fields(i: int, expected_tag: str, count: int) -> list[str]:
        parts = lines[i].split()
        if not parts or parts[0] != expected_tag or len(parts) != count + 1:
            raise SceneFormatError(f"expected '{expected_tag}' with {count} values", line=i + 1)
        return parts[1:]

    try:
        r = float(fields(0, "resolution", 1)[0])
    except ValueError:
        raise SceneFormatError("resolution is not a number", line=1) from None
    if r <= 0:
        raise SceneFormatError("resolution must be positive", line=1)
    try:
        bv = [float(x) for x in fields(1, "bounds", 6)]
    except ValueError:
        raise SceneFormatError("bounds are not numbers", line=2) from None
    lo, hi = tuple(bv[:3]), tuple(bv[3:])
    if not all(a < b for a, b in zip(lo, hi)):
        raise SceneFormatError("bounds must satisfy lo < hi per axis", line=2)

    voxels: dict[VoxelKey, SemanticClass] = {}
    for i in range(2, len(lines)):
        if not lines[i].strip():
            raise SceneFormatError("blank line not allowed", line=i + 1)
        parts = lines[i].split()
        if len(parts) != 4:
            raise SceneFormatError("expected 'i j k class'", line=i + 1)
        try:
            key = (int(parts[0]), int(parts[1]), int(parts[2]))
        except ValueError:
            raise SceneFormatError("voxel indices are not integers", line=i + 1) from None
        cls = CLASS_BY_NAME.get(parts[3])
        if cls is None:
            raise SceneFormatError(f"unknown class {parts[3]!r}", line=i + 1)
        if key in voxels:
            raise SceneFormatError(f"duplicate voxel key {key}", line=i + 1)
        voxels[key] = cls

    return GroundTruthScene(r=r, voxels=voxels, bounds=(lo, hi))


def scene_stats(scene: GroundTruthScene) -> dict:
    counts = {c.value: 0 for c in SemanticClass if c is not SemanticClass.BACKGROUND}
    for cls in scene.voxels.values():
        counts[cls.value] += 1
    return {
        "class_counts": counts,
        "total_voxels": len(scene.voxels),
        "fruit_cluster_count": scene.fruit_cluster_count,
        "bounds": scene.bounds,
        "resolution": scene.r,
    }


def scene_digest(scene: GroundTruthScene) -> str:
    return hashlib.sha256(save_scene(scene)).hexdigest()
