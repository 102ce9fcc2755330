"""The active-vision loop: perceive, segment, integrate, plan, move.

Motion is instantaneous pose assignment; the loop's only state is the
camera pose and the growing semantic map. Per-step metrics compare the
fruit-labeled map voxels against the ground-truth fruit voxels.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, DEFAULT_INTRINSICS, Pose
from .mapping import SemanticOccupancyMap, decode_masks, integrate_observation
from .oracle import OracleNoiseConfig, oracle_segment
from .planning import (
    AttentionRegion,
    PlannerConfig,
    ZigzagConfig,
    sample_candidates,
    select_nbv,
    zigzag_poses,
)
from .protocol import ProtocolError, SegmentationRequest
from .scene import (
    GroundTruthScene,
    ScenarioSpec,
    connected_components,
    default_start_pose,
    generate_scenario,
    scene_digest,
)
from .sensor import apply_depth_noise, depth_to_cloud, render_view, scene_grid
from .service import SegmentationConnectError, SegmentationTimeout, request_segmentation


class EpisodeTransportError(Exception):
    """Segmentation transport failed mid-episode; partial results were kept."""

    def __init__(self, message: str, partial: "EpisodeResult"):
        super().__init__(message)
        self.partial = partial


@dataclass
class StepMetrics:
    step: int
    precision: float
    recall: float
    f1: float
    fruit_clusters_found: int
    map_size: int
    utility_chosen: float
    wall_ms: float


@dataclass
class EpisodeConfig:
    scenario: ScenarioSpec
    planner: str = "nbv"  # nbv | zigzag
    planner_cfg: PlannerConfig = field(default_factory=PlannerConfig)
    zigzag_cfg: ZigzagConfig = field(default_factory=ZigzagConfig)
    noise: OracleNoiseConfig = field(default_factory=OracleNoiseConfig)
    sensor_sigma: float = 0.0
    sensor_dropout: float = 0.0
    start: str = "facing"  # facing | unoriented
    steps: int = 8
    seed: int = 1
    out: str | None = None
    prompt: str = "fruit"
    box_threshold: float = 0.0
    text_threshold: float = 0.0
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    region_mode: str = "fixed"
    region_margin: float = 0.10
    region_box: str | tuple = "scene"  # "scene" or explicit (lo, hi)
    cloud_stride: int = 1
    min_cluster: int = 3
    early_stop_eps: float = 0.0  # 0 disables the early stop
    timeout_s: float = 10.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.planner not in ("nbv", "zigzag"):
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.start not in ("facing", "unoriented"):
            raise ValueError(f"unknown start kind {self.start!r}")


@dataclass
class EpisodeResult:
    scene: GroundTruthScene
    vmap: SemanticOccupancyMap
    metrics: list[StepMetrics]
    planned_poses: list[Pose]
    visited_poses: list[Pose]
    planner_rows: list[tuple]
    failed_step: int | None = None


def f1_metrics(vmap: SemanticOccupancyMap, scene: GroundTruthScene) -> tuple[float, float, float]:
    """Voxel-level precision/recall/F1 of fruit-labeled map voxels against
    ground-truth fruit voxels (exact key matches)."""
    if vmap.r != scene.r:
        raise ValueError(f"map resolution {vmap.r} != scene resolution {scene.r}")
    predicted = vmap.fruit_keys()
    truth = scene.fruit_keys()
    tp = len(predicted & truth)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def count_fruit_clusters(vmap: SemanticOccupancyMap, min_cluster: int = 3) -> int:
    """26-connected components of fruit-labeled voxels, ignoring crumbs
    smaller than min_cluster voxels."""
    comps = connected_components(vmap.fruit_keys())
    return sum(1 for c in comps if len(c) >= min_cluster)


def _segment(cfg: EpisodeConfig, endpoint, req: SegmentationRequest):
    if endpoint is None:
        return oracle_segment(req, cfg.noise)
    return request_segmentation(endpoint, req, timeout_s=cfg.timeout_s)


def run_episode(
    cfg: EpisodeConfig,
    endpoint: tuple[str, int] | None = None,
    scene: GroundTruthScene | None = None,
) -> EpisodeResult:
    """Execute cfg.steps perceive/segment/integrate/plan iterations.

    `endpoint` of None uses the in-process oracle; otherwise requests go
    over the wire. Deterministic for a fixed config and seed.
    """
    scene = scene if scene is not None else generate_scenario(cfg.scenario)
    cache = scene_grid(scene)
    intr = cfg.intrinsics
    vmap = SemanticOccupancyMap(r=scene.r)
    region_box = scene.bounds if cfg.region_box == "scene" else tuple(cfg.region_box)
    region = AttentionRegion(box=region_box, mode=cfg.region_mode, margin=cfg.region_margin)
    zz = zigzag_poses(cfg.zigzag_cfg)

    pose = default_start_pose(scene, cfg.start)
    result = EpisodeResult(scene, vmap, [], [], [], [])
    stop = False

    for step in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        result.visited_poses.append(pose)

        depth, labels = render_view(scene, pose, intr, _cache=cache)
        if cfg.sensor_sigma > 0 or cfg.sensor_dropout > 0:
            depth = apply_depth_noise(
                depth,
                cfg.sensor_sigma,
                cfg.sensor_dropout,
                rng_seed=(cfg.seed * 1_000_003 + step) & 0x7FFFFFFFFFFFFFFF,
                z_near=intr.z_near,
                z_far=intr.z_far,
            )

        req = SegmentationRequest(
            image_id=step,
            width=intr.width,
            height=intr.height,
            label_payload=labels.data.tobytes(),
            prompt=cfg.prompt,
            box_threshold=cfg.box_threshold,
            text_threshold=cfg.text_threshold,
        )
        try:
            resp = _segment(cfg, endpoint, req)
        except (SegmentationConnectError, SegmentationTimeout, ProtocolError) as e:
            result.failed_step = step
            if cfg.out:
                write_outputs(cfg, result)
            raise EpisodeTransportError(f"segmentation failed at step {step}: {e}", result) from e

        mask_tuples = decode_masks(resp.masks, intr.width, intr.height)
        cloud = depth_to_cloud(depth, None, pose, intr, stride=cfg.cloud_stride)
        integrate_observation(vmap, cloud, mask_tuples, depth, pose, intr)

        precision, recall, f1 = f1_metrics(vmap, scene)
        clusters = count_fruit_clusters(vmap, cfg.min_cluster)

        if cfg.planner == "zigzag":
            nxt = zz[(step - 1) % len(zz)]
            utility = 0.0
        else:
            box = region.resolve(vmap)
            rng = np.random.default_rng(
                [cfg.seed & 0x7FFFFFFFFFFFFFFF, 101, step]
            )
            cands = sample_candidates(cfg.planner_cfg, box, pose, rng)
            best, evaluated = select_nbv(vmap, cands, intr, cfg.planner_cfg, box, pose)
            for c in evaluated:
                result.planner_rows.append(
                    (step, c.id, *c.pose.as_row(), c.utility, c.visible_count, int(c.id == best.id))
                )
            nxt = best.pose
            utility = best.utility
            if cfg.early_stop_eps > 0 and utility <= cfg.early_stop_eps:
                stop = True

        result.planned_poses.append(nxt)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        result.metrics.append(
            StepMetrics(step, precision, recall, f1, clusters, len(vmap), utility, wall_ms)
        )
        pose = nxt
        if stop:
            break

    if cfg.out:
        write_outputs(cfg, result)
    return result


# ---------------------------------------------------------------------------
# Artifacts

METRICS_HEADER = "step,precision,recall,f1,clusters,map_size,utility,wall_ms"


def metrics_csv(metrics: list[StepMetrics], timing: bool = False) -> str:
    """CSV text for the per-step metrics.

    wall_ms is written as 0 unless timing is requested, so identical runs
    produce byte-identical files.
    """
    lines = [METRICS_HEADER]
    for m in metrics:
        wall = f"{m.wall_ms:.1f}" if timing else "0"
        lines.append(
            f"{m.step},{m.precision:.6f},{m.recall:.6f},{m.f1:.6f},"
            f"{m.fruit_clusters_found},{m.map_size},{m.utility_chosen:.6f},{wall}"
        )
    return "\n".join(lines) + "\n"


PLANNER_LOG_HEADER = "step,candidate_id,px,py,pz,qw,qx,qy,qz,utility,visible_count,chosen"


def planner_log_csv(rows: list[tuple]) -> str:
    lines = [PLANNER_LOG_HEADER]
    for step, cid, px, py, pz, qw, qx, qy, qz, utility, visible, chosen in rows:
        lines.append(
            f"{step},{cid},{px:.6f},{py:.6f},{pz:.6f},{qw:.6f},{qx:.6f},{qy:.6f},"
            f"{qz:.6f},{utility:.6f},{visible},{chosen}"
        )
    return "\n".join(lines) + "\n"


def write_outputs(cfg: EpisodeConfig, result: EpisodeResult, timing: bool = False) -> None:
    import os

    from .mapping import save_map

    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "metrics.csv"), "w", encoding="utf-8") as f:
        f.write(metrics_csv(result.metrics, timing=timing))
    with open(os.path.join(cfg.out, "map.dump"), "wb") as f:
        f.write(save_map(result.vmap, bounds=result.scene.bounds))
    if result.planner_rows:
        with open(os.path.join(cfg.out, "planner_log.csv"), "w", encoding="utf-8") as f:
            f.write(planner_log_csv(result.planner_rows))
    from .config import dump_config  # deferred: config imports EpisodeConfig

    manifest = {
        "planner": cfg.planner,
        "scenario": cfg.scenario.kind,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "scene_sha256": scene_digest(result.scene),
        "failed_step": result.failed_step,
        "config": dump_config(cfg),
    }
    with open(os.path.join(cfg.out, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
