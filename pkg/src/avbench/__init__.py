"""Desk-scale active-vision benchmark: synthetic plant scenes, a simulated
RGB-D sensor, segmentation-as-a-service, semantic occupancy mapping, and
next-best-view planning compared against a predefined zig-zag baseline."""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, DEFAULT_INTRINSICS, Pose, look_at, voxel_key_of
from .scene import GroundTruthScene, ScenarioSpec, SemanticClass, generate_scenario
from .mapping import SemanticOccupancyMap, SemanticRecord, effective_confidence, fuse_record
from .planning import PlannerConfig, semantic_information, zigzag_poses
from .episode import EpisodeConfig, StepMetrics, run_episode

__all__ = [
    "CameraIntrinsics",
    "DEFAULT_INTRINSICS",
    "EpisodeConfig",
    "GroundTruthScene",
    "PlannerConfig",
    "Pose",
    "ScenarioSpec",
    "SemanticClass",
    "SemanticOccupancyMap",
    "SemanticRecord",
    "StepMetrics",
    "effective_confidence",
    "fuse_record",
    "generate_scenario",
    "look_at",
    "run_episode",
    "semantic_information",
    "voxel_key_of",
    "zigzag_poses",
]
