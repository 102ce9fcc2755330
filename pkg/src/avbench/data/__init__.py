"""Bundled benchmark scenes and configs.

One scene file and one config per scenario; the scene seeds were picked
so each scenario exhibits its intended structure (occlusion that the
zig-zag plane cannot see around, misaligned plant, and so on). The scene
files are committed as text and must match regeneration from their spec
(guarded by a test); `scripts/gen_bundles.py` rebuilds them.
"""

from importlib import resources

from ..scene import GroundTruthScene, ScenarioSpec, load_scene

# (scene seed, start kind) per bundled scenario.
BUNDLED = {
    "full_occlusion": (7, "facing"),
    "multiple_clusters": (5, "facing"),
    "single_cluster": (7, "facing"),
    "unoriented_start": (11, "unoriented"),
}


def bundled_spec(kind: str) -> ScenarioSpec:
    seed, _ = BUNDLED[kind]
    return ScenarioSpec.preset(kind, seed=seed)


def bundled_scene(kind: str) -> GroundTruthScene:
    data = resources.files(__package__).joinpath(f"scenes/{kind}.scene").read_bytes()
    return load_scene(data)


def bundled_config_text(kind: str) -> str:
    return resources.files(__package__).joinpath(f"configs/{kind}.ini").read_text("utf-8")


def bundled_config_path(kind: str) -> str:
    return str(resources.files(__package__).joinpath(f"configs/{kind}.ini"))
