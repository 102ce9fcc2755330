"""Regenerate the bundled scene files and benchmark configs."""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from avbench.data import BUNDLED
from avbench.scene import ScenarioSpec, generate_scenario, save_scene

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "avbench", "data")

CONFIG_TEMPLATE = """\
# Bundled benchmark config: {kind}
[scenario]
kind = {kind}
seed = {scene_seed}

[episode]
planner = nbv
steps = 8
seed = 1
start = {start}

[planner]
candidates = 48
radius_min = 0.4
radius_max = 0.8
elev_min_deg = -10.0
elev_max_deg = 35.0
region_mode = auto
region_margin = 0.15

[oracle_noise]
conf_min = 0.6
conf_max = 0.9
"""


def main():
    for kind, (scene_seed, start) in BUNDLED.items():
        spec = ScenarioSpec.preset(kind, seed=scene_seed)
        scene = generate_scenario(spec)
        path = os.path.join(DATA, "scenes", f"{kind}.scene")
        with open(path, "wb") as f:
            f.write(save_scene(scene))
        print(f"{path}: {len(scene.voxels)} voxels, {scene.fruit_cluster_count} clusters")
        cfg_path = os.path.join(DATA, "configs", f"{kind}.ini")
        with open(cfg_path, "w", encoding="utf-8") as f:
            f.write(CONFIG_TEMPLATE.format(kind=kind, scene_seed=scene_seed, start=start))
        print(cfg_path)


if __name__ == "__main__":
    main()
