"""Benchmark tuning harness: run scenario x planner x seed grids and print
the acceptance-relevant medians (final F1, margins, episode times)."""

import statistics
import sys
import time

sys.path.insert(0, "src")

from avbench.episode import EpisodeConfig, run_episode
from avbench.oracle import OracleNoiseConfig
from avbench.planning import PlannerConfig
from avbench.scene import ScenarioSpec, generate_scenario

SEEDS = [1, 2, 3, 4, 5]


def run_grid(kinds=None, seeds=None, scene_seed=7, noise_fn=None, planner_cfg=None, steps=8,
             region_mode="fixed", region_margin=0.10, verbose=False):
    kinds = kinds or ["full_occlusion", "multiple_clusters", "single_cluster", "unoriented_start"]
    seeds = seeds or SEEDS
    out = {}
    for kind in kinds:
        spec = ScenarioSpec.preset(kind, seed=scene_seed)
        scene = generate_scenario(spec)
        start = "unoriented" if kind == "unoriented_start" else "facing"
        finals = {}
        for planner in ["nbv", "zigzag"]:
            vals = []
            times = []
            for seed in seeds:
                cfg = EpisodeConfig(
                    scenario=spec,
                    planner=planner,
                    seed=seed,
                    start=start,
                    steps=steps,
                    noise=noise_fn(seed) if noise_fn else OracleNoiseConfig(),
                    planner_cfg=planner_cfg or PlannerConfig(),
                    region_mode=region_mode,
                    region_margin=region_margin,
                )
                t0 = time.time()
                res = run_episode(cfg, scene=scene)
                times.append(time.time() - t0)
                vals.append(res.metrics[-1].f1)
                if verbose:
                    traj = [round(m.f1, 3) for m in res.metrics]
                    print(f"    {kind} {planner} seed={seed}: {traj}")
            finals[planner] = vals
            med = statistics.median(vals)
            print(f"  {kind:18s} {planner:6s} median={med:.3f} finals={[round(v,3) for v in vals]} "
                  f"t={max(times):.1f}s")
        margin = statistics.median(finals["nbv"]) - statistics.median(finals["zigzag"])
        need = 0.05 if kind in ("full_occlusion", "unoriented_start") else 0.0
        ok = "PASS" if margin >= need else "FAIL"
        print(f"  {kind:18s} margin={margin:+.3f} (need >= {need:+.2f}) {ok}")
        out[kind] = margin
    return out


if __name__ == "__main__":
    run_grid(kinds=sys.argv[1:] or None, verbose="-v" in sys.argv)
