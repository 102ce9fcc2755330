"""Command-line entry point.

Subcommands:
  scene gen     generate a scenario and write the scene file
  scene stats   per-class voxel counts and cluster count of a scene file
  serve-oracle  run the oracle segmentation server
  run           execute one episode from a config file
  compare       run nbv and zigzag on the same scene/seed, emit summary
  replay        recompute metrics from a map dump against a scene file

Exit codes: 0 success, 1 config error, 2 transport error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, dump_config, echo_config, parse_config
from .episode import EpisodeTransportError, count_fruit_clusters, f1_metrics, run_episode
from .mapping import load_map
from .oracle import OracleNoiseConfig
from .scene import (
    GenerationError,
    SceneFormatError,
    SceneValidationError,
    ScenarioSpec,
    generate_scenario,
    load_scene,
    save_scene,
    scene_stats,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TRANSPORT = 2
EXIT_INVARIANT = 3


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="avbench")
    sub = ap.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scene", help="scene utilities")
    scsub = sc.add_subparsers(dest="scene_command", required=True)
    gen = scsub.add_parser("gen", help="generate a scenario")
    gen.add_argument("--kind", required=True,
                     choices=["full_occlusion", "multiple_clusters", "single_cluster", "unoriented_start"])
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--out", required=True)
    gen.add_argument("--clusters", type=int, default=None)
    gen.add_argument("--density", type=float, default=None)
    stats = scsub.add_parser("stats", help="summarize a scene file")
    stats.add_argument("scene_file")

    srv = sub.add_parser("serve-oracle", help="run the oracle segmentation server")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=7711)
    srv.add_argument("--noise-config", default=None,
                     help="config file whose [oracle_noise] section configures the oracle")

    run = sub.add_parser("run", help="run one episode")
    run.add_argument("--config", default=None)
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override a config key (section.key=value)")
    run.add_argument("--endpoint", default=None, help="host:port of a segmentation server")
    run.add_argument("--timing", action="store_true", help="record real wall times in metrics.csv")
    run.add_argument("--dump-images", action="store_true",
                     help="write per-step depth (.pgm) and label (.ppm) images to the out dir")
    run.add_argument("--quiet", action="store_true")

    cmp_ = sub.add_parser("compare", help="run nbv and zigzag on the same scene/seed")
    cmp_.add_argument("--config", default=None)
    cmp_.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    cmp_.add_argument("--out", default=None, help="output directory (overrides config)")

    rep = sub.add_parser("replay", help="recompute metrics from a map dump")
    rep.add_argument("--map", dest="map_file", required=True)
    rep.add_argument("--scene", dest="scene_file", required=True)
    rep.add_argument("--min-cluster", type=int, default=3)
    return ap


def _cmd_scene_gen(args) -> int:
    overrides = {}
    if args.clusters is not None:
        overrides["cluster_count"] = args.clusters
    if args.density is not None:
        overrides["occluder_density"] = args.density
    spec = ScenarioSpec.preset(args.kind, seed=args.seed, **overrides)
    scene = generate_scenario(spec)
    with open(args.out, "wb") as f:
        f.write(save_scene(scene))
    st = scene_stats(scene)
    print(f"wrote {args.out}: {st['total_voxels']} voxels, "
          f"{st['fruit_cluster_count']} fruit clusters")
    return EXIT_OK


def _cmd_scene_stats(args) -> int:
    with open(args.scene_file, "rb") as f:
        scene = load_scene(f.read())
    st = scene_stats(scene)
    for cls, n in st["class_counts"].items():
        print(f"{cls}: {n}")
    print(f"total: {st['total_voxels']}")
    print(f"fruit_clusters: {st['fruit_cluster_count']}")
    lo, hi = st["bounds"]
    print(f"bounds: {lo} .. {hi}")
    print(f"resolution: {st['resolution']}")
    return EXIT_OK


def _cmd_serve_oracle(args) -> int:
    noise = OracleNoiseConfig()
    if args.noise_config:
        cfg, _ = parse_config(args.noise_config)
        noise = cfg.noise
    from .service import OracleServer

    server = OracleServer(args.host, args.port, noise)
    print(f"oracle server listening on {server.endpoint[0]}:{server.endpoint[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _cmd_run(args) -> int:
    cfg, provenance = parse_config(args.config, overrides=args.overrides)
    if not args.quiet:
        print(echo_config(provenance))
    endpoint = _parse_endpoint(args.endpoint) if args.endpoint else None
    result = run_episode(cfg, endpoint=endpoint)
    if cfg.out and args.timing:
        from .episode import write_outputs

        write_outputs(cfg, result, timing=True)
    if cfg.out and args.dump_images:
        from .sensor import render_view, scene_grid, write_pgm, write_ppm

        cache = scene_grid(result.scene)
        for i, pose in enumerate(result.visited_poses, start=1):
            depth, labels = render_view(result.scene, pose, cfg.intrinsics, _cache=cache)
            write_pgm(depth, os.path.join(cfg.out, f"depth_{i:02d}.pgm"), z_far=cfg.intrinsics.z_far)
            write_ppm(labels, os.path.join(cfg.out, f"labels_{i:02d}.ppm"))
    final = result.metrics[-1]
    print(f"final: f1={final.f1:.4f} precision={final.precision:.4f} "
          f"recall={final.recall:.4f} clusters={final.fruit_clusters_found} "
          f"map={final.map_size} voxels")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from dataclasses import replace

    from .scene import scene_digest
    from .episode import write_outputs

    cfg, _ = parse_config(args.config, overrides=args.overrides)
    out_dir = args.out or cfg.out or "compare_out"
    scene = generate_scenario(cfg.scenario)
    rows = []
    for planner in ("nbv", "zigzag"):
        run_cfg = replace(cfg, planner=planner, out=None)
        result = run_episode(run_cfg, scene=scene)
        sub = os.path.join(out_dir, planner)
        run_cfg = replace(run_cfg, out=sub)
        write_outputs(run_cfg, result)
        final = result.metrics[-1]
        rows.append((planner, final.f1, final.fruit_clusters_found))
    total = scene.fruit_cluster_count
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", encoding="utf-8") as f:
        f.write("planner,final_f1,clusters_found,total_fruit\n")
        for planner, f1, clusters in rows:
            f.write(f"{planner},{f1:.6f},{clusters},{total}\n")
    with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8") as f:
        f.write(dump_config(cfg))
    print(f"scene {cfg.scenario.kind} seed={cfg.scenario.seed} sha256={scene_digest(scene)[:12]}")
    for planner, f1, clusters in rows:
        print(f"{planner}: final_f1={f1:.4f} clusters={clusters}/{total}")
    print(f"wrote {summary_path}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    with open(args.scene_file, "rb") as f:
        scene = load_scene(f.read())
    with open(args.map_file, "rb") as f:
        vmap = load_map(f.read())
    precision, recall, f1 = f1_metrics(vmap, scene)
    clusters = count_fruit_clusters(vmap, args.min_cluster)
    print(f"precision={precision:.6f} recall={recall:.6f} f1={f1:.6f} "
          f"clusters={clusters} map={len(vmap)} voxels")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "scene":
            if args.scene_command == "gen":
                return _cmd_scene_gen(args)
            return _cmd_scene_stats(args)
        if args.command == "serve-oracle":
            return _cmd_serve_oracle(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "replay":
            return _cmd_replay(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EpisodeTransportError as e:
        print(f"transport error: {e}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (SceneValidationError, SceneFormatError, GenerationError, ValueError) as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
