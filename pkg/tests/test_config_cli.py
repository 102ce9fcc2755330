import os
import subprocess
import sys

import pytest

from avbench.config import ConfigError, dump_config, echo_config, parse_config
from avbench.scene import generate_scenario, load_scene


class TestParseConfig:
    def test_empty_text_gives_all_defaults(self):
        cfg, provenance = parse_config(text="")
        assert cfg.steps == 8
        assert cfg.planner == "nbv"
        assert cfg.scenario.kind == "multiple_clusters"
        assert cfg.scenario.cluster_count == 6  # preset for the kind
        assert all(e.source == "default" for e in provenance)

    def test_zero_steps_names_key_and_line(self):
        text = "[episode]\nsteps = 0\n"
        with pytest.raises(ConfigError) as exc:
            parse_config(text=text)
        assert "steps" in str(exc.value)
        assert exc.value.line == 2

    def test_override_planner(self):
        cfg, provenance = parse_config(text="", overrides=["planner=zigzag"])
        assert cfg.planner == "zigzag"
        others = [e for e in provenance if not (e.section == "episode" and e.key == "planner")]
        assert all(e.source == "default" for e in others)

    def test_dotted_override(self):
        cfg, _ = parse_config(text="", overrides=["planner.candidates=9"])
        assert cfg.planner_cfg.candidates == 9

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(text="[episode]\nwarp_speed = 9\n")
        assert exc.value.line == 2

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(text="[rockets]\nfuel = 1\n")

    def test_type_mismatch_names_key(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(text="[episode]\nsteps = soon\n")
        assert "steps" in str(exc.value)

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(text="[episode]\nsteps = 2\nsteps = 3\n")

    def test_cross_field_validation(self):
        with pytest.raises(ConfigError):
            parse_config(text="[oracle_noise]\nconf_min = 0.9\nconf_max = 0.2\n")

    def test_scenario_presets_follow_kind(self):
        cfg, _ = parse_config(text="[scenario]\nkind = full_occlusion\n")
        assert cfg.scenario.cluster_count == 3
        assert cfg.scenario.occluder_density == 0.9

    def test_explicit_clusters_override_preset(self):
        cfg, _ = parse_config(text="[scenario]\nkind = full_occlusion\nclusters = 2\n")
        assert cfg.scenario.cluster_count == 2

    def test_noise_seed_auto_follows_episode_seed(self):
        cfg, _ = parse_config(text="[episode]\nseed = 44\n")
        assert cfg.noise.seed == 44
        cfg2, _ = parse_config(text="[episode]\nseed = 44\n[oracle_noise]\nseed = 9\n")
        assert cfg2.noise.seed == 9

    def test_round_trip_identity(self):
        text = (
            "[scenario]\nkind = single_cluster\nseed = 3\n"
            "[episode]\nplanner = zigzag\nsteps = 5\nseed = 2\n"
            "[planner]\ncandidates = 12\nregion_mode = auto\n"
            "[oracle_noise]\nconf_min = 0.5\nconf_max = 0.8\n"
        )
        cfg, _ = parse_config(text=text)
        dumped = dump_config(cfg)
        cfg2, _ = parse_config(text=dumped)
        assert cfg2 == cfg
        assert dump_config(cfg2) == dumped

    def test_echo_lists_provenance(self):
        _, provenance = parse_config(text="[episode]\nsteps = 4\n")
        echo = echo_config(provenance)
        assert "steps = 4  (file)" in echo
        assert "(default)" in echo


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "avbench.cli", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        env={**os.environ, "PYTHONPATH": os.path.join(os.path.dirname(__file__), "..", "src")},
    )


class TestCli:
    def test_scene_gen_and_stats(self, tmp_path):
        out = tmp_path / "scene.scene"
        r = run_cli("scene", "gen", "--kind", "single_cluster", "--seed", "7", "--out", str(out))
        assert r.returncode == 0, r.stderr
        scene = load_scene(out.read_bytes())
        assert scene.fruit_cluster_count == 1
        r2 = run_cli("scene", "stats", str(out))
        assert r2.returncode == 0
        assert "fruit_clusters: 1" in r2.stdout

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[episode]\nsteps = 0\n")
        r = run_cli("run", "--config", str(bad))
        assert r.returncode == 1
        assert "config error" in r.stderr

    def test_generation_error_exit_code(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text("[scenario]\nkind = single_cluster\nclusters = 500\n")
        r = run_cli("run", "--config", str(cfg))
        assert r.returncode == 3

    def test_transport_error_exit_code(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        cfg.write_text(
            "[scenario]\nkind = single_cluster\n[episode]\nsteps = 1\ntimeout_s = 1.0\n"
        )
        r = run_cli("run", "--config", str(cfg), "--endpoint", "127.0.0.1:1", "--quiet")
        assert r.returncode == 2

    def test_run_and_replay(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        out = tmp_path / "ep"
        scene_file = tmp_path / "s.scene"
        cfg.write_text(
            "[scenario]\nkind = single_cluster\nseed = 7\n"
            f"[episode]\nsteps = 2\nout = {out}\n"
            "[planner]\ncandidates = 6\n"
        )
        r = run_cli("run", "--config", str(cfg), "--quiet")
        assert r.returncode == 0, r.stderr
        assert (out / "metrics.csv").exists()
        run_cli("scene", "gen", "--kind", "single_cluster", "--seed", "7", "--out", str(scene_file))
        r2 = run_cli("replay", "--map", str(out / "map.dump"), "--scene", str(scene_file))
        assert r2.returncode == 0, r2.stderr
        assert "f1=" in r2.stdout

    def test_run_dump_images(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        out = tmp_path / "ep"
        cfg.write_text(
            "[scenario]\nkind = single_cluster\nseed = 7\n"
            f"[episode]\nsteps = 2\nout = {out}\n"
            "[planner]\ncandidates = 6\n"
        )
        r = run_cli("run", "--config", str(cfg), "--quiet", "--dump-images")
        assert r.returncode == 0, r.stderr
        assert (out / "depth_01.pgm").exists()
        assert (out / "labels_02.ppm").exists()

    def test_compare_writes_summary(self, tmp_path):
        cfg = tmp_path / "cfg.ini"
        out = tmp_path / "cmp"
        cfg.write_text(
            "[scenario]\nkind = single_cluster\nseed = 7\n"
            "[episode]\nsteps = 2\n"
            "[planner]\ncandidates = 6\n"
        )
        r = run_cli("compare", "--config", str(cfg), "--out", str(out))
        assert r.returncode == 0, r.stderr
        summary = (out / "summary.csv").read_text().splitlines()
        assert summary[0] == "planner,final_f1,clusters_found,total_fruit"
        assert summary[1].startswith("nbv,")
        assert summary[2].startswith("zigzag,")
        assert (out / "nbv" / "metrics.csv").exists()
        assert (out / "zigzag" / "metrics.csv").exists()
