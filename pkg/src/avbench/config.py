"""Run configuration files.

Line-oriented INI-style text: `[section]` headers and `key = value`
pairs, `#` comments, UTF-8. Every key has a documented default; unknown
sections or keys are rejected with the offending line number. Dumping a
resolved config and re-parsing it yields an identical config.
"""

from __future__ import annotations

from dataclasses import dataclass

from .episode import EpisodeConfig
from .geometry import CameraIntrinsics
from .oracle import OracleNoiseConfig
from .planning import PlannerConfig, ZigzagConfig
from .scene import SCENARIO_KINDS, ScenarioSpec


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _int(v: str) -> int:
    return int(v, 10)


def _float(v: str) -> float:
    return float(v)


def _floats(n):
    def conv(v: str):
        parts = v.split()
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers")
        return tuple(float(p) for p in parts)

    return conv


def _choice(*options):
    def conv(v: str):
        if v not in options:
            raise ValueError(f"expected one of {options}")
        return v

    return conv


def _int_or_auto(v: str):
    return "auto" if v == "auto" else int(v, 10)


def _float_or_auto(v: str):
    return "auto" if v == "auto" else float(v)


def _box_or_scene(v: str):
    if v == "scene":
        return "scene"
    vals = _floats(6)(v)
    return (vals[:3], vals[3:])


# (converter, default, validator or None)
_pos = ("must be > 0", lambda x: x > 0)
_nonneg = ("must be >= 0", lambda x: x >= 0)
_unit = ("must be in [0,1]", lambda x: 0.0 <= x <= 1.0)

SCHEMA: dict[str, dict[str, tuple]] = {
    "scenario": {
        "kind": (_choice(*SCENARIO_KINDS), "multiple_clusters", None),
        "seed": (_int, 7, None),
        "width": (_float, 0.8, _pos),
        "depth": (_float, 0.5, _pos),
        "height": (_float, 1.0, _pos),
        "resolution": (_float, 0.02, _pos),
        "clusters": (_int_or_auto, "auto", None),
        "cluster_radius": (_float, 0.05, _pos),
        "fruits_per_cluster": (_int, 4, ("must be >= 1", lambda x: x >= 1)),
        "occluder_density": (_float_or_auto, "auto", None),
    },
    "episode": {
        "planner": (_choice("nbv", "zigzag"), "nbv", None),
        "steps": (_int, 8, ("must be >= 1", lambda x: x >= 1)),
        "seed": (_int, 1, None),
        "start": (_choice("facing", "unoriented"), "facing", None),
        "prompt": (str, "fruit", ("must be non-empty", lambda x: len(x) > 0)),
        "box_threshold": (_float, 0.0, _unit),
        "text_threshold": (_float, 0.0, _unit),
        "cloud_stride": (_int, 1, ("must be >= 1", lambda x: x >= 1)),
        "min_cluster": (_int, 3, ("must be >= 1", lambda x: x >= 1)),
        "early_stop_eps": (_float, 0.0, _nonneg),
        "timeout_s": (_float, 10.0, _pos),
        "out": (str, "", None),
    },
    "planner": {
        "candidates": (_int, 32, ("must be >= 1", lambda x: x >= 1)),
        "radius_min": (_float, 0.4, _pos),
        "radius_max": (_float, 0.8, _pos),
        "azimuth_deg": (_float, 75.0, _nonneg),
        "elev_min_deg": (_float, -10.0, None),
        "elev_max_deg": (_float, 45.0, None),
        "ray_stride": (_int, 4, ("must be >= 1", lambda x: x >= 1)),
        "workspace": (_floats(6), (-1.2, -1.2, 0.0, 1.2, 1.2, 1.8), None),
        "region_mode": (_choice("fixed", "auto"), "fixed", None),
        "region_margin": (_float, 0.10, _nonneg),
        "region_box": (_box_or_scene, "scene", None),
    },
    "zigzag": {
        "columns": (_int, 4, ("must be >= 1", lambda x: x >= 1)),
        "rows": (_int, 2, ("must be >= 1", lambda x: x >= 1)),
        "standoff": (_float, 0.55, _pos),
        "centroid": (_floats(3), (0.0, 0.0, 0.5), None),
        "width": (_float, 0.6, _pos),
        "height": (_float, 0.6, _pos),
    },
    "oracle_noise": {
        "conf_min": (_float, 1.0, _unit),
        "conf_max": (_float, 1.0, _unit),
        "dropout": (_float, 0.0, _unit),
        "erosion_px": (_int, 0, _nonneg),
        "seed": (_int_or_auto, "auto", None),
    },
    "sensor_noise": {
        "sigma": (_float, 0.0, _nonneg),
        "dropout": (_float, 0.0, _unit),
    },
    "camera": {
        "width": (_int, 160, ("must be >= 1", lambda x: x >= 1)),
        "height": (_int, 120, ("must be >= 1", lambda x: x >= 1)),
        "fx": (_float, 120.0, _pos),
        "fy": (_float, 120.0, _pos),
        "cx": (_float, 80.0, None),
        "cy": (_float, 60.0, None),
        "z_near": (_float, 0.1, _pos),
        "z_far": (_float, 2.0, _pos),
    },
}

_PRESET_CLUSTERS = {"full_occlusion": 3, "multiple_clusters": 6, "single_cluster": 1, "unoriented_start": 5}
_PRESET_DENSITY = {"full_occlusion": 0.9, "multiple_clusters": 0.5, "single_cluster": 0.25, "unoriented_start": 0.5}


@dataclass
class ResolvedEntry:
    section: str
    key: str
    value: object
    source: str  # default | file | override


def _parse_text(text: str):
    """Raw (section, key) -> (string value, line number), validating structure."""
    values: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=ln)
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=ln)
        if section is None:
            raise ConfigError("key outside any [section]", line=ln)
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in [{section}]", line=ln)
        if (section, key) in values:
            raise ConfigError(f"duplicate key '{key}' in [{section}]", line=ln)
        values[(section, key)] = (val, ln)
    return values


def _apply_overrides(values, overrides):
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        key, _, val = ov.partition("=")
        key = key.strip()
        val = val.strip()
        if "." in key:
            section, key = key.split(".", 1)
            if section not in SCHEMA or key not in SCHEMA[section]:
                raise ConfigError(f"unknown override key '{section}.{key}'")
        elif key in SCHEMA["episode"]:
            section = "episode"
        else:
            hits = [s for s in SCHEMA if key in SCHEMA[s]]
            if len(hits) != 1:
                raise ConfigError(f"override key '{key}' is {'ambiguous' if hits else 'unknown'}")
            section = hits[0]
        values[(section, key)] = (val, None)
    return values


def parse_config(
    path: str | None = None,
    overrides: list[str] | tuple = (),
    text: str | None = None,
) -> tuple[EpisodeConfig, list[ResolvedEntry]]:
    """Resolve a config file plus inline overrides into an EpisodeConfig.

    Returns the config and a provenance listing (one entry per key,
    flagged default/file/override) for the echo.
    """
    if text is None:
        text = ""
        if path is not None:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
    raw = _apply_overrides(_parse_text(text), list(overrides))

    resolved: dict[tuple[str, str], object] = {}
    provenance: list[ResolvedEntry] = []
    for section, keys in SCHEMA.items():
        for key, (conv, default, check) in keys.items():
            if (section, key) in raw:
                sval, ln = raw[(section, key)]
                try:
                    val = conv(sval)
                except ValueError as e:
                    raise ConfigError(f"[{section}] {key}: {e}", line=ln) from None
                source = "override" if ln is None else "file"
            else:
                val, ln, source = default, None, "default"
            if check is not None and val != "auto":
                msg, ok = check
                if not ok(val):
                    raise ConfigError(f"[{section}] {key}: {msg}", line=ln)
            resolved[(section, key)] = val
            provenance.append(ResolvedEntry(section, key, val, source))

    g = lambda s, k: resolved[(s, k)]

    kind = g("scenario", "kind")
    clusters = g("scenario", "clusters")
    density = g("scenario", "occluder_density")
    try:
        scenario = ScenarioSpec(
            kind=kind,
            seed=g("scenario", "seed"),
            width=g("scenario", "width"),
            depth=g("scenario", "depth"),
            height=g("scenario", "height"),
            resolution=g("scenario", "resolution"),
            cluster_count=_PRESET_CLUSTERS[kind] if clusters == "auto" else clusters,
            cluster_radius=g("scenario", "cluster_radius"),
            fruits_per_cluster=g("scenario", "fruits_per_cluster"),
            occluder_density=_PRESET_DENSITY[kind] if density == "auto" else density,
        )
        planner_cfg = PlannerConfig(
            candidates=g("planner", "candidates"),
            radius_min=g("planner", "radius_min"),
            radius_max=g("planner", "radius_max"),
            azimuth_deg=g("planner", "azimuth_deg"),
            elev_min_deg=g("planner", "elev_min_deg"),
            elev_max_deg=g("planner", "elev_max_deg"),
            workspace=(g("planner", "workspace")[:3], g("planner", "workspace")[3:]),
            ray_stride=g("planner", "ray_stride"),
            max_steps=g("episode", "steps"),
            seed=g("episode", "seed"),
        )
        zigzag_cfg = ZigzagConfig(
            columns=g("zigzag", "columns"),
            rows=g("zigzag", "rows"),
            standoff=g("zigzag", "standoff"),
            centroid=g("zigzag", "centroid"),
            width=g("zigzag", "width"),
            height=g("zigzag", "height"),
        )
        noise_seed = g("oracle_noise", "seed")
        noise = OracleNoiseConfig(
            confidence_range=(g("oracle_noise", "conf_min"), g("oracle_noise", "conf_max")),
            instance_dropout_p=g("oracle_noise", "dropout"),
            erosion_radius=g("oracle_noise", "erosion_px"),
            seed=g("episode", "seed") if noise_seed == "auto" else noise_seed,
        )
        intr = CameraIntrinsics(
            fx=g("camera", "fx"),
            fy=g("camera", "fy"),
            cx=g("camera", "cx"),
            cy=g("camera", "cy"),
            width=g("camera", "width"),
            height=g("camera", "height"),
            z_near=g("camera", "z_near"),
            z_far=g("camera", "z_far"),
        )
        cfg = EpisodeConfig(
            scenario=scenario,
            planner=g("episode", "planner"),
            planner_cfg=planner_cfg,
            zigzag_cfg=zigzag_cfg,
            noise=noise,
            sensor_sigma=g("sensor_noise", "sigma"),
            sensor_dropout=g("sensor_noise", "dropout"),
            start=g("episode", "start"),
            steps=g("episode", "steps"),
            seed=g("episode", "seed"),
            out=g("episode", "out") or None,
            prompt=g("episode", "prompt"),
            box_threshold=g("episode", "box_threshold"),
            text_threshold=g("episode", "text_threshold"),
            intrinsics=intr,
            region_mode=g("planner", "region_mode"),
            region_margin=g("planner", "region_margin"),
            region_box=g("planner", "region_box"),
            cloud_stride=g("episode", "cloud_stride"),
            min_cluster=g("episode", "min_cluster"),
            early_stop_eps=g("episode", "early_stop_eps"),
            timeout_s=g("episode", "timeout_s"),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return cfg, provenance


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(repr(float(v)) for v in value)
    return str(value)


def dump_config(cfg: EpisodeConfig) -> str:
    """Resolved config as file text; parse_config(text=...) reproduces cfg."""
    p, z, n, c, s = cfg.planner_cfg, cfg.zigzag_cfg, cfg.noise, cfg.intrinsics, cfg.scenario
    region_box = (
        "scene" if cfg.region_box == "scene" else _fmt(tuple((*cfg.region_box[0], *cfg.region_box[1])))
    )
    out: dict[str, dict[str, object]] = {
        "scenario": {
            "kind": s.kind, "seed": s.seed, "width": s.width, "depth": s.depth,
            "height": s.height, "resolution": s.resolution, "clusters": s.cluster_count,
            "cluster_radius": s.cluster_radius, "fruits_per_cluster": s.fruits_per_cluster,
            "occluder_density": s.occluder_density,
        },
        "episode": {
            "planner": cfg.planner, "steps": cfg.steps, "seed": cfg.seed, "start": cfg.start,
            "prompt": cfg.prompt, "box_threshold": cfg.box_threshold,
            "text_threshold": cfg.text_threshold, "cloud_stride": cfg.cloud_stride,
            "min_cluster": cfg.min_cluster, "early_stop_eps": cfg.early_stop_eps,
            "timeout_s": cfg.timeout_s, "out": cfg.out or "",
        },
        "planner": {
            "candidates": p.candidates, "radius_min": p.radius_min, "radius_max": p.radius_max,
            "azimuth_deg": p.azimuth_deg, "elev_min_deg": p.elev_min_deg,
            "elev_max_deg": p.elev_max_deg, "ray_stride": p.ray_stride,
            "workspace": tuple((*p.workspace[0], *p.workspace[1])),
            "region_mode": cfg.region_mode, "region_margin": cfg.region_margin,
            "region_box": region_box,
        },
        "zigzag": {
            "columns": z.columns, "rows": z.rows, "standoff": z.standoff,
            "centroid": z.centroid, "width": z.width, "height": z.height,
        },
        "oracle_noise": {
            "conf_min": n.confidence_range[0], "conf_max": n.confidence_range[1],
            "dropout": n.instance_dropout_p, "erosion_px": n.erosion_radius, "seed": n.seed,
        },
        "sensor_noise": {"sigma": cfg.sensor_sigma, "dropout": cfg.sensor_dropout},
        "camera": {
            "width": c.width, "height": c.height, "fx": c.fx, "fy": c.fy,
            "cx": c.cx, "cy": c.cy, "z_near": c.z_near, "z_far": c.z_far,
        },
    }
    lines = []
    for section, keys in out.items():
        lines.append(f"[{section}]")
        for key, value in keys.items():
            if isinstance(value, str) and key == "region_box":
                lines.append(f"{key} = {value}")
            else:
                lines.append(f"{key} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def echo_config(provenance: list[ResolvedEntry]) -> str:
    """Human-readable resolved config with per-key provenance."""
    lines = []
    section = None
    for e in provenance:
        if e.section != section:
            section = e.section
            lines.append(f"[{section}]")
        lines.append(f"  {e.key} = {_fmt(e.value)}  ({e.source})")
    return "\n".join(lines)
