"""Pipeline configuration: one flat ``key = value`` file holding every threshold.

Lines starting with ``#`` are comments. Unknown keys are rejected. The
digest is SHA-256 over the canonical text (all keys, declaration order,
``repr`` of each value), so it is stable across platforms.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 1
    scene_count: int = 20
    scene_width: float = 14.0
    scene_height: float = 10.0
    room_count_min: int = 4
    room_count_max: int = 8
    corridor_width_min: float = 1.2
    corridor_width_max: float = 1.8
    obstacle_density: float = 0.15
    resolution: float = 0.1
    clearance: float = 0.2
    min_geo_sep: float = 0.4
    cluster_threshold: float = 1.0
    max_edge: float = 5.0
    max_degree: int = 5
    min_intermediate: int = 3
    max_intermediate: int = 5
    object_count: int = 12
    object_min_edges: int = 4
    object_max_edges: int = 9
    object_max_dist: float = 3.0
    success_radius: float = 3.0
    per_scene_cap: int = 50_000
    per_object_cap: int = 200
    ratio_unseen: float = 0.2
    val_seen_ratio: float = 0.05
    straight_band: float = 30.0
    around_band: float = 135.0
    speaker: str = "template-v1"
    buffer_window: int = 4096
    records_per_shard: int = 100_000

    def validate(self) -> "PipelineConfig":
        positive = (
            "scene_count", "scene_width", "scene_height", "resolution", "min_geo_sep",
            "cluster_threshold", "max_edge", "max_degree", "success_radius",
            "object_max_dist", "buffer_window", "records_per_shard",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        checks = [
            (self.clearance >= 0, "clearance must be >= 0"),
            (1 <= self.room_count_min <= self.room_count_max, "room counts must satisfy 1 <= min <= max"),
            (0 < self.corridor_width_min <= self.corridor_width_max, "corridor widths must satisfy 0 < min <= max"),
            (self.corridor_width_min >= 2 * self.clearance, "corridor_width_min must be >= 2 * clearance"),
            (0 <= self.obstacle_density < 0.6, "obstacle_density must lie in [0, 0.6)"),
            (0 <= self.min_intermediate <= self.max_intermediate, "intermediate bounds out of order"),
            (1 <= self.object_min_edges <= self.object_max_edges, "object edge bounds out of order"),
            (self.object_count >= 0, "object_count must be >= 0"),
            (self.per_scene_cap >= 0 and self.per_object_cap >= 0, "caps must be >= 0 (0 disables)"),
            (0 < self.ratio_unseen < 1, "ratio_unseen must lie in (0, 1)"),
            (0 <= self.val_seen_ratio < 1, "val_seen_ratio must lie in [0, 1)"),
            (0 <= self.straight_band < self.around_band <= 180, "turn bands must satisfy 0 <= straight < around <= 180"),
            (self.scene_count >= 2, "need at least 2 scenes for a seen/unseen split"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        from .instructgen import SPEAKERS

        if self.speaker not in SPEAKERS:
            raise ConfigError(f"unknown speaker {self.speaker!r}")
        return self

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self)).replace("'", "")

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = _TYPES[key]
        try:
            if kind == "int":
                values[key] = int(value.replace("_", ""))
            elif kind == "float":
                values[key] = float(value)
            else:
                values[key] = value.strip("\"'")
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    return replace(base or PipelineConfig(), **values).validate()


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)
