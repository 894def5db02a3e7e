"""End-to-end dataset generation: floorplan -> graph -> trajectories -> instructions -> shards."""
from __future__ import annotations

import json
import logging
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from itertools import chain
from pathlib import Path

from .config import PipelineConfig
from .datastore import (
    EpisodeBuffer,
    ShardWriter,
    Split,
    assign_split,
    dumps_episode,
    make_episode,
    split_scenes,
)
from .envworld import FloorplanSpec, generate_floorplan, save_grid
from .graphbuild import GraphParams, build_navgraph, quality_report, save_graph
from .instructgen import SPEAKERS, TurnBands
from .rng import derive_seed
from .trajsample import PathIndex, iter_object_paths, iter_r2r_paths, place_objects, save_objects

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
# published full-scale run (scenes, instruction-trajectory pairs); only used for the manifest projection
REFERENCE_SCENES = 1291
REFERENCE_PAIRS = 4_941_710
# records start with '{"episode_id":"<16 hex>"'
_ID_START = len('{"episode_id":"')


def scene_ids(config: PipelineConfig) -> list[str]:
    return [f"scene-{k:04d}" for k in range(1, config.scene_count + 1)]


def scene_seed(config: PipelineConfig, scene_id: str) -> int:
    return derive_seed(config.seed, "scene", scene_id)


def floorplan_spec(config: PipelineConfig, scene_id: str) -> FloorplanSpec:
    return FloorplanSpec(
        width_m=config.scene_width,
        height_m=config.scene_height,
        room_count=(config.room_count_min, config.room_count_max),
        corridor_width=(config.corridor_width_min, config.corridor_width_max),
        obstacle_density=config.obstacle_density,
        seed=scene_seed(config, scene_id),
        resolution=config.resolution,
        clearance=config.clearance,
        scene_id=scene_id,
    )


def graph_params(config: PipelineConfig) -> GraphParams:
    return GraphParams(
        config.min_geo_sep, config.cluster_threshold, config.max_edge, config.max_degree, config.clearance
    )


def build_scene(config: PipelineConfig, scene_id: str):
    """Grid, refined graph, quality report and objects for one scene."""
    seed = scene_seed(config, scene_id)
    grid = generate_floorplan(floorplan_spec(config, scene_id))
    graph, _ = build_navgraph(grid, seed, graph_params(config))
    report = quality_report(graph, grid, config.clearance)
    objects = place_objects(grid, graph, config.object_count, seed, config.object_max_dist)
    return grid, graph, report, objects


def _part_path(parts: Path, scene_id: str, split: Split) -> Path:
    return parts / f"{scene_id}.{split.value}.part"


def process_scene(config: PipelineConfig, scene_id: str, unseen: bool, out_dir: str) -> dict:
    """Run one scene and stream its episodes into per-split part files.

    Failures are caught and reported in the returned manifest entry.
    """
    out = Path(out_dir)
    parts = out / ".parts"
    entry = {"scene_id": scene_id, "split": "VAL_UNSEEN" if unseen else "SEEN", "status": "ok"}
    timings = {}
    files = {}
    try:
        t0 = time.perf_counter()
        grid, graph, report, objects = build_scene(config, scene_id)
        timings["graph_s"] = time.perf_counter() - t0
        scenes = out / "scenes"
        save_grid(grid, scenes / f"{scene_id}.grid")
        save_graph(graph, scenes / f"{scene_id}.graph")
        save_objects(scene_id, objects, scenes / f"{scene_id}.objects")

        t0 = time.perf_counter()
        seed = scene_seed(config, scene_id)
        instr_seed = derive_seed(seed, "instructions")
        speaker = SPEAKERS[config.speaker](TurnBands(config.straight_band, config.around_band), config.object_max_dist)
        index = PathIndex(graph)
        cap = config.per_scene_cap or None
        trajectories = chain(
            iter_r2r_paths(graph, config.min_intermediate, config.max_intermediate, cap, seed, index),
            iter_object_paths(
                graph, objects, config.object_min_edges, config.object_max_edges, seed,
                config.per_object_cap or None, index,
            ),
        )
        yields = {"R2R_STYLE": 0, "REVERIE_STYLE": 0, "TRAIN": 0, "VAL_SEEN": 0, "VAL_UNSEEN": 0}

        def sink(batch):
            for ep in batch:
                f = files.get(ep.split)
                if f is None:
                    f = files[ep.split] = open(_part_path(parts, scene_id, ep.split), "w", encoding="utf-8")
                f.write(dumps_episode(ep) + "\n")

        buffer = EpisodeBuffer(config.buffer_window, sink)
        for traj in trajectories:
            instr = speaker(graph, traj, instr_seed, objects)
            ep = make_episode(traj, instr, instr_seed)
            split = assign_split(ep.episode_id, unseen, config.val_seen_ratio)
            ep = replace(ep, split=split)
            buffer.add(ep)
            yields[traj.style.value] += 1
            yields[split.value] += 1
        buffer.flush()
        timings["episodes_s"] = time.perf_counter() - t0
        entry.update(
            quality=asdict(report),
            objects={"placed": len(objects), "eligible": sum(o.eligible for o in objects)},
            yields=yields,
            episodes=buffer.total,
            buffer_peak=buffer.peak,
        )
    except Exception as exc:  # isolate per-scene failures
        log.exception("scene %s failed", scene_id)
        entry.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        for f in files.values():
            f.close()
        for split in Split:
            _part_path(parts, scene_id, split).unlink(missing_ok=True)
        files = {}
    finally:
        for f in files.values():
            f.close()
    entry["timings"] = timings
    return entry


def strip_timings(obj):
    """Copy of a manifest with every ``timings`` field removed."""
    if isinstance(obj, dict):
        return {k: strip_timings(v) for k, v in obj.items() if k != "timings"}
    if isinstance(obj, list):
        return [strip_timings(v) for v in obj]
    return obj


def pipeline_run(config: PipelineConfig, out_dir, workers: int = 1) -> dict:
    """Generate the full dataset under ``out_dir`` and return the manifest.

    Layout: ``scenes/`` (grid, graph, objects per scene), ``shards/``
    (``<split>-NNNNN.shard``) and ``manifest.json``.
    """
    config.validate()
    t_start = time.perf_counter()
    out = Path(out_dir)
    parts = out / ".parts"
    shutil.rmtree(parts, ignore_errors=True)
    shutil.rmtree(out / "shards", ignore_errors=True)
    parts.mkdir(parents=True)
    (out / "scenes").mkdir(parents=True, exist_ok=True)

    ids = scene_ids(config)
    seen, unseen = split_scenes(ids, config.ratio_unseen, config.seed)
    unseen_set = set(unseen)
    args = [(config, sid, sid in unseen_set, str(out)) for sid in ids]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(process_scene, *zip(*args)))
    else:
        entries = [process_scene(*a) for a in args]

    t0 = time.perf_counter()
    shards = []
    seen_ids: set[str] = set()
    for split in Split:
        writer, k = None, 0
        for sid in ids:
            part = _part_path(parts, sid, split)
            if not part.exists():
                continue
            with open(part, encoding="utf-8") as fh:
                for line in fh:
                    eid = line[_ID_START:_ID_START + 16]
                    if eid in seen_ids:
                        raise RuntimeError(f"episode id collision: {eid}")
                    seen_ids.add(eid)
                    if writer is None:
                        name = f"{split.value.lower()}-{k:05d}.shard"
                        writer = ShardWriter(out / "shards" / name, config.digest, config.seed, split.value)
                    writer.write_line(line.rstrip("\n"), sid)
                    if writer.count >= config.records_per_shard:
                        shards.append(writer.close())
                        writer, k = None, k + 1
        if writer is not None:
            shards.append(writer.close())
    shutil.rmtree(parts, ignore_errors=True)

    ok = [e for e in entries if e["status"] == "ok"]
    total = sum(e["episodes"] for e in ok)
    per_scene = total / len(ok) if ok else 0.0
    manifest = {
        "format_version": MANIFEST_VERSION,
        "config_digest": config.digest,
        "config": config.to_text(),
        "seed": config.seed,
        "splits": {"seen": seen, "unseen": unseen},
        "scenes": entries,
        "shards": [
            {"file": f"shards/{s.path.name}", "split": s.split, "count": s.count, "scene_ids": list(s.scene_ids)}
            for s in shards
        ],
        "totals": {
            "scenes_ok": len(ok),
            "scenes_failed": len(entries) - len(ok),
            "episodes": total,
            "episodes_per_scene": per_scene,
        },
        "extrapolation": {
            "reference_scenes": REFERENCE_SCENES,
            "reference_pairs": REFERENCE_PAIRS,
            "linear_projection": per_scene * REFERENCE_SCENES,
        },
        "failures": [{"scene_id": e["scene_id"], "error": e["error"]} for e in entries if e["status"] != "ok"],
        "timings": {"total_s": time.perf_counter() - t_start, "shards_s": time.perf_counter() - t0},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest
