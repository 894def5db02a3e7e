"""Command-line entry point: ``navgen <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (``key = value`` lines), ``--seed``
and ``--out``. Exit codes: 0 success, 2 configuration error, 3 data error,
4 partial scene failures (``run`` only; the manifest is still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config
from .datastore import ShardError, dataset_stats, format_stats, make_episode, read_shard, write_shard
from .envworld import FloorplanError, GridError, generate_floorplan, load_grid, navigable_area, save_grid
from .graphbuild import UnfixableGraphError, build_navgraph, format_quality_table, load_graph, quality_report, save_graph
from .instructgen import SPEAKERS, TurnBands, bleu4, corpus_bleu4
from .naveval import AgentRun, EvaluationError, Evaluator, aggregate, format_results, noisy_follower, oracle_follower
from .pipeline import graph_params, pipeline_run
from .render import render_svg
from .trajsample import PathIndex, iter_object_paths, iter_r2r_paths, load_objects, place_objects, save_objects

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("navgen")


class DataError(Exception):
    pass


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    return cfg.with_overrides(seed=args.seed).validate()


def _out(args, default: str) -> Path:
    path = Path(args.out or default)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_gen_env(args, cfg):
    from .pipeline import floorplan_spec

    spec = floorplan_spec(cfg, args.scene_id or f"scene-{cfg.seed}")
    grid = generate_floorplan(replace(spec, seed=cfg.seed))
    path = _out(args, f"{grid.scene_id}.grid")
    save_grid(grid, path)
    print(f"{grid.scene_id}: {grid.width}x{grid.height} cells, navigable {navigable_area(grid):.1f} m2 -> {path}")


def cmd_build_graph(args, cfg):
    grid = load_grid(args.grid)
    graph, rough = build_navgraph(grid, cfg.seed, graph_params(cfg))
    path = _out(args, f"{grid.scene_id}.graph")
    save_graph(graph, path)
    if args.rough_out:
        save_graph(rough, args.rough_out)
    rows = [("rough", quality_report(rough, grid, cfg.clearance)), ("refined", quality_report(graph, grid, cfg.clearance))]
    print(format_quality_table(rows), end="")


def cmd_sample_traj(args, cfg):
    grid, graph = load_grid(args.grid), load_graph(args.graph)
    if args.objects and Path(args.objects).exists():
        objects = load_objects(args.objects)
    else:
        objects = place_objects(grid, graph, cfg.object_count, cfg.seed, cfg.object_max_dist)
        if args.objects:
            save_objects(graph.scene_id, objects, args.objects)
    index = PathIndex(graph)
    trajs = list(
        iter_r2r_paths(graph, cfg.min_intermediate, cfg.max_intermediate, cfg.per_scene_cap or None, cfg.seed, index)
    )
    trajs += iter_object_paths(
        graph, objects, cfg.object_min_edges, cfg.object_max_edges, cfg.seed, cfg.per_object_cap or None, index
    )
    shard = write_shard((make_episode(t, None, cfg.seed) for t in trajs), cfg, _out(args, f"{graph.scene_id}.traj.shard"))
    print(f"{shard.count} trajectories -> {shard.path}")


def cmd_gen_instr(args, cfg):
    graph = load_graph(args.graph)
    objects = load_objects(args.objects) if args.objects else []
    speaker = SPEAKERS[cfg.speaker](TurnBands(cfg.straight_band, cfg.around_band), cfg.object_max_dist)
    episodes = []
    for ep in read_shard(args.shard):
        instr = speaker(graph, ep.trajectory, cfg.seed, objects)
        episodes.append(make_episode(ep.trajectory, instr, cfg.seed, ep.split))
    shard = write_shard(episodes, cfg, _out(args, f"{graph.scene_id}.shard"))
    print(f"{shard.count} instructions -> {shard.path}")


def _load_runs(path) -> dict[str, AgentRun]:
    runs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                runs[rec["episode_id"]] = AgentRun(rec["episode_id"], tuple(map(tuple, rec["positions"])), rec.get("object_id"))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad run record ({exc})") from None
    return runs


def cmd_evaluate(args, cfg):
    grid, graph = load_grid(args.grid), load_graph(args.graph)
    episodes = [ep for ep in read_shard(args.shard) if ep.trajectory.scene_id == graph.scene_id]
    runs = _load_runs(args.runs) if args.runs else None
    index = PathIndex(graph)
    ev = Evaluator(grid, graph, cfg.success_radius)
    results = []
    for ep in episodes:
        if runs is not None:
            if ep.episode_id not in runs:
                continue
            run = runs[ep.episode_id]
        elif args.agent == "noisy":
            run = noisy_follower(ep, graph, args.p_wrong, cfg.seed, index)
        else:
            run = oracle_follower(ep, graph)
        results.append(ev.evaluate(ep, run))
    if not results:
        raise DataError("no episode matched a run")
    text = format_results(results, aggregate(results))
    if args.out:
        _out(args, "").write_text(text)
    else:
        sys.stdout.write(text)


def cmd_stats(args, cfg):
    paths = [Path(p) for p in args.shards]
    manifest = None
    if args.dataset:
        root = Path(args.dataset)
        mpath = root / "manifest.json"
        if mpath.exists():
            manifest = json.loads(mpath.read_text())
        paths += sorted((root / "shards").glob("*.shard"))
    if not paths:
        raise DataError("no shards given")
    report = dataset_stats(paths, manifest)
    text = json.dumps(report, indent=1) + "\n" if args.json else format_stats(report)
    if args.out:
        _out(args, "").write_text(text)
    else:
        sys.stdout.write(text)


def cmd_render(args, cfg):
    grid = load_grid(args.grid)
    graph = load_graph(args.graph) if args.graph else None
    trajs = []
    if args.shard:
        trajs = [ep.trajectory for ep in read_shard(args.shard)[: args.limit]]
    path = _out(args, f"{grid.scene_id}.svg")
    render_svg(grid, graph, trajs, path)
    print(f"-> {path}")


def cmd_run(args, cfg):
    manifest = pipeline_run(cfg, args.out or "navgen-out", args.workers)
    t = manifest["totals"]
    print(
        f"{t['episodes']} episodes from {t['scenes_ok']} scenes "
        f"({t['episodes_per_scene']:.1f}/scene), {t['scenes_failed']} failed"
    )
    return EXIT_PARTIAL if t["scenes_failed"] else EXIT_OK


def _sentences(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.lower().split() for line in fh if line.strip()]


def cmd_bleu(args, cfg):
    cands = _sentences(args.candidates)
    refs = [_sentences(p) for p in args.references]
    if any(len(r) != len(cands) for r in refs):
        raise DataError("every reference file needs one line per candidate")
    per_sentence = list(zip(*refs))
    smooth = not args.no_smooth
    lines = [f"{k}\t{bleu4(c, list(r), smooth).value:.6f}" for k, (c, r) in enumerate(zip(cands, per_sentence))]
    score = corpus_bleu4(cands, [list(r) for r in per_sentence], smooth)
    lines.append(
        f"corpus\t{score.value:.6f}\tBP {score.brevity_penalty:.6f}\t"
        + " ".join(f"p{n}={p:.4f}" for n, p in enumerate(score.precisions, 1))
    )
    sys.stdout.write("\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output path")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="navgen", description="Synthetic navigation-graph and instruction dataset generator.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-env", parents=[common], help="generate a floorplan grid")
    s.add_argument("--scene-id")
    s.set_defaults(func=cmd_gen_env)

    s = sub.add_parser("build-graph", parents=[common], help="build a navigation graph for a grid")
    s.add_argument("--grid", required=True)
    s.add_argument("--rough-out", help="also save the pre-refinement graph")
    s.set_defaults(func=cmd_build_graph)

    s = sub.add_parser("sample-traj", parents=[common], help="sample R2R- and REVERIE-style trajectories")
    s.add_argument("--grid", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--objects", help="objects file; created if missing")
    s.set_defaults(func=cmd_sample_traj)

    s = sub.add_parser("gen-instr", parents=[common], help="attach speaker instructions to a trajectory shard")
    s.add_argument("--graph", required=True)
    s.add_argument("--shard", required=True)
    s.add_argument("--objects")
    s.set_defaults(func=cmd_gen_instr)

    s = sub.add_parser("evaluate", parents=[common], help="score agent runs against episodes")
    s.add_argument("--grid", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--shard", required=True)
    s.add_argument("--runs", help="JSONL of {episode_id, positions, object_id}")
    s.add_argument("--agent", choices=("oracle", "noisy"), default="oracle", help="scripted agent when --runs is absent")
    s.add_argument("--p-wrong", type=float, default=0.25)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stats", parents=[common], help="summarize shards or a dataset directory")
    s.add_argument("shards", nargs="*")
    s.add_argument("--dataset", help="pipeline output directory")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("render", parents=[common], help="render a scene as SVG")
    s.add_argument("--grid", required=True)
    s.add_argument("--graph")
    s.add_argument("--shard", help="highlight trajectories from this shard")
    s.add_argument("--limit", type=int, default=3)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("run", parents=[common], help="run the full pipeline")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("bleu", parents=[common], help="sentence and corpus BLEU-4 from line-aligned text files")
    s.add_argument("--candidates", required=True, help="one tokenized sentence per line")
    s.add_argument("--references", action="append", required=True, help="repeatable; line-aligned with candidates")
    s.add_argument("--no-smooth", action="store_true")
    s.set_defaults(func=cmd_bleu)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, cfg) or EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ShardError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DataError, GridError, FloorplanError, EvaluationError, UnfixableGraphError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
