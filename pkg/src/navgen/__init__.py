"""Synthetic navigation-graph and instruction-trajectory dataset generation."""
from __future__ import annotations

from .config import ConfigError, PipelineConfig, load_config, parse_config
from .datastore import (
    DatasetShard,
    Episode,
    ShardError,
    Split,
    dataset_stats,
    load_shard,
    read_shard,
    split_scenes,
    write_shard,
)
from .envworld import (
    FREE,
    OBSTACLE,
    UNREACHABLE,
    FloorplanSpec,
    OccupancyGrid,
    Point2D,
    generate_floorplan,
    geodesic_distance,
    line_traversable,
    navigable_area,
    sample_navigable_points,
)
from .graphbuild import (
    EdgeOrigin,
    GraphQualityReport,
    NavEdge,
    NavGraph,
    UnfixableGraphError,
    Viewpoint,
    build_navgraph,
    build_rough_graph,
    cluster_viewpoints,
    quality_report,
    refine_graph,
)
from .instructgen import InstructionRecord, bleu4, corpus_bleu4, generate_instruction
from .naveval import AgentRun, EvalResult, aggregate, evaluate_run, noisy_follower, oracle_follower
from .pipeline import pipeline_run
from .render import render_svg
from .trajsample import (
    ObjectAnnotation,
    Trajectory,
    TrajectoryStyle,
    enumerate_object_paths,
    enumerate_r2r_paths,
    place_objects,
    shortest_path,
)

__version__ = "0.1.0"
