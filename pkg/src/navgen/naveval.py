"""Navigation metrics (TL, NE, SR, OSR, SPL, nDTW, GP, RGS, RGSPL) and scripted agents."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import kernels
from .envworld import OccupancyGrid, OnObstacleError, Point2D
from .graphbuild import NavGraph
from .rng import make_rng
from .trajsample import PathIndex, Trajectory, TrajectoryStyle

SUCCESS_RADIUS = 3.0

# fixed column order of per-episode tables
METRIC_COLUMNS = ("TL", "NE", "OSR", "SR", "SPL", "nDTW", "GP", "RGS", "RGSPL")


class EvaluationError(ValueError):
    """Corrupt episode/run pair, e.g. a position with no geodesic route to the goal."""


@dataclass(frozen=True)
class AgentRun:
    episode_id: str
    positions: tuple[Point2D, ...]
    object_id: int | None = None

    def __post_init__(self):
        if not self.positions:
            raise ValueError("a run needs at least one position")
        object.__setattr__(self, "positions", tuple(Point2D(float(x), float(y)) for x, y in self.positions))


@dataclass(frozen=True)
class EvalResult:
    episode_id: str
    TL: float
    NE: float
    OSR: float
    SR: float
    SPL: float
    nDTW: float
    GP: float
    RGS: float | None = None
    RGSPL: float | None = None
    shortest: float = 0.0  # geodesic start -> goal

    def row(self) -> dict:
        return asdict(self)


def _trajectory(episode) -> Trajectory:
    return episode.trajectory if hasattr(episode, "trajectory") else episode


def _episode_id(episode) -> str:
    return getattr(episode, "episode_id", "")


class Evaluator:
    """Scores runs on one scene, caching goal/reference distance fields."""

    def __init__(self, grid: OccupancyGrid, graph: NavGraph, success_radius: float = SUCCESS_RADIUS):
        self.grid = grid
        self.graph = graph
        self.success_radius = success_radius
        self._fields: dict[tuple[int, int], np.ndarray] = {}

    def _cell(self, p):
        r, c = self.grid.cell_of(p)
        if not self.grid.free[r, c]:
            raise OnObstacleError(f"position {tuple(p)} is on an obstacle")
        return r, c

    def field(self, p) -> np.ndarray:
        cell = self._cell(p)
        f = self._fields.get(cell)
        if f is None:
            dist, _ = kernels.distance_field(self.grid.free.view(np.uint8), [cell[0]], [cell[1]])
            f = dist * self.grid.resolution
            if len(self._fields) > 512:
                self._fields.clear()
            self._fields[cell] = f
        return f

    def geodesic(self, a, b) -> float:
        return float(self.field(b)[self._cell(a)])

    def evaluate(self, episode, run: AgentRun) -> EvalResult:
        traj = _trajectory(episode)
        if len(self.graph) and traj.scene_id != self.graph.scene_id:
            raise EvaluationError("episode and graph belong to different scenes")
        gt = [Point2D(*self.graph.positions[i]) for i in traj.node_ids]
        visited = run.positions
        r = self.success_radius

        to_goal = self.field(gt[-1])
        d_goal = np.array([to_goal[self._cell(p)] for p in visited])
        shortest = float(to_goal[self._cell(gt[0])])
        if not (np.all(np.isfinite(d_goal)) and math.isfinite(shortest)):
            raise EvaluationError(f"episode {_episode_id(episode)}: goal unreachable from a visited position")

        pts = np.asarray(visited)
        tl = float(np.sum(np.hypot(*np.diff(pts, axis=0).T))) if len(pts) > 1 else 0.0
        ne = float(d_goal[-1])
        sr = 1.0 if ne <= r else 0.0
        osr = 1.0 if np.any(d_goal <= r) else 0.0
        spl = sr * shortest / max(tl, shortest) if max(tl, shortest) > 0 else sr

        cost = np.empty((len(visited), len(gt)))
        for j, g in enumerate(gt):
            f = self.field(g)
            cost[:, j] = [f[self._cell(p)] for p in visited]
        if not np.all(np.isfinite(cost)):
            raise EvaluationError(f"episode {_episode_id(episode)}: run leaves the reference's component")
        ndtw = math.exp(-kernels.dtw_distance(cost) / (len(gt) * r))
        gp = shortest - ne

        rgs = rgspl = None
        if traj.style is TrajectoryStyle.REVERIE_STYLE or traj.target_object is not None:
            hit = 1.0 if run.object_id is not None and run.object_id == traj.target_object else 0.0
            rgs = sr * hit
            rgspl = rgs * shortest / max(tl, shortest) if max(tl, shortest) > 0 else rgs
        return EvalResult(_episode_id(episode), tl, ne, osr, sr, spl, ndtw, gp, rgs, rgspl, shortest)


def evaluate_run(episode, run: AgentRun, grid: OccupancyGrid, graph: NavGraph, success_radius: float = SUCCESS_RADIUS):
    return Evaluator(grid, graph, success_radius).evaluate(episode, run)


def aggregate(results: Sequence[EvalResult]) -> EvalResult:
    """Field-wise arithmetic means; grounding metrics averaged over episodes that define them."""
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    means = {}
    for f in fields(EvalResult):
        if f.name == "episode_id":
            continue
        vals = [getattr(r, f.name) for r in results if getattr(r, f.name) is not None]
        means[f.name] = float(np.mean(vals)) if vals else None
    return EvalResult("MEAN", **means)


def oracle_follower(episode, graph: NavGraph) -> AgentRun:
    traj = _trajectory(episode)
    return AgentRun(
        _episode_id(episode), tuple(Point2D(*graph.positions[i]) for i in traj.node_ids), traj.target_object
    )


def noisy_follower(episode, graph: NavGraph, p_wrong: float, seed: int, index: PathIndex | None = None) -> AgentRun:
    """Follow the reference, diverting to a random other neighbor with probability ``p_wrong``.

    After the first diversion the agent heads for the goal along canonical
    shortest paths. Random draws are consumed identically for every
    ``p_wrong``, so runs with the same seed are coupled. The walk is cut off
    at three times the reference node count. Like the oracle, it names the
    episode's target object, so grounding succeeds exactly when navigation does.
    """
    if not 0.0 <= p_wrong <= 1.0:
        raise ValueError("p_wrong must lie in [0, 1]")
    traj = _trajectory(episode)
    gt = list(traj.node_ids)
    goal = gt[-1]
    index = index or PathIndex(graph)
    rng = make_rng(seed, "noisy-follower", traj.scene_id, *gt)
    limit = 3 * len(gt)
    cur, i, on_ref = gt[0], 0, True
    visited = [cur]
    while cur != goal and len(visited) < limit:
        planned = gt[i + 1] if on_ref else int(index.next_hop[cur, goal])
        u = rng.random()
        k = int(rng.integers(1 << 30))
        others = [v for v in graph.neighbors(cur) if v != planned]
        if u < p_wrong and others:
            cur = others[k % len(others)]
            on_ref = False
        else:
            cur = planned
            if on_ref:
                i += 1
        visited.append(cur)
    return AgentRun(
        _episode_id(episode), tuple(Point2D(*graph.positions[v]) for v in visited), traj.target_object
    )


def format_results(results: Sequence[EvalResult], mean: EvalResult | None = None) -> str:
    """Tab-separated table, one row per episode plus a trailing MEAN row."""

    def fmt(v):
        return "-" if v is None else f"{v:.6f}"

    lines = ["\t".join(("episode_id",) + METRIC_COLUMNS)]
    rows = list(results) + ([mean] if mean is not None else [])
    for r in rows:
        lines.append("\t".join([r.episode_id] + [fmt(getattr(r, c)) for c in METRIC_COLUMNS]))
    return "\n".join(lines) + "\n"
