"""Trajectory enumeration over navigation graphs.

Every trajectory is the *canonical* shortest path between its endpoints:
minimum total edge length, ties broken by the lexicographically smallest
node-id sequence. Routes are directed, so (a, b) and (b, a) are distinct.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import kernels
from .envworld import OccupancyGrid, Point2D, segments_traversable
from .graphbuild import NavGraph
from .rng import make_rng

PATH_TOL = 1e-9
OBJECT_MAX_DIST = 3.0

OBJECT_LABELS = (
    "sofa", "table", "chair", "bed", "cabinet", "plant", "lamp", "television",
    "sink", "shelf", "desk", "mirror", "painting", "refrigerator", "stool",
    "toilet", "bathtub", "counter", "fireplace", "piano",
)

OBJECTS_FORMAT = "navgen-objects"
OBJECTS_VERSION = 1


class TrajectoryStyle(str, Enum):
    R2R_STYLE = "R2R_STYLE"
    REVERIE_STYLE = "REVERIE_STYLE"


@dataclass(frozen=True)
class Trajectory:
    scene_id: str
    node_ids: tuple[int, ...]
    length: float
    style: TrajectoryStyle = TrajectoryStyle.R2R_STYLE
    target_object: int | None = None

    @property
    def src(self) -> int:
        return self.node_ids[0]

    @property
    def dst(self) -> int:
        return self.node_ids[-1]

    @property
    def edge_count(self) -> int:
        return len(self.node_ids) - 1


@dataclass(frozen=True)
class ObjectAnnotation:
    object_id: int
    label: str
    position: Point2D
    anchor_viewpoint: int
    anchor_distance: float
    eligible: bool


class PathIndex:
    """All-pairs distances plus canonical next hops and hop counts for one graph."""

    def __init__(self, graph: NavGraph):
        self.graph = graph
        n = len(graph)
        indptr, indices, weights = graph.csr()
        if n:
            mat = csr_matrix((weights, indices, indptr), shape=(n, n))
            self.dist = dijkstra(mat, directed=True)
        else:
            self.dist = np.zeros((0, 0))
        self.next_hop = kernels.canonical_next_hops(self.dist, indptr, indices, weights, PATH_TOL)
        self.hops = kernels.hop_counts(self.dist, self.next_hop)

    def nodes(self, src: int, dst: int) -> tuple[int, ...] | None:
        if self.next_hop[src, dst] < 0:
            return None
        path = [src]
        u = src
        while u != dst:
            u = int(self.next_hop[u, dst])
            path.append(u)
        return tuple(path)

    def trajectory(self, src, dst, style=TrajectoryStyle.R2R_STYLE, target_object=None):
        nodes = self.nodes(src, dst)
        if nodes is None:
            return None
        return Trajectory(self.graph.scene_id, nodes, path_length(self.graph, nodes), style, target_object)


def path_length(graph: NavGraph, nodes: Sequence[int]) -> float:
    """Sum of edge lengths in path order."""
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        total += graph.edge_length(a, b)
    return total


def shortest_path(graph: NavGraph, src: int, dst: int, index: PathIndex | None = None) -> Trajectory | None:
    """Canonical shortest route, or ``None`` when ``dst`` is unreachable."""
    n = len(graph)
    if not (0 <= src < n and 0 <= dst < n):
        raise IndexError(f"viewpoint id out of range for {graph.scene_id}")
    index = index or PathIndex(graph)
    return index.trajectory(src, dst)


def _subsample(rng, count, cap):
    if cap is None or cap <= 0 or count <= cap:
        return np.arange(count)
    return np.sort(rng.choice(count, size=cap, replace=False))


def r2r_pairs(index: PathIndex, min_intermediate=3, max_intermediate=5, per_scene_cap=50_000, seed=0):
    """Ordered ``(src, dst)`` arrays of admissible pairs, sorted, cap applied."""
    hops = index.hops
    ok = (hops >= min_intermediate + 1) & (hops <= max_intermediate + 1)
    src, dst = np.nonzero(ok)
    keep = _subsample(make_rng(seed, "r2r-cap", index.graph.scene_id), len(src), per_scene_cap)
    return src[keep], dst[keep]


def iter_r2r_paths(
    graph: NavGraph,
    min_intermediate: int = 3,
    max_intermediate: int = 5,
    per_scene_cap: int | None = 50_000,
    seed: int = 0,
    index: PathIndex | None = None,
) -> Iterator[Trajectory]:
    index = index or PathIndex(graph)
    src, dst = r2r_pairs(index, min_intermediate, max_intermediate, per_scene_cap, seed)
    for s, t in zip(src.tolist(), dst.tolist()):
        yield index.trajectory(s, t)


def enumerate_r2r_paths(graph, min_intermediate=3, max_intermediate=5, per_scene_cap=50_000, seed=0, index=None):
    """Every ordered pair whose canonical path has the given number of intermediate nodes."""
    return list(iter_r2r_paths(graph, min_intermediate, max_intermediate, per_scene_cap, seed, index))


def place_objects(
    grid: OccupancyGrid,
    graph: NavGraph,
    count: int,
    seed: int = 0,
    max_dist: float = OBJECT_MAX_DIST,
) -> list[ObjectAnnotation]:
    """Scatter labelled objects over FREE cells and anchor each to its nearest viewpoint.

    An object is eligible for path sampling when its anchor is within
    ``max_dist`` and has an unobstructed line of sight to it.
    """
    rng = make_rng(seed, "objects", grid.scene_id)
    rows, cols = np.nonzero(grid.free)
    if count <= 0 or rows.size == 0 or len(graph) == 0:
        return []
    picks = rng.choice(rows.size, size=min(count, rows.size), replace=False)
    labels = rng.integers(0, len(OBJECT_LABELS), size=len(picks))
    pos = graph.positions
    out = []
    for oid, (k, lab) in enumerate(zip(picks, labels)):
        p = grid.center_of(int(rows[k]), int(cols[k]))
        d = np.hypot(pos[:, 0] - p.x, pos[:, 1] - p.y)
        anchor = int(np.argmin(d))
        dist = float(d[anchor])
        visible = bool(segments_traversable(grid, [np.r_[pos[anchor], p]], 0.0)[0])
        out.append(ObjectAnnotation(oid, OBJECT_LABELS[int(lab)], p, anchor, dist, dist <= max_dist and visible))
    return out


def iter_object_paths(
    graph: NavGraph,
    objects: Sequence[ObjectAnnotation],
    min_edges: int = 4,
    max_edges: int = 9,
    seed: int = 0,
    per_object_cap: int | None = 200,
    index: PathIndex | None = None,
) -> Iterator[Trajectory]:
    index = index or PathIndex(graph)
    for obj in objects:
        if not obj.eligible:
            continue
        a = obj.anchor_viewpoint
        col = index.hops[:, a]
        starts = np.flatnonzero((col >= min_edges) & (col <= max_edges))
        rng = make_rng(seed, "object-cap", graph.scene_id, obj.object_id)
        for s in starts[_subsample(rng, len(starts), per_object_cap)].tolist():
            yield index.trajectory(s, a, TrajectoryStyle.REVERIE_STYLE, obj.object_id)


def enumerate_object_paths(graph, objects, min_edges=4, max_edges=9, seed=0, per_object_cap=200, index=None):
    """Canonical paths of ``min_edges..max_edges`` edges ending at each eligible object's anchor."""
    return list(iter_object_paths(graph, objects, min_edges, max_edges, seed, per_object_cap, index))


def dumps_objects(scene_id: str, objects: Sequence[ObjectAnnotation]) -> str:
    lines = [f"{OBJECTS_FORMAT} {OBJECTS_VERSION}", f"scene_id {scene_id}", f"objects {len(objects)}"]
    for o in objects:
        lines.append(
            f"o {o.object_id} {o.label} {o.position.x!r} {o.position.y!r} "
            f"{o.anchor_viewpoint} {o.anchor_distance!r} {int(o.eligible)}"
        )
    return "\n".join(lines) + "\n"


def loads_objects(text: str) -> list[ObjectAnnotation]:
    lines = text.splitlines()
    tag = lines[0].split() if lines else []
    if len(tag) != 2 or tag[0] != OBJECTS_FORMAT or int(tag[1]) != OBJECTS_VERSION:
        raise ValueError("not a navgen objects file of a supported version")
    n = int(lines[2].split()[1])
    out = []
    for line in lines[3:3 + n]:
        _, oid, label, x, y, anchor, dist, elig = line.split()
        out.append(ObjectAnnotation(int(oid), label, Point2D(float(x), float(y)), int(anchor), float(dist), elig == "1"))
    if len(out) != n:
        raise ValueError("truncated objects file")
    return out


def save_objects(scene_id, objects, path) -> None:
    Path(path).write_text(dumps_objects(scene_id, objects))


def load_objects(path) -> list[ObjectAnnotation]:
    return loads_objects(Path(path).read_text())
