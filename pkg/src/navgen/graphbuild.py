"""Navigation graphs: clustering, rough connection, refinement, quality stats."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .envworld import (
    DEFAULT_CLEARANCE,
    OccupancyGrid,
    OnObstacleError,
    Point2D,
    navigable_area,
    segments_traversable,
)
from .rng import make_rng

GRAPH_FORMAT = "navgen-graph"
GRAPH_VERSION = 1

# tie window for comparing averaged geodesic distances (cell units)
LINKAGE_TOL = 1e-9


class EdgeOrigin(str, Enum):
    ROUGH = "ROUGH"
    REFINEMENT = "REFINEMENT"


class UnfixableGraphError(RuntimeError):
    """FREE space is disconnected, so no traversable edge set can join the graph."""


@dataclass(frozen=True)
class Viewpoint:
    id: int
    position: Point2D
    cluster_size: int = 1


@dataclass(frozen=True)
class NavEdge:
    u: int
    v: int
    length: float
    origin: EdgeOrigin = EdgeOrigin.ROUGH

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError("self-loop")
        if self.u > self.v:
            u, v = self.v, self.u
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "v", v)

    @property
    def key(self) -> tuple[int, int]:
        return self.u, self.v


@dataclass(frozen=True)
class NavGraph:
    scene_id: str
    viewpoints: tuple[Viewpoint, ...]
    edges: tuple[NavEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "viewpoints", tuple(self.viewpoints))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.key)))
        for i, vp in enumerate(self.viewpoints):
            if vp.id != i:
                raise ValueError("viewpoint ids must be contiguous from 0")
        seen = set()
        for e in self.edges:
            if e.v >= len(self.viewpoints):
                raise ValueError(f"edge {e.key} references a missing viewpoint")
            if e.key in seen:
                raise ValueError(f"duplicate edge {e.key}")
            seen.add(e.key)

    def __len__(self):
        return len(self.viewpoints)

    @cached_property
    def adjacency(self) -> list[list[tuple[int, float]]]:
        """Per-node ``(neighbor, length)`` lists sorted by neighbor id."""
        adj: list[list[tuple[int, float]]] = [[] for _ in self.viewpoints]
        for e in self.edges:
            adj[e.u].append((e.v, e.length))
            adj[e.v].append((e.u, e.length))
        for row in adj:
            row.sort()
        return adj

    @cached_property
    def positions(self) -> np.ndarray:
        pos = np.array([vp.position for vp in self.viewpoints], dtype=np.float64)
        return pos.reshape(-1, 2)

    @cached_property
    def edge_lengths(self) -> dict[tuple[int, int], float]:
        return {e.key: e.length for e in self.edges}

    def neighbors(self, u: int) -> list[int]:
        return [v for v, _ in self.adjacency[u]]

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def edge_length(self, u: int, v: int) -> float:
        return self.edge_lengths[(u, v) if u < v else (v, u)]

    def csr(self):
        """``(indptr, indices, weights)`` with ascending neighbor ids per row."""
        indptr = np.zeros(len(self) + 1, np.int64)
        indices, weights = [], []
        for u, row in enumerate(self.adjacency):
            indptr[u + 1] = indptr[u] + len(row)
            for v, w in row:
                indices.append(v)
                weights.append(w)
        return indptr, np.array(indices, np.int64), np.array(weights, np.float64)

    def components(self) -> list[list[int]]:
        """Connected components, each sorted, ordered by smallest member."""
        seen = [False] * len(self)
        comps = []
        for s in range(len(self)):
            if seen[s]:
                continue
            seen[s] = True
            comp, queue = [], deque([s])
            while queue:
                u = queue.popleft()
                comp.append(u)
                for v in self.neighbors(u):
                    if not seen[v]:
                        seen[v] = True
                        queue.append(v)
            comps.append(sorted(comp))
        return comps


@dataclass(frozen=True)
class GraphQualityReport:
    density: float
    collision_ratio: float
    mean_edge_length: float
    mean_degree: float
    component_count: int
    node_count: int
    edge_count: int
    navigable_area: float
    refinement_edges: int = 0
    rough_max_degree: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------- clustering


def _cells(grid, points, clearance):
    cells = np.array([grid.cell_of(p) for p in points], dtype=np.int64).reshape(-1, 2)
    clear = grid.clear(clearance)
    bad = ~clear[cells[:, 0], cells[:, 1]]
    if bad.any():
        raise OnObstacleError(f"point {tuple(points[int(np.argmax(bad))])} lacks clearance")
    return cells


def geodesic_matrix(grid: OccupancyGrid, points: Sequence[Point2D], clearance: float = DEFAULT_CLEARANCE):
    """All-pairs geodesic distances (meters) between points."""
    cells = _cells(grid, points, clearance)
    D = kernels.pairwise_geodesic(grid.free.view(np.uint8), cells[:, 0], cells[:, 1])
    return D * grid.resolution


def cluster_viewpoints(
    points: Sequence[Point2D],
    grid: OccupancyGrid,
    threshold: float = 1.0,
    clearance: float = DEFAULT_CLEARANCE,
) -> list[Viewpoint]:
    """Merge nearby samples into viewpoints (average linkage on geodesics).

    Each cluster is represented by its geodesic medoid; viewpoints are
    numbered in order of their medoid's input index.
    """
    if len(points) == 0:
        raise ValueError("cannot cluster an empty point set")
    cells = _cells(grid, points, clearance)
    D = kernels.pairwise_geodesic(grid.free.view(np.uint8), cells[:, 0], cells[:, 1])
    labels = kernels.average_linkage(D, threshold / grid.resolution, LINKAGE_TOL)
    medoids = []
    for rep in np.unique(labels):
        members = np.flatnonzero(labels == rep)
        sums = D[np.ix_(members, members)].sum(axis=1)
        medoids.append((int(members[int(np.argmin(sums))]), len(members)))
    medoids.sort()
    return [
        Viewpoint(i, Point2D(*map(float, points[m])), size) for i, (m, size) in enumerate(medoids)
    ]


# ---------------------------------------------------------------- graphs


def build_rough_graph(
    viewpoints: Sequence[Viewpoint],
    grid: OccupancyGrid,
    max_edge: float = 5.0,
    max_degree: int = 5,
    seed: int = 0,
    clearance: float = DEFAULT_CLEARANCE,
) -> NavGraph:
    """Connect traversable pairs within ``max_edge`` in seeded random order under a degree cap."""
    if len(viewpoints) == 0:
        raise ValueError("need at least one viewpoint")
    pos = np.array([vp.position for vp in viewpoints], dtype=np.float64)
    n = len(pos)
    iu, ju = np.triu_indices(n, k=1)
    lengths = np.hypot(*(pos[iu] - pos[ju]).T)
    near = lengths <= max_edge
    iu, ju, lengths = iu[near], ju[near], lengths[near]
    segs = np.hstack([pos[iu], pos[ju]])
    ok = segments_traversable(grid, segs, clearance)
    iu, ju, lengths = iu[ok], ju[ok], lengths[ok]

    order = make_rng(seed, "rough-graph").permutation(len(iu))
    degree = np.zeros(n, np.int64)
    edges = []
    for k in order:
        a, b = int(iu[k]), int(ju[k])
        if degree[a] < max_degree and degree[b] < max_degree:
            degree[a] += 1
            degree[b] += 1
            edges.append(NavEdge(a, b, float(lengths[k]), EdgeOrigin.ROUGH))
    scene = grid.scene_id
    return NavGraph(scene, tuple(viewpoints), tuple(edges))


_STEPS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]


def _trace_back(dist, mask, start, goal):
    """Cell path start -> goal along a single-source field rooted at ``start``."""
    h, w = mask.shape
    path = [goal]
    r, c = goal
    while (r, c) != start:
        here = dist[r, c]
        best = None
        for dr, dc in _STEPS:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w) or not mask[rr, cc]:
                continue
            diag = dr != 0 and dc != 0
            if diag and not (mask[r, cc] and mask[rr, c]):
                continue
            step = kernels.SQRT2 if diag else 1.0
            if abs(dist[rr, cc] + step - here) < 1e-6:
                key = rr * w + cc
                if best is None or key < best[0]:
                    best = (key, rr, cc)
        _, r, c = best
        path.append((r, c))
    path.reverse()
    return path


def refine_graph(
    rough: NavGraph,
    grid: OccupancyGrid,
    max_edge: float = 5.0,
    clearance: float = DEFAULT_CLEARANCE,
) -> NavGraph:
    """Join components until the graph is connected, keeping every edge traversable.

    Repeatedly takes the component pair with the smallest geodesic gap
    (through clearance-respecting cells) and bridges it along that geodesic,
    inserting viewpoints so each new edge is straight-line traversable and at
    most ``max_edge`` long. New edges are tagged REFINEMENT.
    """
    viewpoints = list(rough.viewpoints)
    edges = list(rough.edges)
    mask = grid.clear(clearance)
    mask8 = mask.view(np.uint8)
    graph = rough
    while True:
        comps = graph.components()
        if len(comps) <= 1:
            return graph
        cells = np.array([grid.cell_of(vp.position) for vp in viewpoints], dtype=np.int64)
        comp_of = np.empty(len(viewpoints), np.int64)
        for ci, comp in enumerate(comps):
            comp_of[comp] = ci
        best = None
        for ci, comp in enumerate(comps):
            dist, owner = kernels.distance_field(mask8, cells[comp, 0], cells[comp, 1])
            others = np.flatnonzero(comp_of != ci)
            d = dist[cells[others, 0], cells[others, 1]]
            for v, dv in zip(others, d):
                if not math.isfinite(dv):
                    continue
                u = comp[int(owner[cells[v, 0], cells[v, 1]])]
                cand = (dv, min(u, int(v)), max(u, int(v)))
                if best is None or cand < best:
                    best = cand
        if best is None:
            raise UnfixableGraphError(f"{grid.scene_id}: FREE space is disconnected")
        _, u, v = best
        start = (int(cells[u, 0]), int(cells[u, 1]))
        goal = (int(cells[v, 0]), int(cells[v, 1]))
        dist, _ = kernels.distance_field(mask8, [start[0]], [start[1]])
        path = _trace_back(dist, mask, start, goal)
        centers = np.array([grid.center_of(r, c) for r, c in path])
        at_cell = {tuple(cells[i]): i for i in range(len(viewpoints))}

        cur, cur_node = 0, u
        last = len(path) - 1
        while cur < last:
            js = np.arange(last, cur, -1)
            segs = np.hstack([np.repeat(centers[cur][None], len(js), 0), centers[js]])
            lens = np.hypot(*(centers[js] - centers[cur]).T)
            ok = segments_traversable(grid, segs, clearance) & (lens <= max_edge)
            j = int(js[int(np.argmax(ok))]) if ok.any() else cur + 1
            nxt = at_cell.get(path[j])
            if nxt is None:
                nxt = len(viewpoints)
                viewpoints.append(Viewpoint(nxt, Point2D(*map(float, centers[j])), 0))
                at_cell[path[j]] = nxt
            length = float(math.hypot(*(centers[j] - centers[cur])))
            edges.append(NavEdge(cur_node, nxt, length, EdgeOrigin.REFINEMENT))
            cur, cur_node = j, nxt
        graph = NavGraph(rough.scene_id, tuple(viewpoints), tuple(edges))


def quality_report(
    graph: NavGraph,
    grid: OccupancyGrid,
    clearance: float = DEFAULT_CLEARANCE,
) -> GraphQualityReport:
    area = navigable_area(grid)
    n, m = len(graph), len(graph.edges)
    if m:
        pos = graph.positions
        segs = np.array([np.r_[pos[e.u], pos[e.v]] for e in graph.edges])
        collisions = int(np.count_nonzero(~segments_traversable(grid, segs, clearance)))
        mean_len = float(np.mean([e.length for e in graph.edges]))
    else:
        collisions, mean_len = 0, 0.0
    rough_deg = np.zeros(n, np.int64)
    for e in graph.edges:
        if e.origin is EdgeOrigin.ROUGH:
            rough_deg[e.u] += 1
            rough_deg[e.v] += 1
    return GraphQualityReport(
        density=n / area if area > 0 else math.inf,
        collision_ratio=collisions / m if m else 0.0,
        mean_edge_length=mean_len,
        mean_degree=2.0 * m / n if n else 0.0,
        component_count=len(graph.components()),
        node_count=n,
        edge_count=m,
        navigable_area=area,
        refinement_edges=sum(e.origin is EdgeOrigin.REFINEMENT for e in graph.edges),
        rough_max_degree=int(rough_deg.max()) if n else 0,
    )


QUALITY_COLUMNS = ("Method", "Density", "Collision", "EdgeLen", "Degree", "Nodes", "Edges", "Comps")


def format_quality_table(rows: Sequence[tuple[str, GraphQualityReport]]) -> str:
    """Fixed-column table with the Density / Collision columns first."""
    head = "{:<16}{:>9}{:>11}{:>9}{:>8}{:>7}{:>7}{:>7}".format(*QUALITY_COLUMNS)
    out = [head, "-" * len(head)]
    for name, r in rows:
        out.append(
            f"{name:<16}{r.density:>9.2f}{100 * r.collision_ratio:>10.2f}%"
            f"{r.mean_edge_length:>9.2f}{r.mean_degree:>8.2f}{r.node_count:>7d}{r.edge_count:>7d}"
            f"{r.component_count:>7d}"
        )
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- pipeline + I/O


@dataclass(frozen=True)
class GraphParams:
    min_geo_sep: float = 0.4
    cluster_threshold: float = 1.0
    max_edge: float = 5.0
    max_degree: int = 5
    clearance: float = DEFAULT_CLEARANCE


def build_navgraph(grid: OccupancyGrid, seed: int, params: GraphParams = GraphParams()):
    """Sample -> cluster -> rough graph -> refine. Returns ``(graph, rough)``."""
    from .envworld import sample_navigable_points
    from .rng import derive_seed

    pts = sample_navigable_points(grid, params.min_geo_sep, derive_seed(seed, "sample"), params.clearance)
    if not pts:
        raise UnfixableGraphError(f"{grid.scene_id}: no navigable viewpoint")
    vps = cluster_viewpoints(pts, grid, params.cluster_threshold, params.clearance)
    rough = build_rough_graph(
        vps, grid, params.max_edge, params.max_degree, derive_seed(seed, "rough"), params.clearance
    )
    return refine_graph(rough, grid, params.max_edge, params.clearance), rough


def dumps_graph(graph: NavGraph) -> str:
    lines = [f"{GRAPH_FORMAT} {GRAPH_VERSION}", f"scene_id {graph.scene_id}", f"nodes {len(graph)}"]
    for vp in graph.viewpoints:
        lines.append(f"v {vp.id} {vp.position.x!r} {vp.position.y!r} {vp.cluster_size}")
    lines.append(f"edges {len(graph.edges)}")
    for e in graph.edges:
        lines.append(f"e {e.u} {e.v} {e.length!r} {e.origin.value}")
    return "\n".join(lines) + "\n"


def loads_graph(text: str) -> NavGraph:
    lines = text.splitlines()
    tag = lines[0].split() if lines else []
    if len(tag) != 2 or tag[0] != GRAPH_FORMAT or int(tag[1]) != GRAPH_VERSION:
        raise ValueError("not a navgen graph file of a supported version")
    scene_id = lines[1].partition(" ")[2]
    n = int(lines[2].split()[1])
    vps = []
    for line in lines[3:3 + n]:
        _, i, x, y, size = line.split()
        vps.append(Viewpoint(int(i), Point2D(float(x), float(y)), int(size)))
    m = int(lines[3 + n].split()[1])
    edges = []
    for line in lines[4 + n:4 + n + m]:
        _, u, v, length, origin = line.split()
        edges.append(NavEdge(int(u), int(v), float(length), EdgeOrigin(origin)))
    if len(vps) != n or len(edges) != m:
        raise ValueError("truncated graph file")
    return NavGraph(scene_id, tuple(vps), tuple(edges))


def save_graph(graph: NavGraph, path) -> None:
    Path(path).write_text(dumps_graph(graph))


def load_graph(path) -> NavGraph:
    return loads_graph(Path(path).read_text())
