from __future__ import annotations

import sys

import numpy as np
import pytest

from navgen.envworld import FloorplanSpec, OccupancyGrid, Point2D, generate_floorplan
from navgen.graphbuild import NavEdge, NavGraph, Viewpoint, build_navgraph


def box_grid(width: int, height: int, resolution: float = 0.1, scene_id: str = "box", walls=()) -> OccupancyGrid:
    """Open rectangle of ``width x height`` FREE cells inside a one-cell border, plus optional wall cells."""
    cells = np.ones((height + 2, width + 2), np.uint8)
    cells[1:-1, 1:-1] = 0
    for r, c in walls:
        cells[r, c] = 1
    return OccupancyGrid(scene_id, resolution, cells)


def make_graph(n, edges, scene="g"):
    vps = tuple(Viewpoint(i, Point2D(float(i), 0.0)) for i in range(n))
    return NavGraph(scene, vps, tuple(NavEdge(u, v, float(w)) for u, v, w in edges))


def line_graph(n):
    return make_graph(n, [(i, i + 1, 1.0) for i in range(n - 1)])


def adjacency(graph):
    return {u: {v: w for v, w in graph.adjacency[u]} for u in range(len(graph))}


def random_graph(rng, n):
    edges = {}
    for v in range(1, n):  # random spanning tree keeps most pairs reachable
        edges[(int(rng.integers(v)), v)] = None
    for _ in range(int(rng.integers(0, 2 * n))):
        u, v = sorted(rng.choice(n, 2, replace=False).tolist())
        edges[(u, v)] = None
    integer = rng.random() < 0.5  # integer weights create ties for the lexicographic rule
    out = []
    for u, v in edges:
        w = float(rng.integers(1, 4)) if integer else float(rng.uniform(0.5, 3.0))
        out.append((u, v, w))
    return make_graph(n, out)


@pytest.fixture(scope="session")
def scene7():
    grid = generate_floorplan(FloorplanSpec(seed=7))
    graph, rough = build_navgraph(grid, 7)
    return grid, graph, rough


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
