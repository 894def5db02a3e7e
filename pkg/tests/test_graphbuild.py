from __future__ import annotations

import math
from collections import deque

import numpy as np
import pytest
from conftest import box_grid
from oracles import naive_average_linkage

from navgen import kernels
from navgen.envworld import Point2D, generate_floorplan, FloorplanSpec, line_traversable, navigable_area
from navgen.graphbuild import (
    EdgeOrigin,
    NavEdge,
    NavGraph,
    UnfixableGraphError,
    Viewpoint,
    build_navgraph,
    build_rough_graph,
    cluster_viewpoints,
    dumps_graph,
    format_quality_table,
    geodesic_matrix,
    loads_graph,
    quality_report,
    refine_graph,
)


def _vps(points):
    return [Viewpoint(i, Point2D(*p)) for i, p in enumerate(points)]


def test_cluster_merges_close_pair_to_lower_index():
    g = box_grid(40, 40)
    pts = [Point2D(1.05, 1.05), Point2D(1.55, 1.05)]
    vps = cluster_viewpoints(pts, g, 1.0)
    assert len(vps) == 1 and vps[0].position == pts[0] and vps[0].cluster_size == 2


def test_cluster_keeps_distant_pair():
    g = box_grid(40, 40)
    pts = [Point2D(0.55, 1.05), Point2D(3.55, 1.05)]
    vps = cluster_viewpoints(pts, g, 1.0)
    assert [v.position for v in vps] == pts


def test_cluster_rejects_empty():
    with pytest.raises(ValueError):
        cluster_viewpoints([], box_grid(5, 5), 1.0)


def test_cluster_matches_naive_agglomerative_oracle(scene7):
    grid = scene7[0]
    rng = np.random.default_rng(7)
    rows, cols = np.nonzero(grid.clear(0.2))
    # pack 30 points into a 3 m window so clusters actually form
    near = np.flatnonzero((cols < 60) & (rows < 40))
    pts = [grid.center_of(rows[k], cols[k]) for k in rng.choice(near, 30, replace=False)]
    D = geodesic_matrix(grid, pts)
    partition = naive_average_linkage((D / grid.resolution).tolist(), 1.0 / grid.resolution)
    labels = kernels.average_linkage(D / grid.resolution, 1.0 / grid.resolution, 1e-9)
    got = {frozenset(np.flatnonzero(labels == lab).tolist()) for lab in np.unique(labels)}
    assert got == partition
    assert 1 < len(got) < 30
    vps = cluster_viewpoints(pts, grid, 1.0)
    assert len(vps) == len(partition)
    # medoid rule and ordering by medoid input index
    medoids = []
    for members in partition:
        m = sorted(members)
        sums = [sum(D[i][j] for j in m) for i in m]
        medoids.append(m[int(np.argmin(sums))])
    assert [v.position for v in vps] == [pts[i] for i in sorted(medoids)]


def test_rough_graph_single_candidate_and_too_far():
    g = box_grid(80, 20)
    assert len(build_rough_graph(_vps([(1.0, 1.0), (2.0, 1.0)]), g).edges) == 1
    assert len(build_rough_graph(_vps([(1.0, 1.0), (7.0, 1.0)]), g).edges) == 0


def test_rough_graph_degree_cap_on_mutually_visible_cluster():
    g = box_grid(60, 60)
    ang = np.linspace(0, 2 * np.pi, 7, endpoint=False)
    pts = [(3.0 + 1.5 * math.cos(a), 3.0 + 1.5 * math.sin(a)) for a in ang]
    graph = build_rough_graph(_vps(pts), g, 5.0, 5, seed=4)
    deg = [0] * 7
    for e in graph.edges:
        deg[e.u] += 1
        deg[e.v] += 1
    assert max(deg) <= 5
    # 21 candidate pairs, degree sum capped at 35, so at most 17 edges
    assert 14 <= len(graph.edges) <= 17


def test_rough_graph_deterministic(scene7):
    grid, _, rough = scene7
    again = build_rough_graph(rough.viewpoints, grid, 5.0, 5, seed=0)
    assert dumps_graph(again) == dumps_graph(build_rough_graph(rough.viewpoints, grid, 5.0, 5, seed=0))


def test_refine_connected_graph_is_noop(scene7):
    grid, graph, _ = scene7
    assert refine_graph(graph, grid) is graph


def test_refine_two_isolated_nodes_in_one_room():
    g = box_grid(40, 40)
    rough = NavGraph("box", tuple(_vps([(1.0, 1.0), (2.0, 2.0)])), ())
    fixed = refine_graph(rough, g)
    assert len(fixed.edges) == 1 and fixed.edges[0].origin is EdgeOrigin.REFINEMENT
    assert len(fixed) == 2


def test_refine_inserts_intermediate_viewpoints_along_geodesic():
    # rooms joined by a narrow door; the two nodes cannot see each other
    walls = [(r, 30) for r in range(1, 41) if not 30 <= r <= 36] + [(r, 31) for r in range(1, 41) if not 30 <= r <= 36]
    g = box_grid(60, 40, walls=walls)
    rough = NavGraph("box", tuple(_vps([(1.0, 0.5), (5.0, 0.5)])), ())
    fixed = refine_graph(rough, g, max_edge=5.0)
    assert len(fixed.components()) == 1
    assert len(fixed) > 2
    assert all(v.cluster_size == 0 for v in fixed.viewpoints[2:])
    for e in fixed.edges:
        assert e.origin is EdgeOrigin.REFINEMENT and e.length <= 5.0
        assert line_traversable(g, fixed.viewpoints[e.u].position, fixed.viewpoints[e.v].position)


def test_refine_disconnected_free_space_is_unfixable():
    walls = [(r, 11) for r in range(1, 11)] + [(r, 12) for r in range(1, 11)]
    g = box_grid(22, 10, walls=walls)
    rough = NavGraph("box", tuple(_vps([(0.55, 0.55), (1.95, 0.55)])), ())
    with pytest.raises(UnfixableGraphError):
        refine_graph(rough, g)


def test_seed7_pipeline_audit(scene7):
    grid, graph, rough = scene7
    # BFS reachability
    seen = {0}
    q = deque([0])
    while q:
        u = q.popleft()
        for v in graph.neighbors(u):
            if v not in seen:
                seen.add(v)
                q.append(v)
    assert len(seen) == len(graph)
    for e in graph.edges:
        a, b = graph.viewpoints[e.u].position, graph.viewpoints[e.v].position
        assert line_traversable(grid, a, b)
        assert e.length == pytest.approx(math.dist(a, b), abs=1e-12) and e.length > 0
    rough_deg = [0] * len(graph)
    for e in graph.edges:
        if e.origin is EdgeOrigin.ROUGH:
            rough_deg[e.u] += 1
            rough_deg[e.v] += 1
    assert max(rough_deg) <= 5
    # refinement keeps every rough viewpoint and edge
    assert graph.viewpoints[: len(rough)] == rough.viewpoints
    assert set(rough.edges) <= set(graph.edges)
    for v in graph.viewpoints:
        assert grid.is_clear(v.position)


def test_quality_report_recomputes_collisions():
    g = box_grid(40, 20, walls=[(r, 20) for r in range(1, 21)])
    graph = NavGraph("box", tuple(_vps([(1.0, 1.0), (3.0, 1.0), (1.0, 1.6)])),
                     (NavEdge(0, 1, 2.0), NavEdge(0, 2, 0.6)))
    rep = quality_report(graph, g)
    assert rep.collision_ratio == 0.5
    assert rep.mean_degree == pytest.approx(2 * 2 / 3)
    assert rep.density == pytest.approx(3 / navigable_area(g))


def test_quality_report_single_node():
    g = box_grid(10, 10)
    rep = quality_report(NavGraph("box", (Viewpoint(0, Point2D(0.55, 0.55)),), ()), g)
    assert rep.density == pytest.approx(1 / navigable_area(g))
    assert rep.mean_degree == 0 and rep.collision_ratio == 0 and rep.component_count == 1


def test_quality_table_columns(scene7):
    grid, graph, _ = scene7
    text = format_quality_table([("ours", quality_report(graph, grid))])
    header = text.splitlines()[0].split()
    assert header[:3] == ["Method", "Density", "Collision"]
    assert "0.00%" in text


@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5, 6, 8, 9, 10, 11])
def test_default_scenes_have_zero_collisions(seed):
    grid = generate_floorplan(FloorplanSpec(seed=seed))
    graph, _ = build_navgraph(grid, seed)
    rep = quality_report(graph, grid)
    assert rep.collision_ratio == 0.0 and rep.component_count == 1
    assert rep.mean_degree == pytest.approx(2 * rep.edge_count / rep.node_count)


def test_graph_invariants_enforced():
    vps = tuple(_vps([(0, 0), (1, 0)]))
    with pytest.raises(ValueError):
        NavEdge(1, 1, 1.0)
    with pytest.raises(ValueError):
        NavGraph("x", vps, (NavEdge(0, 1, 1.0), NavEdge(1, 0, 1.0)))
    with pytest.raises(ValueError):
        NavGraph("x", (Viewpoint(1, Point2D(0, 0)),), ())


def test_graph_text_round_trip_byte_identical(scene7):
    grid, graph, _ = scene7
    text = dumps_graph(graph)
    assert text.startswith("navgen-graph 1\n")
    back = loads_graph(text)
    assert back == graph and dumps_graph(back) == text
    again, _ = build_navgraph(grid, 7)
    assert dumps_graph(again) == text
