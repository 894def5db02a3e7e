"""Static SVG rendering of a scene, its navigation graph and highlighted routes."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .envworld import OccupancyGrid
from .graphbuild import EdgeOrigin, NavGraph
from .trajsample import Trajectory

PX_PER_M = 40.0
EDGE_COLORS = {EdgeOrigin.ROUGH: "#2b6cb0", EdgeOrigin.REFINEMENT: "#dd6b20"}
TRAJ_COLORS = ("#38a169", "#d53f8c", "#805ad5", "#d69e2e")


def _obstacle_path(grid: OccupancyGrid, s: float) -> str:
    # world y points up; SVG y points down
    parts = []
    H = grid.height
    for r in range(H):
        row = grid.cells[r]
        edges = np.flatnonzero(np.diff(np.r_[0, row, 0]))
        y = (H - r - 1) * s
        for c0, c1 in zip(edges[::2], edges[1::2]):
            parts.append(f"M{c0 * s:.1f} {y:.1f}h{(c1 - c0) * s:.1f}v{s:.1f}h{-(c1 - c0) * s:.1f}z")
    return "".join(parts)


def svg_markup(
    grid: OccupancyGrid,
    graph: NavGraph | None = None,
    trajectories: Sequence[Trajectory] = (),
    px_per_m: float = PX_PER_M,
) -> str:
    res = grid.resolution
    s = res * px_per_m
    W = grid.width * s
    H = grid.height * s
    height_m = grid.height * res

    def xy(p):
        return f'{p[0] * px_per_m:.2f}', f'{(height_m - p[1]) * px_per_m:.2f}'

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
        f'viewBox="0 0 {W:.1f} {H:.1f}">',
        f"<title>{grid.scene_id}</title>",
        f'<rect class="floor" x="0" y="0" width="{W:.1f}" height="{H:.1f}" fill="#ffffff"/>',
        f'<path class="obstacle" fill="#4a5568" d="{_obstacle_path(grid, s)}"/>',
    ]
    if graph is not None:
        pos = graph.positions
        out.append('<g class="edges" stroke-width="1.5">')
        for e in graph.edges:
            (x1, y1), (x2, y2) = xy(pos[e.u]), xy(pos[e.v])
            out.append(
                f'<line class="edge {e.origin.value.lower()}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                f'stroke="{EDGE_COLORS[e.origin]}"/>'
            )
        out.append("</g>")
        for k, t in enumerate(trajectories):
            pts = " ".join(",".join(xy(pos[i])) for i in t.node_ids)
            color = TRAJ_COLORS[k % len(TRAJ_COLORS)]
            out.append(f'<polyline class="trajectory" fill="none" stroke="{color}" stroke-width="4" points="{pts}"/>')
        out.append('<g class="nodes" fill="#1a202c">')
        for vp in graph.viewpoints:
            x, y = xy(vp.position)
            out.append(f'<circle class="node" id="vp{vp.id}" cx="{x}" cy="{y}" r="3.5"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(grid, graph=None, trajectories=(), path=None) -> str:
    """Write the SVG to ``path`` (if given) and return the markup."""
    markup = svg_markup(grid, graph, trajectories)
    if path is not None:
        Path(path).write_text(markup)
    return markup
