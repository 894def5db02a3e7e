from __future__ import annotations

import json
import os
import subprocess
import sys
import textwrap

import pytest

# Runs inside a subprocess because the backend is chosen at import time.
WORKER = textwrap.dedent(
    """
    import json
    import numpy as np
    from navgen import _accel, kernels
    from navgen.envworld import FloorplanSpec, generate_floorplan
    from navgen.graphbuild import build_navgraph, dumps_graph

    grid = generate_floorplan(FloorplanSpec(seed=3, width_m=6, height_m=5, room_count=(2, 3)))
    free = grid.free.view(np.uint8)
    clear = grid.clear(0.2).view(np.uint8)
    rng = np.random.default_rng(0)
    rows, cols = np.nonzero(grid.clear(0.2))
    pick = rng.choice(rows.size, 20, replace=False)
    pr, pc = rows[pick], cols[pick]
    segs = rng.uniform([0, 0, 0, 0], [grid.width, grid.height] * 2, (300, 4))
    D = kernels.pairwise_geodesic(free, pr, pc)
    graph, _ = build_navgraph(grid, 3)
    indptr, indices, weights = graph.csr()
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import dijkstra
    G = dijkstra(csr_matrix((weights, indices, indptr), shape=(len(graph),) * 2), directed=False)

    def clean(a):
        a = np.asarray(a, dtype=float)
        return np.where(np.isfinite(a), a, -1.0).tolist()

    out = {
        "numba": _accel.USE_NUMBA,
        "field": clean(kernels.distance_field(free, pr[:2], pc[:2])),
        "pairwise": clean(D),
        "segments": clean(kernels.segments_clear(clear, segs)),
        "linkage": clean(kernels.average_linkage(D, 10.0, 1e-9)),
        "next_hops": clean(kernels.canonical_next_hops(G, indptr, indices, weights, 1e-9)),
        "dtw": kernels.dtw_distance(rng.random((9, 7))),
        "graph": dumps_graph(graph),
    }
    print(json.dumps(out))
    """
)


def _run(disable: bool) -> dict:
    env = dict(os.environ, NAVGEN_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER], env=env, capture_output=True, text=True, timeout=1200)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


@pytest.mark.slow
def test_numba_and_fallback_agree():
    jit, py = _run(False), _run(True)
    assert jit.pop("numba") is True and py.pop("numba") is False
    for key in jit:
        assert jit[key] == py[key], key
