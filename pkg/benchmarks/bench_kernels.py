"""Time the hot kernels with numba against the interpreted fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--seed 7]

Each backend runs in its own subprocess (the fallback with
``NAVGEN_DISABLE_NUMBA=1``) because the choice is fixed at import time.
Both report a fingerprint of every kernel output, so the table doubles as a
parity check. Numba timings exclude the first (compiling) call.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def _fingerprint(arr) -> str:
    import numpy as np

    a = np.asarray(arr, dtype=float)
    return hashlib.sha256(np.round(np.where(np.isfinite(a), a, -1.0), 9).tobytes()).hexdigest()[:12]


def worker(seed: int, repeat: int) -> dict:
    import numpy as np

    from navgen import _accel, kernels
    from navgen.envworld import FloorplanSpec, generate_floorplan, sample_navigable_points
    from navgen.graphbuild import build_navgraph

    grid = generate_floorplan(FloorplanSpec(seed=seed))
    clear = grid.clear(0.2).view(np.uint8)
    free = grid.free.view(np.uint8)
    rng = np.random.default_rng(seed)
    rows, cols = np.nonzero(grid.clear(0.2))
    pick = rng.choice(rows.size, size=60, replace=False)
    pr, pc = rows[pick], cols[pick]
    segs = np.column_stack([pc[:-1] + 0.5, pr[:-1] + 0.5, pc[1:] + 0.5, pr[1:] + 0.5]).astype(float)
    segs = np.repeat(segs, 20, axis=0)
    pts = sample_navigable_points(grid, 0.4, seed, 0.2)
    graph, _ = build_navgraph(grid, seed)
    indptr, indices, weights = graph.csr()
    from scipy.sparse.csgraph import dijkstra
    from scipy.sparse import csr_matrix

    D = dijkstra(csr_matrix((weights, indices, indptr), shape=(len(graph), len(graph))), directed=False)
    C = rng.random((120, 120))
    Dc = kernels.pairwise_geodesic(free, pr[:40], pc[:40])

    cases = {
        "distance_field": lambda: kernels.distance_field(free, pr[:1], pc[:1])[0],
        "pairwise_geodesic(60)": lambda: kernels.pairwise_geodesic(free, pr, pc),
        "segments_clear(1180)": lambda: kernels.segments_clear(clear, segs),
        "average_linkage(40)": lambda: kernels.average_linkage(Dc, 10.0, 1e-9),
        "canonical_next_hops": lambda: kernels.canonical_next_hops(D, indptr, indices, weights, 1e-9),
        "dtw_distance(120x120)": lambda: kernels.dtw_distance(C),
    }
    out = {"backend": "numba" if _accel.USE_NUMBA else "fallback", "viewpoints": len(graph), "samples": len(pts)}
    for name, fn in cases.items():
        result = fn()  # warm-up; compiles under numba
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t0)
        out[name] = {"seconds": best, "fingerprint": _fingerprint(result)}
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.worker:
        print(json.dumps(worker(args.seed, args.repeat)))
        return 0

    results = {}
    for backend, flag in (("numba", "0"), ("fallback", "1")):
        env = dict(os.environ, NAVGEN_DISABLE_NUMBA=flag)
        cmd = [sys.executable, __file__, "--worker", "--seed", str(args.seed), "--repeat", str(args.repeat)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    nb, fb = results["numba"], results["fallback"]
    print(f"scene seed {args.seed}: {nb['viewpoints']} viewpoints, {nb['samples']} samples; best of {args.repeat}")
    print(f"{'kernel':<24}{'numba (ms)':>12}{'fallback (ms)':>15}{'speedup':>10}  outputs")
    mismatches = 0
    for name in nb:
        if not isinstance(nb[name], dict):
            continue
        a, b = nb[name], fb[name]
        same = a["fingerprint"] == b["fingerprint"]
        mismatches += not same
        print(
            f"{name:<24}{1e3 * a['seconds']:>12.2f}{1e3 * b['seconds']:>15.2f}"
            f"{b['seconds'] / max(a['seconds'], 1e-9):>9.1f}x  {'match' if same else 'DIFFER'}"
        )
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
