"""Hot numeric kernels.

Every kernel takes plain numpy arrays and works in *cell units* (one grid
cell = 1.0); callers convert to meters. Kernels are compiled through
:func:`navgen._accel.jit`; with numba disabled the same code runs as Python
and the ``*_numpy`` variants below are dispatched instead where a vectorized
form exists.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

from ._accel import USE_NUMBA, jit

SQRT2 = math.sqrt(2.0)


@jit
def _dijkstra(mask, src_rows, src_cols, cutoff, targets, n_targets):
    # 8-connected, no corner cutting; path cost tracked as exact integer
    # (straight, diagonal) step counts so the float value never depends on
    # summation order.
    h, w = mask.shape
    dist = np.full((h, w), np.inf)
    n_str = np.zeros((h, w), np.int64)
    n_dia = np.zeros((h, w), np.int64)
    owner = np.full((h, w), -1, np.int64)
    done = np.zeros((h, w), np.bool_)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for k in range(src_rows.shape[0]):
        r = src_rows[k]
        c = src_cols[k]
        if owner[r, c] < 0:
            dist[r, c] = 0.0
            owner[r, c] = k
            heapq.heappush(heap, (0.0, np.int64(r * w + c)))
    remaining = n_targets
    while len(heap) > 0:
        key, flat = heapq.heappop(heap)
        r = flat // w
        c = flat % w
        if done[r, c]:
            continue
        if key > cutoff:
            break
        done[r, c] = True
        if targets[r, c]:
            remaining -= 1
            if remaining == 0:
                break
        for dr in range(-1, 2):
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                rr = r + dr
                cc = c + dc
                if rr < 0 or rr >= h or cc < 0 or cc >= w:
                    continue
                if mask[rr, cc] == 0 or done[rr, cc]:
                    continue
                if dr != 0 and dc != 0:
                    if mask[r, cc] == 0 or mask[rr, c] == 0:
                        continue
                    a = n_str[r, c]
                    b = n_dia[r, c] + 1
                else:
                    a = n_str[r, c] + 1
                    b = n_dia[r, c]
                nk = a + b * SQRT2
                if nk < dist[rr, cc]:
                    dist[rr, cc] = nk
                    n_str[rr, cc] = a
                    n_dia[rr, cc] = b
                    owner[rr, cc] = owner[r, c]
                    heapq.heappush(heap, (nk, np.int64(rr * w + cc)))
                elif nk == dist[rr, cc] and owner[r, c] < owner[rr, cc]:
                    owner[rr, cc] = owner[r, c]
    for r in range(h):
        for c in range(w):
            if not done[r, c]:
                dist[r, c] = np.inf
                owner[r, c] = -1
    return dist, owner


def distance_field(mask, src_rows, src_cols, cutoff=np.inf):
    """Multi-source geodesic field over ``mask`` (nonzero = passable).

    Returns ``(dist, owner)``: distance in cell units (``inf`` when farther
    than ``cutoff`` or unreachable) and the index of the nearest source.
    """
    src_rows = np.ascontiguousarray(src_rows, dtype=np.int64)
    src_cols = np.ascontiguousarray(src_cols, dtype=np.int64)
    targets = np.zeros(mask.shape, np.bool_)
    return _dijkstra(mask, src_rows, src_cols, float(cutoff), targets, -1)


@jit
def _pairwise(mask, rows, cols):
    n = rows.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        targets = np.zeros(mask.shape, np.bool_)
        count = 0
        for j in range(i + 1, n):
            if not targets[rows[j], cols[j]]:
                targets[rows[j], cols[j]] = True
                count += 1
        if count == 0:
            continue
        src_r = np.empty(1, np.int64)
        src_c = np.empty(1, np.int64)
        src_r[0] = rows[i]
        src_c[0] = cols[i]
        dist, _ = _dijkstra(mask, src_r, src_c, np.inf, targets, count)
        for j in range(i + 1, n):
            v = dist[rows[j], cols[j]]
            out[i, j] = v
            out[j, i] = v
    return out


def source_to_targets(mask, src_row, src_col, rows, cols):
    """Geodesic (cell units) from one cell to each target cell; stops once all are settled."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    targets = np.zeros(mask.shape, np.bool_)
    targets[rows, cols] = True
    dist, _ = _dijkstra(
        mask, np.array([src_row], np.int64), np.array([src_col], np.int64),
        np.inf, targets, int(np.count_nonzero(targets)),
    )
    return dist[rows, cols]


def pairwise_geodesic(mask, rows, cols):
    """All-pairs geodesic matrix (cell units) between the given cells."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    return _pairwise(mask, rows, cols)


@jit
def _crossings(a0, a1):
    # parameters t in (0, 1) where the segment a0 -> a1 crosses an integer line
    lo = min(a0, a1)
    hi = max(a0, a1)
    k0 = math.floor(lo) + 1
    k1 = math.ceil(hi) - 1
    n = k1 - k0 + 1
    if n < 1 or a1 == a0:
        return np.empty(0)
    out = np.empty(n)
    for i in range(n):
        out[i] = (k0 + i - a0) / (a1 - a0)
    return out


@jit
def _segment_clear(clear, u0, v0, u1, v1):
    h, w = clear.shape
    ts = np.sort(np.concatenate((np.array([0.0, 1.0]), _crossings(u0, u1), _crossings(v0, v1))))
    # both endpoints, then the midpoint of every sub-interval between grid-line
    # crossings: together these hit every cell the segment passes through
    for k in range(ts.shape[0] + 1):
        if k == 0:
            t = 0.0
        elif k == ts.shape[0]:
            t = 1.0
        else:
            if ts[k] <= ts[k - 1]:
                continue
            t = 0.5 * (ts[k - 1] + ts[k])
        c = int(math.floor(u0 + (u1 - u0) * t))
        r = int(math.floor(v0 + (v1 - v0) * t))
        if r < 0 or r >= h or c < 0 or c >= w:
            return False
        if not clear[r, c]:
            return False
    return True


@jit
def _segments_clear(clear, segs):
    m = segs.shape[0]
    out = np.empty(m, np.bool_)
    for i in range(m):
        out[i] = _segment_clear(clear, segs[i, 0], segs[i, 1], segs[i, 2], segs[i, 3])
    return out


def _crossings_numpy(a0, a1):
    if a1 == a0:
        return np.empty(0)
    k = np.arange(math.floor(min(a0, a1)) + 1, math.ceil(max(a0, a1)))
    return (k - a0) / (a1 - a0)


def _segments_clear_numpy(clear, segs):
    h, w = clear.shape
    out = np.empty(len(segs), dtype=bool)
    for i, (u0, v0, u1, v1) in enumerate(segs):
        ts = np.sort(np.concatenate(([0.0, 1.0], _crossings_numpy(u0, u1), _crossings_numpy(v0, v1))))
        gaps = ts[1:] > ts[:-1]
        t = np.concatenate(([0.0], 0.5 * (ts[:-1] + ts[1:])[gaps], [1.0]))
        c = np.floor(u0 + (u1 - u0) * t).astype(np.int64)
        r = np.floor(v0 + (v1 - v0) * t).astype(np.int64)
        inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        out[i] = bool(inside.all() and clear[r[inside], c[inside]].all())
    return out


def segments_clear(clear, segs):
    """Check each segment ``(u0, v0, u1, v1)`` (cell units) against ``clear``.

    A segment passes iff every cell it passes through is clear. This is the
    exact (zero-spacing) limit of point sampling along the segment, so it
    agrees with sampling at any spacing; touching a cell only at a single
    corner point does not count as passing through it.
    """
    segs = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 4)
    clear = np.ascontiguousarray(clear, dtype=np.bool_)
    if USE_NUMBA:
        return _segments_clear(clear, segs)
    return _segments_clear_numpy(clear, segs)


@jit
def average_linkage(D, threshold, tol):
    """Agglomerative clustering, average linkage, cut at ``threshold``.

    Merges proceed while the closest cluster pair is strictly below
    ``threshold``. Near-ties (within ``tol``) go to the lexicographically
    lowest pair of cluster representatives; a cluster's representative is its
    smallest member index. Returns that representative per input.
    """
    n = D.shape[0]
    d = D.copy()
    size = np.ones(n)
    active = np.ones(n, np.bool_)
    label = np.arange(n)
    n_active = n
    while n_active > 1:
        best = np.inf
        for i in range(n):
            if not active[i]:
                continue
            for j in range(i + 1, n):
                if active[j] and d[i, j] < best:
                    best = d[i, j]
        if not best < threshold:
            break
        lim = best + tol
        bi = -1
        bj = -1
        for i in range(n):
            if not active[i]:
                continue
            for j in range(i + 1, n):
                if active[j] and d[i, j] <= lim:
                    bi = i
                    bj = j
                    break
            if bi >= 0:
                break
        si = size[bi]
        sj = size[bj]
        for k in range(n):
            if active[k] and k != bi and k != bj:
                v = (si * d[bi, k] + sj * d[bj, k]) / (si + sj)
                d[bi, k] = v
                d[k, bi] = v
        size[bi] = si + sj
        active[bj] = False
        n_active -= 1
        for m in range(n):
            if label[m] == bj:
                label[m] = bi
    return label


@jit
def canonical_next_hops(D, indptr, indices, weights, tol):
    """Next hop of the lexicographically smallest shortest path ``u -> t``.

    ``D`` is the all-pairs distance matrix; the CSR adjacency must list each
    row's neighbors in ascending id order. ``nxt[u, t]`` is -1 when ``t`` is
    unreachable from ``u`` and ``t`` itself when ``u == t``.
    """
    n = D.shape[0]
    nxt = np.full((n, n), -1, np.int64)
    for t in range(n):
        for u in range(n):
            if u == t:
                nxt[u, t] = t
                continue
            target = D[u, t]
            if not np.isfinite(target):
                continue
            lim = tol * (1.0 + target)
            for p in range(indptr[u], indptr[u + 1]):
                v = indices[p]
                if abs(weights[p] + D[v, t] - target) <= lim:
                    nxt[u, t] = v
                    break
    return nxt


@jit
def hop_counts(D, nxt):
    """Edge count of each canonical path; -1 where unreachable."""
    n = D.shape[0]
    hops = np.full((n, n), -1, np.int64)
    for t in range(n):
        order = np.argsort(D[:, t], kind="mergesort")
        for u in order:
            if u == t:
                hops[u, t] = 0
            elif nxt[u, t] >= 0:
                hops[u, t] = hops[nxt[u, t], t] + 1
    return hops


@jit
def dtw_distance(C):
    """Classic DTW accumulated cost over a precomputed cost matrix."""
    n, m = C.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = C[i - 1, j - 1] + best
    return acc[n, m]
