"""Synthetic indoor environments and the grid geometry built on them.

A scene is an :class:`OccupancyGrid`: a closed raster of FREE / OBSTACLE
cells. Points live in a metric world frame where the center of cell
``(row, col)`` is ``((col + 0.5) * res, (row + 0.5) * res)``.

Geodesic distance is an 8-connected grid Dijkstra that forbids cutting
obstacle corners, so two cells are mutually reachable exactly when they share
a 4-connected FREE component.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from . import kernels
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

FREE = 0
OBSTACLE = 1

DEFAULT_RESOLUTION = 0.1
DEFAULT_CLEARANCE = 0.2
UNREACHABLE = math.inf

GRID_FORMAT = "navgen-grid"
GRID_VERSION = 1

_FOUR = ndimage.generate_binary_structure(2, 1)


class GridError(ValueError):
    pass


class OutOfBoundsError(GridError):
    pass


class OnObstacleError(GridError):
    pass


class FloorplanError(RuntimeError):
    def __init__(self, msg, retries):
        super().__init__(f"{msg} (after {retries} retries)")
        self.retries = retries


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    scene_id: str
    resolution: float
    cells: np.ndarray  # (height, width) uint8, 1 = OBSTACLE
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2 or min(cells.shape) < 1:
            raise GridError("cells must be a non-empty 2-D array")
        if not self.resolution > 0:
            raise GridError("resolution must be positive")
        if not (np.all(cells[0]) and np.all(cells[-1]) and np.all(cells[:, 0]) and np.all(cells[:, -1])):
            raise GridError("boundary cells must be OBSTACLE")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.resolution == other.resolution
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def free(self) -> np.ndarray:
        if "free" not in self._cache:
            m = self.cells == FREE
            m.setflags(write=False)
            self._cache["free"] = m
        return self._cache["free"]

    def clear(self, clearance: float = DEFAULT_CLEARANCE) -> np.ndarray:
        """Cells whose center has no OBSTACLE cell center closer than ``clearance``."""
        key = ("clear", float(clearance))
        if key not in self._cache:
            if clearance <= 0:
                m = self.free.copy()
            else:
                edt = ndimage.distance_transform_edt(self.free)
                m = edt >= clearance / self.resolution - 1e-9
            m.setflags(write=False)
            self._cache[key] = m
        return self._cache[key]

    def cell_of(self, p: Point2D) -> tuple[int, int]:
        x, y = p
        if not (math.isfinite(x) and math.isfinite(y)):
            raise OutOfBoundsError(f"non-finite point {p}")
        c = math.floor(x / self.resolution)
        r = math.floor(y / self.resolution)
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise OutOfBoundsError(f"point {tuple(p)} outside {self.scene_id}")
        return r, c

    def center_of(self, row: int, col: int) -> Point2D:
        return Point2D((col + 0.5) * self.resolution, (row + 0.5) * self.resolution)

    def in_bounds(self, p: Point2D) -> bool:
        return 0 <= p[0] < self.width * self.resolution and 0 <= p[1] < self.height * self.resolution

    def is_clear(self, p: Point2D, clearance: float = DEFAULT_CLEARANCE) -> bool:
        r, c = self.cell_of(p)
        return bool(self.clear(clearance)[r, c])


@dataclass(frozen=True)
class FloorplanSpec:
    """Parameters for :func:`generate_floorplan` (lengths in meters)."""

    width_m: float = 14.0
    height_m: float = 10.0
    room_count: tuple[int, int] = (4, 8)
    corridor_width: tuple[float, float] = (1.2, 1.8)
    obstacle_density: float = 0.15
    seed: int = 0
    resolution: float = DEFAULT_RESOLUTION
    clearance: float = DEFAULT_CLEARANCE
    scene_id: str | None = None
    max_retries: int = 20

    def validate(self):
        if not (self.width_m >= 1.0 and self.height_m >= 1.0):
            raise ValueError("bounds must be at least 1 m per side")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        lo, hi = self.room_count
        if not 1 <= lo <= hi:
            raise ValueError("room_count must satisfy 1 <= min <= max")
        cmin, cmax = self.corridor_width
        if not (0 < cmin <= cmax):
            raise ValueError("corridor_width must satisfy 0 < min <= max")
        if cmin < 2 * self.clearance:
            raise ValueError("corridor width must be at least twice the clearance radius")
        if not 0.0 <= self.obstacle_density < 0.6:
            raise ValueError("obstacle_density must lie in [0, 0.6)")

    @property
    def target_area(self) -> float:
        """Navigable area the generator aims for: interior x (1 - density)."""
        w = round(self.width_m / self.resolution) - 2
        h = round(self.height_m / self.resolution) - 2
        return w * h * self.resolution**2 * (1.0 - self.obstacle_density)


def navigable_area(grid: OccupancyGrid) -> float:
    return int(np.count_nonzero(grid.cells == FREE)) * grid.resolution**2


def free_components(mask: np.ndarray) -> int:
    _, n = ndimage.label(mask, structure=_FOUR)
    return int(n)


# ---------------------------------------------------------------- floorplans

_WALL = 2  # cells
_MIN_ROOM_M = 2.0


def _split_span(rng, start, stop, n, min_len, wall):
    """Cut [start, stop) into n rooms separated by ``wall``-cell walls."""
    total = stop - start
    n = max(1, min(n, (total + wall) // (min_len + wall)))
    usable = total - wall * (n - 1)
    weights = rng.uniform(0.7, 1.3, size=n)
    lens = np.maximum(min_len, np.floor(usable * weights / weights.sum()).astype(int))
    lens[-1] = usable - lens[:-1].sum()
    if lens[-1] < min_len:  # redistribute from the largest
        short = min_len - lens[-1]
        lens[-1] = min_len
        lens[int(np.argmax(lens[:-1]))] -= short
    spans = []
    pos = start
    for ln in lens:
        spans.append((pos, pos + int(ln)))
        pos += int(ln) + wall
    return spans


def _carve_layout(rng, cells, spec, res):
    h, w = cells.shape
    r0, r1 = 1, h - 1  # interior rows [r0, r1)
    c0, c1 = 1, w - 1
    min_room = int(round(_MIN_ROOM_M / res))
    cw = int(round(rng.uniform(*spec.corridor_width) / res))
    inner_h = r1 - r0
    n_rooms = int(rng.integers(spec.room_count[0], spec.room_count[1] + 1))

    if inner_h >= 2 * min_room + 2 * _WALL + cw:
        top = int(rng.integers(min_room, inner_h - cw - 2 * _WALL - min_room + 1))
        bands = [(r0, r0 + top), (r0 + top + 2 * _WALL + cw, r1)]
        hall = (r0 + top + _WALL, r0 + top + _WALL + cw)
    elif inner_h >= min_room + _WALL + cw:
        top = inner_h - cw - _WALL
        bands = [(r0, r0 + top)]
        hall = (r0 + top + _WALL, r1)
    else:
        return 0

    cells[r0:r1, c0:c1] = OBSTACLE
    cells[hall[0]:hall[1], c0:c1] = FREE
    areas = [b[1] - b[0] for b in bands]
    per_band = [max(1, round(n_rooms * a / sum(areas))) for a in areas]
    door_lo = int(math.ceil(spec.corridor_width[0] / res))
    door_hi = int(math.floor(spec.corridor_width[1] / res))
    for (b0, b1), k in zip(bands, per_band):
        rooms = _split_span(rng, c0, c1, k, min_room, _WALL)
        for x0, x1 in rooms:
            cells[b0:b1, x0:x1] = FREE
            dw = int(rng.integers(door_lo, door_hi + 1))
            dw = min(dw, x1 - x0 - 2)
            dx = int(rng.integers(x0 + 1, x1 - dw))
            if b1 <= hall[0]:
                cells[b1:hall[0], dx:dx + dw] = FREE
            else:
                cells[hall[1]:b0, dx:dx + dw] = FREE
        for (xa0, xa1), (xb0, xb1) in zip(rooms[:-1], rooms[1:]):
            if rng.random() < 0.5:
                dw = min(int(rng.integers(door_lo, door_hi + 1)), b1 - b0 - 2)
                dy = int(rng.integers(b0 + 1, b1 - dw))
                cells[dy:dy + dw, xa1:xb0] = FREE
    return int(np.count_nonzero(cells[r0:r1, c0:c1]))


def _place_furniture(rng, cells, budget, clearance_cells, attempts=600):
    h, w = cells.shape
    placed = 0
    for _ in range(attempts):
        if placed >= budget:
            break
        bh = int(rng.integers(4, 13))
        bw = int(rng.integers(4, 13))
        if bh > h - 2 or bw > w - 2:
            continue
        r = int(rng.integers(1, h - bh))
        c = int(rng.integers(1, w - bw))
        patch = cells[r:r + bh, c:c + bw]
        if patch.any():
            continue
        patch[:] = OBSTACLE
        free = cells == FREE
        clear = ndimage.distance_transform_edt(free) >= clearance_cells - 1e-9
        if free_components(free) != 1 or free_components(clear) != 1:
            patch[:] = FREE
            continue
        placed += bh * bw
    return placed


def generate_floorplan(spec: FloorplanSpec) -> OccupancyGrid:
    """Rooms off a central hallway plus scattered rectangular furniture.

    Deterministic in ``spec.seed``. Retries with derived seeds until the FREE
    region (and its clearance-eroded core) is one component and the
    navigable area is within 20% of ``spec.target_area``.
    """
    spec.validate()
    res = spec.resolution
    W = int(round(spec.width_m / res))
    H = int(round(spec.height_m / res))
    if min(W, H) < 3:
        raise ValueError("bounds too small for the resolution")
    scene_id = spec.scene_id or f"scene-{spec.seed}"
    transpose = H > W
    if transpose:
        W, H = H, W
    interior = (W - 2) * (H - 2)
    target = spec.target_area
    clearance_cells = spec.clearance / res

    for attempt in range(spec.max_retries + 1):
        rng = make_rng(derive_seed(spec.seed, "floorplan", attempt))
        cells = np.ones((H, W), np.uint8)
        cells[1:-1, 1:-1] = FREE
        if spec.obstacle_density > 0:
            walls = _carve_layout(rng, cells, spec, res)
            budget = int(spec.obstacle_density * interior) - walls
            if budget > 0:
                _place_furniture(rng, cells, budget, clearance_cells)
        free = cells == FREE
        clear = ndimage.distance_transform_edt(free) >= clearance_cells - 1e-9
        area = np.count_nonzero(free) * res * res
        if free_components(free) == 1 and free_components(clear) == 1 and abs(area - target) <= 0.2 * target:
            if transpose:
                cells = np.ascontiguousarray(cells.T)
            if attempt:
                log.debug("floorplan %s accepted after %d retries", scene_id, attempt)
            return OccupancyGrid(scene_id, res, cells)
    raise FloorplanError(f"no admissible floorplan for seed {spec.seed}", spec.max_retries)


# ---------------------------------------------------------------- geometry


def _checked_cell(grid, p, clearance):
    r, c = grid.cell_of(p)
    if not grid.clear(clearance)[r, c]:
        raise OnObstacleError(f"point {tuple(p)} is not FREE with {clearance} m clearance")
    return r, c


def geodesic_distance(grid: OccupancyGrid, a: Point2D, b: Point2D, clearance: float = DEFAULT_CLEARANCE) -> float:
    """Shortest 8-connected FREE-cell path length in meters, or ``UNREACHABLE``."""
    ra, ca = _checked_cell(grid, a, clearance)
    rb, cb = _checked_cell(grid, b, clearance)
    if (ra, ca) == (rb, cb):
        return 0.0
    return geodesic_cells(grid, (ra, ca), [(rb, cb)])[0]


def geodesic_cells(grid: OccupancyGrid, source, targets, mask=None) -> np.ndarray:
    """Geodesic meters from one source cell to each target cell (``inf`` if unreachable)."""
    mask = grid.free if mask is None else mask
    targets = np.asarray(targets, dtype=np.int64).reshape(-1, 2)
    d = kernels.source_to_targets(mask.view(np.uint8), source[0], source[1], targets[:, 0], targets[:, 1])
    return d * grid.resolution


def distance_field(grid: OccupancyGrid, sources: Sequence[Point2D], cutoff: float = math.inf, mask=None):
    """Geodesic field in meters from the nearest of ``sources``; returns ``(dist, owner)``."""
    mask = grid.free if mask is None else mask
    cells = np.array([grid.cell_of(p) for p in sources], dtype=np.int64).reshape(-1, 2)
    dist, owner = kernels.distance_field(
        mask.view(np.uint8), cells[:, 0], cells[:, 1], cutoff / grid.resolution
    )
    return dist * grid.resolution, owner


def line_traversable(grid: OccupancyGrid, a: Point2D, b: Point2D, clearance: float = DEFAULT_CLEARANCE) -> bool:
    """True iff every cell the segment a->b passes through is FREE with ``clearance``.

    Equivalent to point sampling along the segment in the limit of zero
    spacing, so it also holds for any sampling at spacing <= res/2.
    """
    return bool(segments_traversable(grid, [(a, b)], clearance)[0])


def segments_traversable(grid: OccupancyGrid, segments, clearance: float = DEFAULT_CLEARANCE) -> np.ndarray:
    segs = np.asarray(segments, dtype=np.float64).reshape(-1, 4) / grid.resolution
    return kernels.segments_clear(grid.clear(clearance), segs)


def sample_navigable_points(
    grid: OccupancyGrid,
    min_geo_sep: float = 0.4,
    seed: int = 0,
    clearance: float = DEFAULT_CLEARANCE,
) -> list[Point2D]:
    """Dart-throw cell centers with a geodesic separation floor.

    Candidates are uniform draws over clear cells; a draw is rejected when it
    lies within ``min_geo_sep`` (geodesic, inclusive) of an accepted point.
    The draw budget is ``50 * navigable_area / min_geo_sep**2``.
    """
    if not min_geo_sep > 0:
        raise ValueError("min_geo_sep must be positive")
    clear = grid.clear(clearance)
    rows, cols = np.nonzero(clear)
    if rows.size == 0:
        log.warning("scene %s has no admissible viewpoint cell", grid.scene_id)
        return []
    budget = int(math.ceil(50 * navigable_area(grid) / min_geo_sep**2))
    rng = make_rng(seed, "sample-viewpoints")
    draws = rng.integers(0, rows.size, size=budget)
    blocked = np.zeros(clear.shape, bool)
    free8 = grid.free.view(np.uint8)
    cutoff = min_geo_sep / grid.resolution + 1e-9
    out = []
    for k in draws:
        r, c = int(rows[k]), int(cols[k])
        if blocked[r, c]:
            continue
        out.append(grid.center_of(r, c))
        dist, _ = kernels.distance_field(free8, np.array([r]), np.array([c]), cutoff)
        blocked |= np.isfinite(dist)
    return out


# ---------------------------------------------------------------- raster I/O


def dumps_grid(grid: OccupancyGrid) -> str:
    lines = [
        f"{GRID_FORMAT} {GRID_VERSION}",
        f"scene_id {grid.scene_id}",
        f"width {grid.width}",
        f"height {grid.height}",
        f"resolution {grid.resolution!r}",
    ]
    table = np.array([".", "#"])
    for row in grid.cells:
        lines.append("".join(table[row]))
    return "\n".join(lines) + "\n"


def loads_grid(text: str) -> OccupancyGrid:
    lines = text.splitlines()
    if len(lines) < 5:
        raise GridError("truncated grid file")
    tag = lines[0].split()
    if len(tag) != 2 or tag[0] != GRID_FORMAT:
        raise GridError("not a navgen grid file")
    if int(tag[1]) != GRID_VERSION:
        raise GridError(f"unsupported grid version {tag[1]}")
    header = {}
    for line in lines[1:5]:
        key, _, value = line.partition(" ")
        header[key] = value
    w, h = int(header["width"]), int(header["height"])
    body = lines[5:5 + h]
    if len(body) != h or any(len(row) != w for row in body):
        raise GridError("raster body does not match width/height")
    try:
        cells = np.array([[".#".index(ch) for ch in row] for row in body], dtype=np.uint8)
    except ValueError:
        raise GridError("raster contains characters other than '.' and '#'") from None
    return OccupancyGrid(header["scene_id"], float(header["resolution"]), cells)


def save_grid(grid: OccupancyGrid, path) -> None:
    Path(path).write_text(dumps_grid(grid))


def load_grid(path) -> OccupancyGrid:
    return loads_grid(Path(path).read_text())
