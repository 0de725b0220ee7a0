"""Occupancy-grid floorplans: generation, pathfinding, and visibility.

World coordinates are metric, with x growing east and y growing north.  Grid
cell (ix, iy) covers the half-open square [ix*res, (ix+1)*res) x
[iy*res, (iy+1)*res); numpy arrays are indexed [iy, ix].  Everything here is
a pure function of its inputs, so floorplans and path fields can be shared
across concurrent episode runs.

Movement is 8-connected with sqrt(2) diagonal cost.  A diagonal step is
blocked when both of its orthogonal neighbor cells are occupied, so paths
cannot slip through the meeting point of two wall corners.
"""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _sp_dijkstra

from .geometry import bearing_deg

SQRT2 = math.sqrt(2.0)

# Tolerance used when binning metric points into cells, so that points that
# land numerically on a cell boundary (e.g. 0.3 / 0.1 = 2.999...96) resolve
# to the intended cell.
_CELL_EPS = 1e-9

ROOM_LABELS = ("kitchen", "living_room", "bedroom", "bathroom", "office", "hallway")


class WorldError(Exception):
    """Base class for floorplan and navigation errors."""


class GenerationError(WorldError):
    """Raised when a floorplan cannot be generated from the given parameters."""


class NoPathError(WorldError):
    """Raised when no traversable path exists between two free points."""


class LocationError(WorldError):
    """Raised when a point lies in a wall or outside the grid."""


@dataclass(frozen=True)
class Pose:
    """Agent pose: metric position plus heading in degrees [0, 360)."""

    x: float
    y: float
    heading: float = 0.0

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


class OccupancyGrid:
    """Boolean occupancy over a closed rectangular world.

    ``occupied[iy, ix]`` is True for wall cells.  The outer ring of cells is
    always occupied.  Pathfinding structures are built lazily and cached on
    the instance; the grid itself is never mutated after construction.
    """

    def __init__(self, occupied: np.ndarray, resolution: float):
        if resolution <= 0:
            raise WorldError("resolution must be positive")
        occ = np.asarray(occupied, dtype=bool)
        if occ.ndim != 2:
            raise WorldError("occupancy must be a 2-D array")
        if not (occ[0, :].all() and occ[-1, :].all() and occ[:, 0].all() and occ[:, -1].all()):
            raise WorldError("boundary cells must be occupied")
        occ.setflags(write=False)
        self.occupied = occ
        self.resolution = float(resolution)
        self._graph: Optional[csr_matrix] = None
        self._nav_occupied: Optional[np.ndarray] = None
        self._nav_graph: Optional[csr_matrix] = None
        self._fields: OrderedDict[tuple[int, int, bool], "PathField"] = OrderedDict()

    @property
    def height(self) -> int:
        return self.occupied.shape[0]

    @property
    def width(self) -> int:
        return self.occupied.shape[1]

    def cell_of(self, point) -> tuple[int, int]:
        ix = int(math.floor(point[0] / self.resolution + _CELL_EPS))
        iy = int(math.floor(point[1] / self.resolution + _CELL_EPS))
        return ix, iy

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        return ((cell[0] + 0.5) * self.resolution, (cell[1] + 0.5) * self.resolution)

    def in_bounds(self, point) -> bool:
        ix, iy = self.cell_of(point)
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_free(self, point) -> bool:
        if not self.in_bounds(point):
            return False
        ix, iy = self.cell_of(point)
        return not self.occupied[iy, ix]

    def free_mask(self) -> np.ndarray:
        return ~self.occupied


@dataclass(frozen=True)
class Portal:
    """A doorway carved into a wall, linking exactly two rooms."""

    cells: tuple[tuple[int, int], ...]
    midpoint: tuple[float, float]
    rooms: tuple[int, int]

    def other_room(self, room_id: int) -> int:
        a, b = self.rooms
        return b if room_id == a else a


class RoomMap:
    """Per-cell room assignment plus room labels.

    ``cells[iy, ix]`` holds a room id for free cells and -1 for walls.
    Portal cells are free and assigned to the lower-id room they connect,
    which keeps ``room_of`` deterministic on doorways.
    """

    def __init__(self, cells: np.ndarray, labels: Sequence[str], resolution: float):
        arr = np.asarray(cells, dtype=np.int32)
        arr.setflags(write=False)
        self.cells = arr
        self.labels = tuple(labels)
        self.resolution = float(resolution)

    @property
    def n_rooms(self) -> int:
        return len(self.labels)

    def room_ids(self) -> tuple[int, ...]:
        return tuple(range(self.n_rooms))


def room_of(rooms: RoomMap, point) -> int:
    """Room id containing ``point``; raises LocationError off free space."""
    ix = int(math.floor(point[0] / rooms.resolution + _CELL_EPS))
    iy = int(math.floor(point[1] / rooms.resolution + _CELL_EPS))
    h, w = rooms.cells.shape
    if not (0 <= ix < w and 0 <= iy < h):
        raise LocationError(f"point {point} outside the grid")
    rid = int(rooms.cells[iy, ix])
    if rid < 0:
        raise LocationError(f"point {point} lies in a wall cell")
    return rid


class Floorplan:
    """Occupancy grid + room map + doorway portals for one home."""

    def __init__(self, grid: OccupancyGrid, rooms: RoomMap, portals: Sequence[Portal]):
        self.grid = grid
        self.rooms = rooms
        self.portals = tuple(portals)
        self._portal_cells = {c: p for p in self.portals for c in p.cells}
        self._centroids = self._compute_centroids()

    # -- room geometry -------------------------------------------------

    def _compute_centroids(self) -> tuple[tuple[float, float], ...]:
        cents = []
        res = self.grid.resolution
        for rid in range(self.rooms.n_rooms):
            ys, xs = np.nonzero(self.room_interior_mask(rid))
            cx, cy = xs.mean(), ys.mean()
            # snap to the interior cell nearest the mean, so the centroid is
            # always navigable
            k = int(np.argmin((xs - cx) ** 2 + (ys - cy) ** 2))
            cents.append(((xs[k] + 0.5) * res, (ys[k] + 0.5) * res))
        return tuple(cents)

    @property
    def n_rooms(self) -> int:
        return self.rooms.n_rooms

    def room_ids(self) -> tuple[int, ...]:
        return self.rooms.room_ids()

    def room_label(self, room_id: int) -> str:
        return self.rooms.labels[room_id]

    def room_centroid(self, room_id: int) -> tuple[float, float]:
        return self._centroids[room_id]

    def room_mask(self, room_id: int) -> np.ndarray:
        return self.rooms.cells == room_id

    def room_interior_mask(self, room_id: int) -> np.ndarray:
        """Free cells of a room excluding its doorway (portal) cells."""
        mask = self.room_mask(room_id).copy()
        for (ix, iy) in self._portal_cells:
            mask[iy, ix] = False
        return mask

    def portal_at(self, cell: tuple[int, int]) -> Optional[Portal]:
        return self._portal_cells.get(cell)

    def portals_of_room(self, room_id: int) -> tuple[Portal, ...]:
        return tuple(p for p in self.portals if room_id in p.rooms)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        occ_rows = ["".join("#" if v else "." for v in row) for row in self.grid.occupied]
        room_rows = [
            "".join("-" if v < 0 else np.base_repr(v, 36).lower() for v in row)
            for row in self.rooms.cells
        ]
        return {
            "resolution": self.grid.resolution,
            "occupancy": occ_rows,
            "room_cells": room_rows,
            "rooms": [
                {"id": i, "label": self.rooms.labels[i], "centroid": list(self._centroids[i])}
                for i in range(self.n_rooms)
            ],
            "portals": [
                {
                    "cells": [list(c) for c in p.cells],
                    "midpoint": list(p.midpoint),
                    "rooms": list(p.rooms),
                }
                for p in self.portals
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Floorplan":
        res = float(doc["resolution"])
        occ = np.array([[ch == "#" for ch in row] for row in doc["occupancy"]], dtype=bool)
        cells = np.array(
            [[-1 if ch == "-" else int(ch, 36) for ch in row] for row in doc["room_cells"]],
            dtype=np.int32,
        )
        labels = [r["label"] for r in sorted(doc["rooms"], key=lambda r: r["id"])]
        portals = [
            Portal(
                cells=tuple((int(x), int(y)) for x, y in p["cells"]),
                midpoint=(float(p["midpoint"][0]), float(p["midpoint"][1])),
                rooms=(int(p["rooms"][0]), int(p["rooms"][1])),
            )
            for p in doc["portals"]
        ]
        return cls(OccupancyGrid(occ, res), RoomMap(cells, labels, res), portals)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Floorplan":
        return cls.from_dict(json.loads(text))


def validate_floorplan(plan: Floorplan) -> None:
    """Check structural invariants; raises WorldError on violation."""
    occ = plan.grid.occupied
    cells = plan.rooms.cells
    if ((cells >= 0) != ~occ).any():
        raise WorldError("free cells and room cells disagree")
    # portal graph connects all rooms
    adj: dict[int, set[int]] = {r: set() for r in plan.room_ids()}
    for p in plan.portals:
        a, b = p.rooms
        adj[a].add(b)
        adj[b].add(a)
    seen = {0}
    stack = [0]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != plan.n_rooms:
        raise WorldError("portal graph does not connect all rooms")
    # distinct rooms may touch orthogonally only through portal cells
    portal_mask = np.zeros_like(occ)
    for (ix, iy) in plan._portal_cells:
        portal_mask[iy, ix] = True
    for dy, dx in ((0, 1), (1, 0)):
        a = cells[: cells.shape[0] - dy, : cells.shape[1] - dx]
        b = cells[dy:, dx:]
        pa = portal_mask[: cells.shape[0] - dy, : cells.shape[1] - dx]
        pb = portal_mask[dy:, dx:]
        bad = (a >= 0) & (b >= 0) & (a != b) & ~pa & ~pb
        if bad.any():
            raise WorldError("rooms touch outside a portal")


# ---------------------------------------------------------------------------
# pathfinding
# ---------------------------------------------------------------------------

_STRAIGHT = ((1, 0), (-1, 0), (0, 1), (0, -1))
_DIAGONAL = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _shift(a: np.ndarray, dx: int, dy: int, fill) -> np.ndarray:
    """Array whose cell (iy, ix) holds a[iy+dy, ix+dx]; out of bounds -> fill."""
    h, w = a.shape
    out = np.full_like(a, fill)
    sx0, sx1 = max(0, dx), w + min(0, dx)
    sy0, sy1 = max(0, dy), h + min(0, dy)
    dx0, dx1 = max(0, -dx), w + min(0, -dx)
    dy0, dy1 = max(0, -dy), h + min(0, -dy)
    out[dy0:dy1, dx0:dx1] = a[sy0:sy1, sx0:sx1]
    return out


def _edges_from(occ: np.ndarray, resolution: float) -> csr_matrix:
    free = ~occ
    h, w = occ.shape
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    rows, cols, data = [], [], []
    for dx, dy in _STRAIGHT + _DIAGONAL:
        ok = free & _shift(free, dx, dy, False)
        if (dx, dy) in _DIAGONAL:
            ok &= ~(_shift(occ, dx, 0, True) & _shift(occ, 0, dy, True))
        src = idx[ok]
        rows.append(src)
        cols.append(src + dy * w + dx)
        weight = resolution * (SQRT2 if (dx, dy) in _DIAGONAL else 1.0)
        data.append(np.full(src.shape, weight))
    return csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(h * w, h * w),
    )


def _cell_graph(grid: OccupancyGrid) -> csr_matrix:
    if grid._graph is None:
        grid._graph = _edges_from(grid.occupied, grid.resolution)
    return grid._graph


def nav_occupied(grid: OccupancyGrid) -> np.ndarray:
    """Occupancy dilated by one cell, used for clearance-aware motion planning.

    An agent pose drifts up to half a cell off its planned line, so planning
    against walls inflated by one cell keeps executed motion collision-free.
    """
    if grid._nav_occupied is None:
        occ = grid.occupied
        out = occ.copy()
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx or dy:
                    out |= _shift(occ, dx, dy, False)
        out.setflags(write=False)
        grid._nav_occupied = out
    return grid._nav_occupied


def _nav_graph(grid: OccupancyGrid) -> csr_matrix:
    if grid._nav_graph is None:
        grid._nav_graph = _edges_from(nav_occupied(grid), grid.resolution)
    return grid._nav_graph


class PathField:
    """Single-source shortest-path distances and predecessors over a grid.

    One field answers distance and path queries to every reachable cell,
    which lets an agent score all candidate rooms from one Dijkstra run.
    """

    def __init__(self, grid: OccupancyGrid, start_cell: tuple[int, int], nav: bool = False):
        if grid.occupied[start_cell[1], start_cell[0]]:
            raise LocationError(f"path source cell {start_cell} is occupied")
        self.grid = grid
        self.start_cell = start_cell
        self.nav = nav
        start = start_cell[1] * grid.width + start_cell[0]
        graph = _nav_graph(grid) if nav else _cell_graph(grid)
        dist, pred = _sp_dijkstra(
            graph, indices=start, return_predecessors=True, directed=True
        )
        self._dist = dist
        self._pred = pred

    def _node(self, point) -> int:
        ix, iy = self.grid.cell_of(point)
        if not (0 <= ix < self.grid.width and 0 <= iy < self.grid.height):
            raise LocationError(f"point {point} outside the grid")
        return iy * self.grid.width + ix

    def distance_to(self, point) -> float:
        """Shortest-path distance in meters; inf when unreachable."""
        return float(self._dist[self._node(point)])

    def cells_to(self, point) -> list[tuple[int, int]]:
        """Cell sequence from the source cell to ``point``'s cell."""
        node = self._node(point)
        if not np.isfinite(self._dist[node]):
            raise NoPathError(f"no path to {point}")
        w = self.grid.width
        chain = [node]
        while self._pred[node] >= 0:
            node = int(self._pred[node])
            chain.append(node)
        chain.reverse()
        return [(n % w, n // w) for n in chain]


def _path_length_m(cells: Sequence[tuple[int, int]], resolution: float) -> float:
    """Exact length of a cell path: counts straight and diagonal steps.

    Any two optimal 8-connected paths between the same cells share the same
    step counts, so this is reproducible across path-finder implementations.
    """
    straight = diagonal = 0
    for (ax, ay), (bx, by) in zip(cells, cells[1:]):
        if ax != bx and ay != by:
            diagonal += 1
        else:
            straight += 1
    return resolution * (straight + diagonal * SQRT2)


def path_field(grid: OccupancyGrid, from_point, nav: bool = False) -> PathField:
    """Cached single-source field for ``from_point``'s cell.

    With ``nav=True`` the field runs on the wall-inflated grid used for
    agent motion planning.
    """
    cell = grid.cell_of(from_point)
    key = (cell[0], cell[1], nav)
    cached = grid._fields.get(key)
    if cached is not None:
        grid._fields.move_to_end(key)
        return cached
    f = PathField(grid, cell, nav=nav)
    grid._fields[key] = f
    while len(grid._fields) > 32:
        grid._fields.popitem(last=False)
    return f


def nearest_nav_cell(grid: OccupancyGrid, point) -> tuple[int, int]:
    """Nearest cell that stays one full cell clear of every wall."""
    free = ~nav_occupied(grid)
    ys, xs = np.nonzero(free)
    if len(xs) == 0:
        raise NoPathError("grid has no clearance cells at all")
    res = grid.resolution
    d2 = ((xs + 0.5) * res - point[0]) ** 2 + ((ys + 0.5) * res - point[1]) ** 2
    k = int(np.argmin(d2))
    return int(xs[k]), int(ys[k])


def motion_clear(grid: OccupancyGrid, from_point, to_point) -> bool:
    """Whether a short motion segment stays out of walls.

    Samples at quarter-cell spacing, so crossing a wall cell is always
    caught while grazing a corner (which the 8-connected movement model
    permits) is not flagged.
    """
    dist = math.dist(from_point, to_point)
    n = max(1, int(math.ceil(dist / (grid.resolution / 4.0))))
    occ = grid.occupied
    h, w = occ.shape
    for i in range(1, n + 1):
        t = i / n
        px = from_point[0] + (to_point[0] - from_point[0]) * t
        py = from_point[1] + (to_point[1] - from_point[1]) * t
        ix = int(math.floor(px / grid.resolution + _CELL_EPS))
        iy = int(math.floor(py / grid.resolution + _CELL_EPS))
        if not (0 <= ix < w and 0 <= iy < h) or occ[iy, ix]:
            return False
    return True


def shortest_path(grid: OccupancyGrid, from_point, to_point) -> tuple[list[tuple[float, float]], float]:
    """Optimal 8-connected path between two free points.

    Returns the cell-center waypoint list and its metric length.  The two
    endpoints must be in free space; unreachable goals raise NoPathError.
    """
    for p in (from_point, to_point):
        if not grid.is_free(p):
            raise LocationError(f"point {p} is not in free space")
    if grid.cell_of(from_point) == grid.cell_of(to_point):
        return [tuple(from_point)], 0.0
    cells = path_field(grid, from_point).cells_to(to_point)
    return [grid.cell_center(c) for c in cells], _path_length_m(cells, grid.resolution)


def line_of_sight(grid: OccupancyGrid, from_point, to_point) -> bool:
    """True iff the open segment between the points crosses no occupied cell.

    Uses a conservative voxel traversal: when the segment passes exactly
    through a cell corner, both adjacent cells are checked.
    """
    for p in (from_point, to_point):
        if not grid.in_bounds(p):
            return False
    x0, y0 = float(from_point[0]), float(from_point[1])
    x1, y1 = float(to_point[0]), float(to_point[1])
    res = grid.resolution
    occ = grid.occupied
    ix, iy = grid.cell_of(from_point)
    gx, gy = grid.cell_of(to_point)
    if occ[iy, ix] or occ[gy, gx]:
        return False
    dx = x1 - x0
    dy = y1 - y0
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    # parametric distance to the next vertical / horizontal cell boundary
    if dx != 0:
        nx = (ix + (1 if step_x > 0 else 0)) * res
        t_max_x = (nx - x0) / dx
        t_dx = abs(res / dx)
    else:
        t_max_x, t_dx = math.inf, math.inf
    if dy != 0:
        ny = (iy + (1 if step_y > 0 else 0)) * res
        t_max_y = (ny - y0) / dy
        t_dy = abs(res / dy)
    else:
        t_max_y, t_dy = math.inf, math.inf
    while (ix, iy) != (gx, gy):
        if abs(t_max_x - t_max_y) < 1e-12:
            # exact corner crossing: conservatively require both side cells free
            if occ[iy, ix + step_x] or occ[iy + step_y, ix]:
                return False
            ix += step_x
            iy += step_y
            t_max_x += t_dx
            t_max_y += t_dy
        elif t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_dx
        else:
            iy += step_y
            t_max_y += t_dy
        if occ[iy, ix]:
            return False
    return True


def initial_route_bearing(plan: Floorplan, from_point, to_point) -> float:
    """Bearing of the first leg of the shortest path toward ``to_point``.

    Within a single room this is the direct bearing.  Across rooms it is the
    bearing toward the midpoint of the first doorway the path crosses, which
    is also how sound propagating from another room is perceived.
    """
    start_room = room_of(plan.rooms, from_point)
    if room_of(plan.rooms, to_point) == start_room:
        return bearing_deg(from_point, to_point)
    cells = path_field(plan.grid, from_point).cells_to(to_point)
    start_portal = plan.portal_at(cells[0])
    for cell in cells[1:]:
        portal = plan.portal_at(cell)
        if portal is not None and portal is not start_portal:
            return bearing_deg(from_point, portal.midpoint)
        if portal is None and int(plan.rooms.cells[cell[1], cell[0]]) != start_room:
            # crossed into another room without touching a portal cell
            # (possible only on hand-built maps); aim at the crossing cell
            return bearing_deg(from_point, plan.grid.cell_center(cell))
    return bearing_deg(from_point, to_point)


# ---------------------------------------------------------------------------
# procedural generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationParams:
    """Knobs for the rectangular-subdivision floorplan generator."""

    room_count: tuple[int, int] = (5, 9)
    area_m2: tuple[float, float] = (93.0, 140.0)
    resolution: float = 0.1
    min_room_m: float = 1.8
    door_width_m: float = 0.7
    extra_door_prob: float = 0.15
    aspect: tuple[float, float] = (0.6, 0.95)
    max_retries: int = 25


_GEN_STREAM = 0x70A1


def _split_rects(rng, w: int, h: int, n_rooms: int, min_cells: int):
    """Recursively split the interior rectangle into n_rooms sub-rectangles.

    Rectangles are half-open (x0, y0, x1, y1) in interior coordinates; a one
    cell wall line is reserved at every split.  Returns None when the target
    count cannot be reached.
    """
    rects = [(0, 0, w, h)]
    while len(rects) < n_rooms:
        order = sorted(range(len(rects)), key=lambda i: -(rects[i][2] - rects[i][0]) * (rects[i][3] - rects[i][1]))
        for i in order:
            x0, y0, x1, y1 = rects[i]
            rw, rh = x1 - x0, y1 - y0
            can_v = rw >= 2 * min_cells + 1
            can_h = rh >= 2 * min_cells + 1
            if not (can_v or can_h):
                continue
            if can_v and (not can_h or rw >= rh):
                s = int(rng.integers(min_cells, rw - min_cells))
                rects[i] = (x0, y0, x0 + s, y1)
                rects.append((x0 + s + 1, y0, x1, y1))
            else:
                s = int(rng.integers(min_cells, rh - min_cells))
                rects[i] = (x0, y0, x1, y0 + s)
                rects.append((x0, y0 + s + 1, x1, y1))
            break
        else:
            return None
    return rects


def _door_sites(cells: np.ndarray):
    """Wall cells with two distinct rooms on opposite orthogonal sides.

    Returns {(room_a, room_b): {('v'|'h', line coord): [run coords]}} where
    runs are the sorted perpendicular coordinates of candidate cells.
    """
    h, w = cells.shape
    sites: dict[tuple[int, int], dict[tuple[str, int], list[int]]] = {}
    for iy in range(1, h - 1):
        for ix in range(1, w - 1):
            if cells[iy, ix] >= 0:
                continue
            left, right = cells[iy, ix - 1], cells[iy, ix + 1]
            up, down = cells[iy - 1, ix], cells[iy + 1, ix]
            if left >= 0 and right >= 0 and left != right:
                pair = (min(left, right), max(left, right))
                sites.setdefault(pair, {}).setdefault(("v", ix), []).append(iy)
            elif up >= 0 and down >= 0 and up != down:
                pair = (min(up, down), max(up, down))
                sites.setdefault(pair, {}).setdefault(("h", iy), []).append(ix)
    return sites


def _contiguous_runs(values: list[int]) -> list[list[int]]:
    runs: list[list[int]] = []
    for v in sorted(values):
        if runs and v == runs[-1][-1] + 1:
            runs[-1].append(v)
        else:
            runs.append([v])
    return runs


def _carve_door(rng, occ, cells, pair, segments, door_cells: int):
    """Carve one doorway for a room pair; returns a Portal or None."""
    runs = []
    for (orient, line), coords in segments.items():
        for run in _contiguous_runs(coords):
            if len(run) >= 2:
                runs.append((orient, line, run))
    if not runs:
        return None
    orient, line, run = runs[int(rng.integers(len(runs)))]
    width = min(door_cells, len(run))
    start = int(rng.integers(0, len(run) - width + 1))
    chosen = run[start : start + width]
    owner = pair[0]
    carved = []
    for c in chosen:
        ix, iy = (line, c) if orient == "v" else (c, line)
        occ[iy, ix] = False
        cells[iy, ix] = owner
        carved.append((ix, iy))
    return carved


def generate_floorplan(seed: int, params: GenerationParams = GenerationParams()) -> Floorplan:
    """Generate a connected multi-room floorplan, deterministic in (seed, params)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _GEN_STREAM]))
    res = params.resolution
    min_cells = max(2, int(round(params.min_room_m / res)))
    door_cells = max(2, int(round(params.door_width_m / res)))
    lo, hi = params.room_count
    if lo < 1 or hi < lo:
        raise GenerationError(f"invalid room-count range {params.room_count}")

    for _ in range(params.max_retries):
        n_rooms = int(rng.integers(lo, hi + 1))
        area = float(rng.uniform(*params.area_m2))
        aspect = float(rng.uniform(*params.aspect))
        w = int(round(math.sqrt(area / aspect) / res))
        h = int(round(area / (w * res) / res))
        if n_rooms * (min_cells + 1) ** 2 > w * h:
            continue
        rects = _split_rects(rng, w, h, n_rooms, min_cells)
        if rects is None:
            continue
        rects.sort(key=lambda r: (r[1], r[0]))

        occ = np.ones((h + 2, w + 2), dtype=bool)
        cells = np.full((h + 2, w + 2), -1, dtype=np.int32)
        for rid, (x0, y0, x1, y1) in enumerate(rects):
            occ[y0 + 1 : y1 + 1, x0 + 1 : x1 + 1] = False
            cells[y0 + 1 : y1 + 1, x0 + 1 : x1 + 1] = rid

        sites = _door_sites(cells)
        # spanning tree over the adjacency graph, randomized edge order
        pairs = list(sites.keys())
        rng.shuffle(pairs)
        parent = list(range(n_rooms))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        portals: list[Portal] = []
        extra_pairs = []
        ok = True
        for pair in pairs:
            if find(pair[0]) != find(pair[1]):
                carved = _carve_door(rng, occ, cells, pair, sites[pair], door_cells)
                if carved is None:
                    continue
                parent[find(pair[0])] = find(pair[1])
                portals.append(_portal_from_cells(carved, pair, res))
            else:
                extra_pairs.append(pair)
        if len({find(r) for r in range(n_rooms)}) != 1:
            ok = False
        if not ok:
            continue
        for pair in extra_pairs:
            if rng.random() < params.extra_door_prob:
                carved = _carve_door(rng, occ, cells, pair, sites[pair], door_cells)
                if carved is not None:
                    portals.append(_portal_from_cells(carved, pair, res))

        labels = _assign_labels(rng, n_rooms)
        plan = Floorplan(
            OccupancyGrid(occ, res),
            RoomMap(cells, labels, res),
            portals,
        )
        validate_floorplan(plan)
        return plan
    raise GenerationError(
        f"could not generate a plan for {params} after {params.max_retries} attempts"
    )


def _portal_from_cells(carved, pair, res: float) -> Portal:
    xs = [(ix + 0.5) * res for ix, _ in carved]
    ys = [(iy + 0.5) * res for _, iy in carved]
    return Portal(
        cells=tuple(sorted(carved)),
        midpoint=(sum(xs) / len(xs), sum(ys) / len(ys)),
        rooms=(pair[0], pair[1]),
    )


def _assign_labels(rng, n_rooms: int) -> list[str]:
    base = list(ROOM_LABELS)
    perm = [base[i] for i in rng.permutation(len(base))]
    if n_rooms <= len(perm):
        labels = perm[:n_rooms]
    else:
        extras = ["bedroom", "office", "living_room"]
        labels = perm + [extras[int(rng.integers(len(extras)))] for _ in range(n_rooms - len(perm))]
    if "kitchen" not in labels:
        labels[int(rng.integers(n_rooms))] = "kitchen"
    return labels


def floorplan_from_ascii(art: Sequence[str], resolution: float = 0.1,
                         labels: Optional[dict[str, str]] = None) -> Floorplan:
    """Build a floorplan from ASCII art, mainly for tests and docs.

    ``#`` is a wall, ``+`` a portal cell, and any other character names a
    room.  The first art row is the northernmost (highest y).  Room ids are
    assigned by sorted character; ``labels`` maps characters to room labels.
    """
    rows = [row for row in art if row]
    width = max(len(r) for r in rows)
    rows = [r.ljust(width, "#") for r in rows]
    h, w = len(rows), width
    occ = np.ones((h, w), dtype=bool)
    cells = np.full((h, w), -1, dtype=np.int32)
    keys = sorted({ch for row in rows for ch in row if ch not in "#+"})
    key_id = {k: i for i, k in enumerate(keys)}
    portal_cells = []
    for ry, row in enumerate(rows):
        iy = h - 1 - ry
        for ix, ch in enumerate(row):
            if ch == "#":
                continue
            occ[iy, ix] = False
            if ch == "+":
                portal_cells.append((ix, iy))
            else:
                cells[iy, ix] = key_id[ch]
    # group portal cells into connected doorways and resolve their two rooms
    portals = []
    remaining = set(portal_cells)
    while remaining:
        seedc = remaining.pop()
        group = [seedc]
        frontier = [seedc]
        while frontier:
            cx, cy = frontier.pop()
            for dx, dy in _STRAIGHT:
                nb = (cx + dx, cy + dy)
                if nb in remaining:
                    remaining.remove(nb)
                    group.append(nb)
                    frontier.append(nb)
        rooms = set()
        for cx, cy in group:
            for dx, dy in _STRAIGHT:
                v = cells[cy + dy, cx + dx] if 0 <= cy + dy < h and 0 <= cx + dx < w else -1
                if v >= 0:
                    rooms.add(int(v))
        if len(rooms) != 2:
            raise WorldError(f"portal at {group} must touch exactly two rooms, got {rooms}")
        pair = (min(rooms), max(rooms))
        for cx, cy in group:
            cells[cy, cx] = pair[0]
        portals.append(_portal_from_cells(group, pair, resolution))
    label_list = []
    for k in keys:
        if labels and k in labels:
            label_list.append(labels[k])
        else:
            label_list.append(ROOM_LABELS[key_id[k] % len(ROOM_LABELS)])
    plan = Floorplan(OccupancyGrid(occ, resolution), RoomMap(cells, label_list, resolution), portals)
    validate_floorplan(plan)
    return plan
