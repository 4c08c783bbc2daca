"""Online occupancy mapping, frontier extraction and wavefront planning."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import geometry
from .simcore import Action, AgentPose

UNKNOWN, FREE, OBSTACLE = 0, 1, 2

_EIGHT = np.ones((3, 3), dtype=int)
_STEER_TOL = 1e-6
_PLAN_MARGIN = 3  # unknown cells kept beyond the outermost observed cell


class PlanningError(RuntimeError):
    pass


class OccupancyMap:
    """Three-state lattice anchored at a world-frame origin (multiple of the cell size)."""

    def __init__(self, shape: tuple[int, int], cell_size: float = 0.25,
                 origin: tuple[float, float] = (0.0, 0.0)):
        self.state = np.zeros(shape, dtype=np.int8)
        self.cell_size = float(cell_size)
        self.origin = (float(origin[0]), float(origin[1]))

    @classmethod
    def covering(cls, xmin: float, ymin: float, xmax: float, ymax: float,
                 cell_size: float = 0.25, margin: float = 0.0) -> "OccupancyMap":
        c0 = math.floor((xmin - margin) / cell_size)
        r0 = math.floor((ymin - margin) / cell_size)
        c1 = math.floor((xmax + margin) / cell_size) + 1
        r1 = math.floor((ymax + margin) / cell_size) + 1
        return cls((r1 - r0, c1 - c0), cell_size, (c0 * cell_size, r0 * cell_size))

    @property
    def shape(self) -> tuple[int, int]:
        return self.state.shape

    def copy(self) -> "OccupancyMap":
        m = OccupancyMap(self.shape, self.cell_size, self.origin)
        m.state = self.state.copy()
        return m

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((y - self.origin[1]) / self.cell_size)),
                int(math.floor((x - self.origin[0]) / self.cell_size)))

    def center_of(self, r: int, c: int) -> tuple[float, float]:
        return (self.origin[0] + (c + 0.5) * self.cell_size,
                self.origin[1] + (r + 0.5) * self.cell_size)

    def in_bounds(self, r: int, c: int) -> bool:
        H, W = self.shape
        return 0 <= r < H and 0 <= c < W

    def ensure_contains(self, x: float, y: float, margin: float = 0.0) -> None:
        """Grow (pad with unknown) so the square of half-size ``margin`` around the point fits."""
        H, W = self.shape
        cs = self.cell_size
        r_lo, c_lo = self.cell_of(x - margin, y - margin)
        r_hi, c_hi = self.cell_of(x + margin, y + margin)
        top, left = max(0, -r_lo), max(0, -c_lo)
        bottom, right = max(0, r_hi - H + 1), max(0, c_hi - W + 1)
        if top or left or bottom or right:
            self.state = np.pad(self.state, ((top, bottom), (left, right)),
                                constant_values=UNKNOWN)
            self.origin = (self.origin[0] - left * cs, self.origin[1] - top * cs)

    def pad_known(self, margin: int) -> None:
        """Grow so that at least ``margin`` cells lie between observed cells and the edge."""
        rows = np.flatnonzero((self.state != UNKNOWN).any(axis=1))
        if len(rows) == 0:
            return
        cols = np.flatnonzero((self.state != UNKNOWN).any(axis=0))
        H, W = self.shape
        top, left = max(0, margin - rows[0]), max(0, margin - cols[0])
        bottom, right = max(0, rows[-1] + margin + 1 - H), max(0, cols[-1] + margin + 1 - W)
        if top or left or bottom or right:
            cs = self.cell_size
            self.state = np.pad(self.state, ((top, bottom), (left, right)),
                                constant_values=UNKNOWN)
            self.origin = (self.origin[0] - left * cs, self.origin[1] - top * cs)

    def explored_area(self) -> float:
        return float(np.count_nonzero(self.state == FREE)) * self.cell_size ** 2

    def unknown_count(self) -> int:
        return int(np.count_nonzero(self.state == UNKNOWN))

    def mark_obstacle(self, x: float, y: float) -> None:
        self.ensure_contains(x, y)
        r, c = self.cell_of(x, y)
        self.state[r, c] = OBSTACLE

    def to_ascii(self) -> str:
        chars = np.array([" ", ".", "#"])[self.state]
        return "\n".join("".join(row) for row in chars[::-1])

    def to_pgm(self) -> bytes:
        H, W = self.shape
        px = np.array([128, 255, 0], dtype=np.uint8)[self.state][::-1]
        return f"P5\n{W} {H}\n255\n".encode() + px.tobytes()


@dataclass(frozen=True)
class Frontier:
    cells: np.ndarray  # (n, 2) map rows/cols
    centroid: tuple[float, float]

    @property
    def size(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class DistanceField:
    values: np.ndarray
    origin: tuple[float, float]
    cell_size: float

    def at_cell(self, r: int, c: int) -> float:
        H, W = self.values.shape
        if 0 <= r < H and 0 <= c < W:
            return float(self.values[r, c])
        return math.inf


def integrate_scan(omap: OccupancyMap, pose: AgentPose, depth_rays: np.ndarray,
                   ray_offsets: np.ndarray, max_range: float) -> int:
    """Carve free space along each ray and mark the terminating cell (in place).
    Returns the number of cells that turned from unknown to free."""
    x, y = pose.position
    angles = pose.heading + np.asarray(ray_offsets, dtype=np.float64)
    depth_rays = np.asarray(depth_rays, dtype=np.float64)
    ex = x + (depth_rays + omap.cell_size) * np.cos(angles)
    ey = y + (depth_rays + omap.cell_size) * np.sin(angles)
    omap.ensure_contains(min(ex.min(), x), min(ey.min(), y))
    omap.ensure_contains(max(ex.max(), x), max(ey.max(), y))
    return int(geometry.integrate_rays(omap.state, omap.origin[0], omap.origin[1],
                                       omap.cell_size, float(x), float(y), angles, depth_rays,
                                       float(max_range), FREE, OBSTACLE))


def frontier_mask(state: np.ndarray) -> np.ndarray:
    """Free cells 4-adjacent to unknown space (outside the lattice counts as unknown)."""
    unknown = np.pad(state == UNKNOWN, 1, constant_values=True)
    near = (unknown[:-2, 1:-1] | unknown[2:, 1:-1] | unknown[1:-1, :-2] | unknown[1:-1, 2:])
    return (state == FREE) & near


def extract_frontiers(omap: OccupancyMap, min_size: int = 1) -> list[Frontier]:
    mask = frontier_mask(omap.state)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    out = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labels == k)
        if len(rows) < min_size:
            continue
        cells = np.stack([rows, cols], axis=1)
        cx = omap.origin[0] + (cols.mean() + 0.5) * omap.cell_size
        cy = omap.origin[1] + (rows.mean() + 0.5) * omap.cell_size
        out.append(Frontier(cells, (float(cx), float(cy))))
    out.sort(key=lambda f: (-f.size, f.centroid[0], f.centroid[1]))
    return out


def traversable_mask(omap: OccupancyMap, obstacle_inflation: int = 1,
                     unknown_traversable: bool = True) -> np.ndarray:
    obstacles = omap.state == OBSTACLE
    base = ~obstacles if unknown_traversable else omap.state == FREE
    return base & ~geometry.inflate(obstacles, obstacle_inflation)


def _field(trav: np.ndarray, sources: np.ndarray, cell_size: float, stop: int = -1) -> np.ndarray:
    sources = np.asarray(sources, dtype=np.int64).reshape(-1, 2)
    return geometry.dijkstra_grid(trav, sources[:, 0].copy(), sources[:, 1].copy(),
                                  cell_size, stop)


def _goal_sources(trav: np.ndarray, point: tuple[float, float], omap: OccupancyMap,
                  radius: int = 8, slack: int = 2) -> np.ndarray:
    """Traversable cells near a blocked goal: every cell within ``slack`` cells of
    the closest one, nearest first.  Planning to all of them lets the wavefront
    pick the approach side, instead of a tie that may sit behind a wall."""
    r0, c0 = omap.cell_of(*point)
    H, W = trav.shape
    rs, re = max(r0 - radius, 0), min(r0 + radius + 1, H)
    cs_, ce = max(c0 - radius, 0), min(c0 + radius + 1, W)
    rr, cc = np.nonzero(trav[rs:re, cs_:ce])
    if len(rr) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    rr, cc = rr + rs, cc + cs_
    gx = omap.origin[0] + (cc + 0.5) * omap.cell_size
    gy = omap.origin[1] + (rr + 0.5) * omap.cell_size
    d = np.hypot(gx - point[0], gy - point[1])
    keep = np.flatnonzero(d <= d.min() + slack * omap.cell_size + 1e-9)
    keep = keep[np.lexsort((cc[keep], rr[keep], d[keep]))]
    return np.stack([rr[keep], cc[keep]], axis=1)


def fmm_distance_field(omap: OccupancyMap, sources, obstacle_inflation: int = 1,
                       unknown_traversable: bool = True) -> DistanceField:
    """Multi-source wavefront distances (m) over the traversable cells."""
    sources = np.asarray(sources, dtype=np.int64).reshape(-1, 2)
    if len(sources) == 0:
        raise PlanningError("no source cells")
    trav = traversable_mask(omap, obstacle_inflation, unknown_traversable)
    H, W = omap.shape
    inb = (sources[:, 0] >= 0) & (sources[:, 0] < H) & (sources[:, 1] >= 0) & (sources[:, 1] < W)
    sources = sources[inb]
    sources = sources[trav[sources[:, 0], sources[:, 1]]] if len(sources) else sources
    if len(sources) == 0:
        raise PlanningError("all sources blocked by obstacle inflation")
    return DistanceField(_field(trav, sources, omap.cell_size), omap.origin, omap.cell_size)


def _descend(values: np.ndarray, trav: np.ndarray, r: int, c: int) -> tuple[int, int] | None:
    H, W = values.shape
    best = values[r, c]
    pick = None
    for k in range(8):
        dr, dc = geometry.NEIGHBOURS[k]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < H and 0 <= nc < W) or not trav[nr, nc]:
            continue
        if k >= 4 and not (trav[r + dr, c] and trav[r, c + dc]):
            continue
        if values[nr, nc] < best:
            best = values[nr, nc]
            pick = (nr, nc)
    return pick


def steer(pose: AgentPose, target: tuple[float, float], turn_angle: float) -> Action:
    """Turn when the bearing error exceeds half a turn step, otherwise go forward.
    A target exactly behind resolves to TURN_LEFT."""
    x, y = pose.position
    err = geometry.wrap_angle(math.atan2(target[1] - y, target[0] - x) - pose.heading)
    # the tolerance stops left/right flapping when the error sits on the half-step boundary
    if abs(err) > turn_angle / 2 + _STEER_TOL:
        return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
    return Action.FORWARD


@dataclass
class Plan:
    action: Action
    waypoint: tuple[float, float]
    goal_cell: tuple[int, int]
    path_cost: float


def plan_path(omap: OccupancyMap, pose: AgentPose, goal_point: tuple[float, float],
              turn_angle: float, obstacle_inflation: int = 1, lookahead: int = 2,
              unknown_traversable: bool = True) -> Plan:
    x, y = pose.position
    # without an unknown border the lattice edge acts as a wall around the known area
    omap.pad_known(_PLAN_MARGIN)
    omap.ensure_contains(x, y)
    omap.ensure_contains(*goal_point)
    a = omap.cell_of(x, y)
    goal = omap.cell_of(*goal_point)
    W = omap.shape[1]
    stop = a[0] * W + a[1]
    values = trav = g = None
    # retry without inflation when the agent is boxed in by inflated cells
    for infl in dict.fromkeys((obstacle_inflation, 0)):
        trav = traversable_mask(omap, infl, unknown_traversable)
        trav[a] = True
        srcs = np.array([goal]) if trav[goal] else _goal_sources(trav, goal_point, omap)
        if len(srcs):
            g = (int(srcs[0, 0]), int(srcs[0, 1]))
            values = _field(trav, srcs, omap.cell_size, stop)
            if np.isfinite(values[a]):
                break
        # goal unreachable: substitute the nearest reachable cell
        from_agent = _field(trav, np.array([a]), omap.cell_size)
        rr, cc = np.nonzero(np.isfinite(from_agent))
        if len(rr) == 1 and infl > 0:
            continue
        gx = omap.origin[0] + (cc + 0.5) * omap.cell_size
        gy = omap.origin[1] + (rr + 0.5) * omap.cell_size
        d2 = (gx - goal_point[0]) ** 2 + (gy - goal_point[1]) ** 2
        k = int(np.lexsort((from_agent[rr, cc], d2))[0])
        g = (int(rr[k]), int(cc[k]))
        if len(rr) == 1 and g != goal:
            raise PlanningError(f"agent cell {a} is isolated")
        values = _field(trav, np.array([g]), omap.cell_size, stop)
        break
    cell = a
    for _ in range(lookahead):
        nxt = _descend(values, trav, *cell)
        if nxt is None:
            break
        cell = nxt
    waypoint = goal_point if cell == a else omap.center_of(*cell)
    return Plan(steer(pose, waypoint, turn_angle), waypoint, g, float(values[a]))


def plan_next_action(omap: OccupancyMap, pose: AgentPose, goal_point: tuple[float, float],
                     turn_angle: float = math.radians(30.0), obstacle_inflation: int = 1,
                     unknown_traversable: bool = True) -> Action:
    """Greedy descent of the goal's distance field converted to a discrete action."""
    return plan_path(omap, pose, goal_point, turn_angle, obstacle_inflation,
                     unknown_traversable=unknown_traversable).action


def gt_map(blocked: np.ndarray, cell_size: float) -> OccupancyMap:
    """Fully known map from a ground-truth obstacle grid."""
    m = OccupancyMap(blocked.shape, cell_size)
    m.state[:] = np.where(blocked, OBSTACLE, FREE)
    return m
