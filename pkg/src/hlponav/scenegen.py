"""Procedural multi-room scenes, landmark lists and room/object statistics."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geometry

CATEGORIES_20 = (
    "chair", "table", "picture", "cabinet", "cushion", "sofa", "bed", "chest_of_drawers",
    "plant", "sink", "toilet", "stool", "towel", "tv_monitor", "shower", "bathtub",
    "counter", "fireplace", "gym_equipment", "seating",
)
DEFAULT_CATEGORIES = ("couch", "sink", "chair", "bed", "toilet", "table", "plant", "tv")
ROOM_TYPES = ("lounge", "bathroom", "kitchen", "bedroom", "hallway", "office")

# probability that a room of a given type holds one instance of a category
DEFAULT_PRIORS: dict[str, dict[str, float]] = {
    "lounge": {"couch": 0.9, "tv": 0.6, "table": 0.3, "chair": 0.3, "plant": 0.4},
    "bathroom": {"sink": 0.9, "toilet": 0.9, "plant": 0.1},
    "kitchen": {"sink": 0.6, "table": 0.7, "chair": 0.5, "plant": 0.1},
    "bedroom": {"bed": 0.95, "tv": 0.2, "chair": 0.2, "plant": 0.2},
    "hallway": {"plant": 0.3},
    "office": {"chair": 0.9, "table": 0.8, "plant": 0.3, "tv": 0.2},
}

FREE, OBSTACLE = 0, 1


class GenerationError(RuntimeError):
    """Scene or episode generation could not satisfy its constraints."""


@dataclass(frozen=True)
class Room:
    id: int
    room_type: str
    cells: np.ndarray  # (n, 2) int rows/cols
    center: tuple[float, float]

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """Inclusive-exclusive ``(r0, c0, r1, c1)``."""
        r, c = self.cells[:, 0], self.cells[:, 1]
        return int(r.min()), int(c.min()), int(r.max()) + 1, int(c.max()) + 1


@dataclass(frozen=True)
class PlacedObject:
    category: str
    position: tuple[float, float]
    room_id: int
    cells: tuple[tuple[int, int], ...]

    def bounds(self, cell_size: float) -> tuple[float, float, float, float]:
        rows = [r for r, _ in self.cells]
        cols = [c for _, c in self.cells]
        return (min(cols) * cell_size, min(rows) * cell_size,
                (max(cols) + 1) * cell_size, (max(rows) + 1) * cell_size)


@dataclass(frozen=True)
class Landmark:
    room_type: str
    center: tuple[float, float]


@dataclass(frozen=True)
class LandmarkList:
    entries: tuple[Landmark, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> Landmark:
        return self.entries[i]


@dataclass(frozen=True)
class Scene:
    grid: np.ndarray  # uint8, FREE / OBSTACLE (walls only)
    rooms: tuple[Room, ...]
    objects: tuple[PlacedObject, ...]
    landmarks: LandmarkList
    seed: int
    cell_size: float = 0.25
    scene_id: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    @cached_property
    def object_map(self) -> np.ndarray:
        """Object index per cell, -1 where no object."""
        om = np.full(self.grid.shape, -1, dtype=np.int64)
        for i, obj in enumerate(self.objects):
            for r, c in obj.cells:
                om[r, c] = i
        return om

    @cached_property
    def blocked(self) -> np.ndarray:
        """Cells impassable and opaque to rays: walls and object footprints."""
        b = self.grid == OBSTACLE
        b = b | (self.object_map >= 0)
        b.flags.writeable = False
        return b

    @cached_property
    def room_map(self) -> np.ndarray:
        rm = np.full(self.grid.shape, -1, dtype=np.int64)
        for room in self.rooms:
            rm[room.cells[:, 0], room.cells[:, 1]] = room.id
        return rm

    def instances(self, category: str) -> list[int]:
        return [i for i, o in enumerate(self.objects) if o.category == category]

    def categories_present(self) -> list[str]:
        return sorted({o.category for o in self.objects})

    def distance_to_object(self, index: int, x: float, y: float) -> float:
        """Euclidean distance from a point to the nearest point of an object's footprint."""
        x0, y0, x1, y1 = self.objects[index].bounds(self.cell_size)
        dx = max(x0 - x, 0.0, x - x1)
        dy = max(y0 - y, 0.0, y - y1)
        return math.hypot(dx, dy)

    def object_visible(self, index: int, x: float, y: float) -> bool:
        """Unobstructed straight segment from the point to the object."""
        obj = self.objects[index]
        x0, y0, x1, y1 = obj.bounds(self.cell_size)
        cx, cy = obj.position
        nx = min(max(x, x0), x1)
        ny = min(max(y, y0), y1)
        # nudge the nearest boundary point into the footprint
        nx += (cx - nx) * 1e-3
        ny += (cy - ny) * 1e-3
        for tx, ty in ((nx, ny), (cx, cy)):
            _, r, c = geometry.first_hit(self.blocked, self.cell_size, x, y, tx, ty)
            if r >= 0 and self.object_map[r, c] == index:
                return True
        return False

    def fingerprint(self) -> str:
        from .dataset import scene_to_dict, stable_hash
        return stable_hash(scene_to_dict(self))


@dataclass(frozen=True)
class RoomObjectStats:
    table: Mapping[tuple[str, str], float]
    counts: Mapping[tuple[str, str], int] = field(default_factory=dict)

    def prob(self, room_type: str, category: str) -> float:
        return float(self.table.get((room_type, category), 0.0))

    def categories(self) -> list[str]:
        return sorted({c for _, c in self.table})


@dataclass(frozen=True)
class EpisodeSpec:
    scene_id: str
    start_position: tuple[float, float]
    start_heading: float
    goal_category: str
    shortest_path_length: float
    episode_id: int = 0


@dataclass(frozen=True)
class ScenegenConfig:
    grid_shape: tuple[int, int] = (40, 56)
    cell_size: float = 0.25
    room_count: tuple[int, int] = (4, 6)
    room_types: tuple[str, ...] = ROOM_TYPES
    room_type_weights: tuple[float, ...] | None = None
    required_rooms: tuple[str, ...] = ()
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    object_priors: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: DEFAULT_PRIORS)
    min_room_size: int = 12
    door_width: int = 4
    object_size: int = 2
    object_clearance: int = 2
    extra_door_prob: float = 0.25
    max_retries: int = 50

    def validate(self) -> None:
        lo, hi = self.room_count
        if lo < 1 or hi < lo:
            raise GenerationError(f"invalid room_count {self.room_count}")
        if len(self.required_rooms) > hi:
            raise GenerationError("required_rooms exceeds maximum room count")
        for rt, priors in self.object_priors.items():
            for cat, p in priors.items():
                if cat not in self.categories:
                    raise GenerationError(f"prior for unknown category {cat!r}")
                if not 0.0 <= p <= 1.0:
                    raise GenerationError(f"prior {rt}/{cat} outside [0, 1]")


# --------------------------------------------------------------------------- layout

def _split_rooms(rng: np.random.Generator, interior: tuple[int, int, int, int],
                 n: int, min_size: int) -> list[tuple[int, int, int, int]]:
    rects = [interior]
    for _ in range(n - 1):
        splittable = []
        for i, (r0, c0, r1, c1) in enumerate(rects):
            h, w = r1 - r0, c1 - c0
            axes = [ax for ax, L in (("r", h), ("c", w)) if L >= 2 * min_size + 1]
            if axes:
                splittable.append((h * w, i, axes))
        if not splittable:
            raise GenerationError(
                f"rooms cannot fit: {n} rooms of min side {min_size} cells in {interior}")
        splittable.sort(key=lambda t: (-t[0], t[1]))
        _, i, axes = splittable[0]
        r0, c0, r1, c1 = rects.pop(i)
        h, w = r1 - r0, c1 - c0
        if len(axes) == 2:
            ax = "r" if h > w else "c" if w > h else axes[int(rng.integers(2))]
        else:
            ax = axes[0]
        if ax == "r":
            wall = int(rng.integers(r0 + min_size, r1 - min_size))
            rects += [(r0, c0, wall, c1), (wall + 1, c0, r1, c1)]
        else:
            wall = int(rng.integers(c0 + min_size, c1 - min_size))
            rects += [(r0, c0, r1, wall), (r0, wall + 1, r1, c1)]
    rects.sort()
    return rects


def _door_candidates(rects, door_width: int):
    """Shared single-cell walls long enough for a door: (i, j, axis, wall, lo, hi)."""
    out = []
    for i, a in enumerate(rects):
        for j, b in enumerate(rects):
            if j <= i:
                continue
            for (p, q) in ((a, b), (b, a)):
                pi, qi = (i, j) if p is a else (j, i)
                if p[2] + 1 == q[0]:  # p above q, wall row p[2]
                    lo, hi = max(p[1], q[1]), min(p[3], q[3])
                    if hi - lo >= door_width + 2:
                        out.append((pi, qi, "r", p[2], lo, hi))
                if p[3] + 1 == q[1]:  # p left of q, wall col p[3]
                    lo, hi = max(p[0], q[0]), min(p[2], q[2])
                    if hi - lo >= door_width + 2:
                        out.append((pi, qi, "c", p[3], lo, hi))
    return out


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _place_objects(rng, config: ScenegenConfig, rects, room_types, grid):
    objects: list[PlacedObject] = []
    taken = np.zeros(grid.shape, dtype=bool)  # footprints grown by clearance
    s, clr = config.object_size, config.object_clearance
    cs = config.cell_size
    for room_id, ((r0, c0, r1, c1), rt) in enumerate(zip(rects, room_types)):
        priors = config.object_priors.get(rt, {})
        for cat in config.categories:
            p = priors.get(cat, 0.0)
            if p <= 0.0 or rng.random() >= p:
                continue
            cands = []
            for r in range(r0 + clr, r1 - clr - s + 1):
                for c in range(c0 + clr, c1 - clr - s + 1):
                    if not taken[r:r + s, c:c + s].any():
                        cands.append((r, c))
            if not cands:
                continue
            r, c = cands[int(rng.integers(len(cands)))]
            cells = tuple((r + i, c + j) for i in range(s) for j in range(s))
            taken[max(r - clr, 0):r + s + clr, max(c - clr, 0):c + s + clr] = True
            pos = ((c + s / 2) * cs, (r + s / 2) * cs)
            objects.append(PlacedObject(cat, pos, room_id, cells))
    return objects


def _free_connected(blocked: np.ndarray) -> bool:
    from scipy import ndimage
    labels, n = ndimage.label(~blocked, structure=np.ones((3, 3), dtype=int))
    return n == 1


def _assign_types(rng, config: ScenegenConfig, n: int) -> list[str]:
    types = list(config.required_rooms)
    w = np.asarray(config.room_type_weights, dtype=float) if config.room_type_weights else None
    if w is not None:
        w = w / w.sum()
    while len(types) < n:
        types.append(config.room_types[int(rng.choice(len(config.room_types), p=w))])
    order = rng.permutation(n)
    return [types[i] for i in order]


def _try_generate(rng, config: ScenegenConfig, seed: int, scene_id: str) -> Scene:
    H, W = config.grid_shape
    lo, hi = config.room_count
    lo = max(lo, len(config.required_rooms))
    n = int(rng.integers(lo, hi + 1))
    rects = _split_rooms(rng, (1, 1, H - 1, W - 1), n, config.min_room_size)
    grid = np.full((H, W), OBSTACLE, dtype=np.uint8)
    for r0, c0, r1, c1 in rects:
        grid[r0:r1, c0:c1] = FREE

    cands = _door_candidates(rects, config.door_width)
    order = rng.permutation(len(cands))
    parent = list(range(len(rects)))
    doors = []
    for k in order:
        i, j = cands[k][0], cands[k][1]
        a, b = _find(parent, i), _find(parent, j)
        if a != b:
            parent[a] = b
            doors.append(cands[k])
        elif rng.random() < config.extra_door_prob:
            doors.append(cands[k])
    if len({_find(parent, i) for i in range(len(rects))}) != 1:
        raise GenerationError("rooms not connectable: no shared wall long enough for a door")
    dw = config.door_width
    for _, _, axis, wall, a, b in doors:
        start = int(rng.integers(a + 1, b - dw))
        if axis == "r":
            grid[wall, start:start + dw] = FREE
        else:
            grid[start:start + dw, wall] = FREE

    types = _assign_types(rng, config, n)
    objects = _place_objects(rng, config, rects, types, grid)

    cs = config.cell_size
    rooms = []
    for room_id, ((r0, c0, r1, c1), rt) in enumerate(zip(rects, types)):
        rr, cc = np.mgrid[r0:r1, c0:c1]
        cells = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.int64)
        cells.flags.writeable = False
        center = ((c0 + c1) / 2 * cs, (r0 + r1) / 2 * cs)
        rooms.append(Room(room_id, rt, cells, center))
    grid.flags.writeable = False
    landmarks = LandmarkList(tuple(Landmark(r.room_type, r.center) for r in rooms))
    scene = Scene(grid, tuple(rooms), tuple(objects), landmarks, seed, cs, scene_id)
    if not _free_connected(scene.blocked):
        raise GenerationError("free space disconnected after object placement")
    return scene


def generate_scene(config: ScenegenConfig, seed: int, scene_id: str | None = None) -> Scene:
    """Build a scene; pure function of ``(config, seed)``."""
    config.validate()
    rng = np.random.default_rng(seed)
    last: GenerationError | None = None
    for _ in range(config.max_retries):
        try:
            return _try_generate(rng, config, seed, scene_id or f"scene_{seed}")
        except GenerationError as err:
            last = err
    raise GenerationError(f"generation failed after {config.max_retries} retries: {last}")


def compute_room_object_stats(training_scenes: Sequence[Scene]) -> RoomObjectStats:
    if not training_scenes:
        raise ValueError("at least one scene required")
    counts: Counter = Counter()
    totals: Counter = Counter()
    for scene in training_scenes:
        for obj in scene.objects:
            rt = scene.rooms[obj.room_id].room_type
            counts[(rt, obj.category)] += 1
            totals[obj.category] += 1
    table = {key: n / totals[key[1]] for key, n in sorted(counts.items())}
    return RoomObjectStats(table, dict(sorted(counts.items())))


# --------------------------------------------------------------------------- episodes

def viewpoint_cells(scene: Scene, category: str, success_distance: float = 1.0) -> np.ndarray:
    """Free cells whose centre satisfies the stop-success rule for ``category``."""
    cs = scene.cell_size
    H, W = scene.shape
    reach = int(math.ceil(success_distance / cs)) + 1
    out = set()
    for idx in scene.instances(category):
        rows = [r for r, _ in scene.objects[idx].cells]
        cols = [c for _, c in scene.objects[idx].cells]
        for r in range(max(min(rows) - reach, 0), min(max(rows) + reach + 1, H)):
            for c in range(max(min(cols) - reach, 0), min(max(cols) + reach + 1, W)):
                if scene.blocked[r, c] or (r, c) in out:
                    continue
                x, y = geometry.cell_center(r, c, cs)
                if (scene.distance_to_object(idx, x, y) <= success_distance
                        and scene.object_visible(idx, x, y)):
                    out.add((r, c))
    return np.array(sorted(out), dtype=np.int64).reshape(-1, 2)


def goal_distance_field(scene: Scene, category: str, success_distance: float = 1.0) -> np.ndarray:
    """Exact geodesic distance (m) from every cell to the success region of ``category``."""
    src = viewpoint_cells(scene, category, success_distance)
    if len(src) == 0:
        raise GenerationError(f"no reachable viewpoint for category {category!r}")
    return geometry.dijkstra_grid(~scene.blocked, src[:, 0], src[:, 1], scene.cell_size)


def point_distance_field(scene: Scene, x: float, y: float) -> np.ndarray:
    r, c = geometry.world_to_cell(x, y, scene.cell_size)
    return geometry.dijkstra_grid(~scene.blocked, np.array([r]), np.array([c]), scene.cell_size)


def field_distance(dist: np.ndarray, x: float, y: float, cell_size: float) -> float:
    """Continuous geodesic estimate: best neighbouring cell value plus the
    straight hop from the point to that cell's centre."""
    r, c = geometry.world_to_cell(x, y, cell_size)
    H, W = dist.shape
    best = math.inf
    for rr in range(max(r - 1, 0), min(r + 2, H)):
        for cc in range(max(c - 1, 0), min(c + 2, W)):
            d = dist[rr, cc]
            if d < math.inf:
                cx, cy = (cc + 0.5) * cell_size, (rr + 0.5) * cell_size
                best = min(best, d + math.hypot(x - cx, y - cy))
    return best


def start_cells(scene: Scene, clearance: int = 1) -> np.ndarray:
    ok = ~geometry.inflate(scene.blocked, clearance)
    rows, cols = np.nonzero(ok)
    return np.stack([rows, cols], axis=1)


def sample_episodes(scene: Scene, goal_category: str, n: int, min_geodesic: float,
                    seed: int, success_distance: float = 1.0,
                    max_geodesic: float = math.inf) -> list[EpisodeSpec]:
    if not scene.instances(goal_category):
        raise GenerationError(f"scene {scene.scene_id} has no {goal_category!r}")
    rng = np.random.default_rng(seed)
    field_ = goal_distance_field(scene, goal_category, success_distance)
    cells = start_cells(scene)
    d = field_[cells[:, 0], cells[:, 1]]
    ok = (d >= min_geodesic) & (d <= max_geodesic) & np.isfinite(d)
    cands = cells[ok]
    if len(cands) == 0:
        raise GenerationError(
            f"no start cell at geodesic distance >= {min_geodesic} m from {goal_category!r}")
    picks = rng.choice(len(cands), size=n, replace=len(cands) < n)
    out = []
    for k, i in enumerate(picks):
        r, c = int(cands[i, 0]), int(cands[i, 1])
        heading = float(rng.uniform(-math.pi, math.pi))
        out.append(EpisodeSpec(scene.scene_id, geometry.cell_center(r, c, scene.cell_size),
                               heading, goal_category, float(field_[r, c]), k))
    return out


def scene_from_arrays(grid: np.ndarray, rooms: Iterable[tuple[str, np.ndarray]],
                      objects: Iterable[tuple[str, Sequence[tuple[int, int]]]] = (),
                      cell_size: float = 0.25, seed: int = 0, scene_id: str = "fixture") -> Scene:
    """Assemble a scene from explicit cells (fixtures, deserialisation)."""
    grid = np.asarray(grid, dtype=np.uint8).copy()
    room_objs = []
    for i, (rt, cells) in enumerate(rooms):
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        centers = (cells[:, ::-1] + 0.5) * cell_size
        center = (float(centers[:, 0].mean()), float(centers[:, 1].mean()))
        room_objs.append(Room(i, rt, cells, center))
    room_map = np.full(grid.shape, -1, dtype=np.int64)
    for room in room_objs:
        room_map[room.cells[:, 0], room.cells[:, 1]] = room.id
    placed = []
    for cat, cells in objects:
        cells = tuple((int(r), int(c)) for r, c in cells)
        rows = [r for r, _ in cells]
        cols = [c for _, c in cells]
        pos = ((min(cols) + max(cols) + 1) / 2 * cell_size, (min(rows) + max(rows) + 1) / 2 * cell_size)
        placed.append(PlacedObject(cat, pos, int(room_map[cells[0]]), cells))
    grid.flags.writeable = False
    landmarks = LandmarkList(tuple(Landmark(r.room_type, r.center) for r in room_objs))
    return Scene(grid, tuple(room_objs), tuple(placed), landmarks, seed, cell_size, scene_id)
