"""PointNav, Exploration and GoalReacher skills.

Each skill is an (observation adapter, reward, termination) triple.  The
task environments below wrap the simulator for PPO training; the policy
classes expose learned and scripted backends behind one ``act`` interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geometry
from .mapper import (
    OBSTACLE,
    OccupancyMap,
    PlanningError,
    extract_frontiers,
    integrate_scan,
    plan_path,
    steer,
    traversable_mask,
    _field,
)
from .rlcore import NetSpec, RecurrentPolicy, load_checkpoint
from .scenegen import (
    EpisodeSpec,
    Scene,
    ScenegenConfig,
    field_distance,
    generate_scene,
    goal_distance_field,
    point_distance_field,
    start_cells,
)
from .simcore import (
    NO_ACTION,
    NUM_ACTIONS,
    Action,
    AgentPose,
    ObjectNavEnv,
    Observation,
    SimConfig,
    pose_from_odometry,
    world_to_gps,
)

SKILLS = ("pointnav", "explore", "reacher")
POLICY_KINDS = SKILLS + ("objectnav",)

# reward constants
PROGRESS_SCALE = 1.0
SLACK = 0.01
SUCCESS_BONUS = 2.5
STOP_PENALTY = 2.5
EXPLORE_SCALE = 0.1
POINTNAV_RADIUS = 0.5


# ---------------------------------------------------------------------------- rewards

def pointnav_reward(prev_dist: float, new_dist: float, reached: bool, k: float = PROGRESS_SCALE,
                    slack: float = SLACK, bonus: float = SUCCESS_BONUS) -> float:
    return k * (prev_dist - new_dist) - slack + (bonus if reached else 0.0)


def explore_reward(newly_freed_area: float, k: float = EXPLORE_SCALE, slack: float = SLACK) -> float:
    return k * newly_freed_area - slack


def explore_reward_from_maps(map_before: OccupancyMap, map_after: OccupancyMap,
                             k: float = EXPLORE_SCALE, slack: float = SLACK) -> float:
    gained = max(0.0, map_after.explored_area() - map_before.explored_area())
    return explore_reward(gained, k, slack)


def reacher_reward(prev_dist: float, new_dist: float, stopped: bool, success: bool,
                   k: float = PROGRESS_SCALE, slack: float = SLACK, bonus: float = SUCCESS_BONUS,
                   penalty: float = STOP_PENALTY) -> float:
    r = k * (prev_dist - new_dist) - slack
    if stopped:
        r += bonus if success else -penalty
    return r


# ----------------------------------------------------------------------- observations

def _prev_onehot(prev_action: int) -> np.ndarray:
    v = np.zeros(NUM_ACTIONS + 1)
    v[int(prev_action) + 1] = 1.0
    return v


def goal_polar(obs: Observation, goal_gps: np.ndarray) -> np.ndarray:
    """Goal offset in the agent frame as ``[distance / 5, cos, sin]``."""
    rx, ry = goal_gps[0] - obs.gps[0], goal_gps[1] - obs.gps[1]
    c, s = math.cos(obs.compass), math.sin(obs.compass)
    lx, ly = c * rx + s * ry, -s * rx + c * ry
    d = math.hypot(lx, ly)
    if d < 1e-9:
        return np.array([0.0, 1.0, 0.0])
    return np.array([min(d, 20.0) / 5.0, lx / d, ly / d])


def encode(kind: str, obs: Observation, cfg: SimConfig,
           goal_gps: np.ndarray | None = None) -> np.ndarray:
    """Flat feature vector for a policy of the given kind."""
    depth = obs.depth / cfg.max_range
    gps = np.asarray(obs.gps) / 10.0
    comp = np.array([math.cos(obs.compass), math.sin(obs.compass)])
    prev = _prev_onehot(obs.prev_action)
    if kind == "pointnav":
        if goal_gps is None:
            raise ValueError("pointnav needs a goal point")
        return np.concatenate([depth, gps, comp, goal_polar(obs, goal_gps), prev])
    if kind == "explore":
        return np.concatenate([depth, gps, comp, prev])
    if kind == "reacher":
        return np.concatenate([depth, obs.goal_mask.astype(float), gps, prev])
    if kind == "objectnav":
        return np.concatenate([depth, obs.goal_mask.astype(float), gps, comp, prev])
    raise ValueError(f"unknown policy kind {kind!r}")


def obs_dim(kind: str, cfg: SimConfig = SimConfig()) -> int:
    K, P = cfg.num_rays, NUM_ACTIONS + 1
    return {"pointnav": K + 2 + 2 + 3 + P, "explore": K + 2 + 2 + P,
            "reacher": 2 * K + 2 + P, "objectnav": 2 * K + 2 + 2 + P}[kind]


def allowed_actions(kind: str) -> np.ndarray:
    """Only policies that may end an episode get the Stop action."""
    mask = np.ones(NUM_ACTIONS, dtype=bool)
    if kind in ("pointnav", "explore"):
        mask[Action.STOP] = False
    return mask


# ------------------------------------------------------------------- training scenes

SINGLE_ROOM = ScenegenConfig(grid_shape=(22, 22), room_count=(1, 1))
SMALL_HOUSE = ScenegenConfig(grid_shape=(32, 40), room_count=(2, 4))
HOUSE = ScenegenConfig()
# evaluation-scale houses: 20 x 28 m, many rooms, some loops between rooms
BENCHMARK_HOUSE = ScenegenConfig(grid_shape=(80, 112), room_count=(12, 16), extra_door_prob=0.6)


@dataclass(frozen=True)
class SkillPreset:
    """Training recipe for one policy kind: scene mix, task options, env count, step size."""

    scenes: tuple[tuple[ScenegenConfig, int], ...]
    task: dict = field(default_factory=dict)
    num_envs: int = 22
    learning_rate: float = 1e-3
    kind: str = ""   # policy kind when the preset name is not itself a kind


PRESETS = {
    "pointnav": SkillPreset(((SINGLE_ROOM, 20), (SMALL_HOUSE, 20)), {"max_steps": 300}, 22),
    # second stage, continued from "pointnav": long routes through full houses
    "pointnav_house": SkillPreset(((SINGLE_ROOM, 10), (SMALL_HOUSE, 15), (HOUSE, 15),
                                   (BENCHMARK_HOUSE, 20)), {"max_steps": 500}, 22,
                                  kind="pointnav"),
    "explore": SkillPreset(((HOUSE, 40),), {"max_steps": 300}, 20),
    "reacher": SkillPreset(((SINGLE_ROOM, 40),), {"max_steps": 100}, 28),
    "objectnav": SkillPreset(((HOUSE, 40),), {}, 22),
}


def preset_kind(name: str) -> str:
    return PRESETS[name].kind or name


def preset_scenes(name: str, seed: int) -> list[Scene]:
    out = []
    for k, (cfg, n) in enumerate(PRESETS[name].scenes):
        out += make_scenes(cfg, n, seed, prefix=f"{name}{k}_")
    return out


def make_scenes(config: ScenegenConfig, n: int, seed: int, prefix: str = "s") -> list[Scene]:
    return [generate_scene(config, seed * 100_003 + i, f"{prefix}{seed}_{i}") for i in range(n)]


# --------------------------------------------------------------------- task environments

class _SimTask:
    kind = ""

    def __init__(self, scenes: Sequence[Scene], sim: SimConfig, seed: int, max_steps: int):
        if not scenes:
            raise ValueError("at least one scene required")
        self.scenes = list(scenes)
        self.sim = sim
        self.rng = np.random.default_rng(seed)
        self.max_steps = max_steps
        self.obs_dim = obs_dim(self.kind, sim)
        self._envs: dict[str, ObjectNavEnv] = {}
        self._starts: dict[str, np.ndarray] = {}
        self._mask = allowed_actions(self.kind)

    def allowed(self) -> np.ndarray:
        return self._mask

    def _env(self, scene: Scene) -> ObjectNavEnv:
        if scene.scene_id not in self._envs:
            self._envs[scene.scene_id] = ObjectNavEnv(scene, self.sim)
            self._starts[scene.scene_id] = start_cells(scene)
        return self._envs[scene.scene_id]

    def _random_start(self, scene: Scene, cells: np.ndarray | None = None):
        cells = self._starts[scene.scene_id] if cells is None else cells
        r, c = cells[int(self.rng.integers(len(cells)))]
        return geometry.cell_center(int(r), int(c), scene.cell_size), float(
            self.rng.uniform(-math.pi, math.pi))

    def _episode_common(self) -> dict:
        e = self.env
        return {"steps": e.steps, "path_length": e.path_length, "scene_id": e.scene.scene_id}


class PointNavTask(_SimTask):
    """Reach a point given in GPS coordinates; the episode ends within 0.5 m."""

    kind = "pointnav"

    def __init__(self, scenes, sim: SimConfig = SimConfig(), seed: int = 0, max_steps: int = 300,
                 min_distance: float = 1.0, max_distance: float = math.inf):
        super().__init__(scenes, sim, seed, max_steps)
        self.min_distance, self.max_distance = min_distance, max_distance

    def reset(self) -> np.ndarray:
        while True:
            scene = self.scenes[int(self.rng.integers(len(self.scenes)))]
            env = self._env(scene)
            cells = self._starts[scene.scene_id]
            goal, _ = self._random_start(scene)
            dist = point_distance_field(scene, *goal)
            d = dist[cells[:, 0], cells[:, 1]]
            ok = cells[(d >= self.min_distance + 0.5) & (d <= self.max_distance) & np.isfinite(d)]
            if len(ok):
                break
        start, heading = self._random_start(scene, ok)
        self.env, self.field, self.goal = env, dist, goal
        self.episode = EpisodeSpec(scene.scene_id, start, heading, "", 0.0)
        obs = env.reset(self.episode)
        self.goal_gps = world_to_gps(self.episode, *goal)
        self.d0 = self.dist = field_distance(dist, *start, scene.cell_size)
        return encode(self.kind, obs, self.sim, self.goal_gps)

    def step(self, action: int):
        res = self.env.step(action)
        x, y = self.env.pose.position
        d = field_distance(self.field, x, y, self.env.scene.cell_size)
        reached = d <= POINTNAV_RADIUS
        r = pointnav_reward(self.dist, d, reached)
        self.dist = d
        done = reached or res.done or self.env.steps >= self.max_steps
        info = {}
        if done:
            l = max(self.d0 - POINTNAV_RADIUS, 1e-9)
            p = self.env.path_length
            info["episode"] = self._episode_common() | {
                "success": float(reached), "spl": float(reached) * l / max(p, l),
                "distance_to_goal": d}
        return encode(self.kind, res.observation, self.sim, self.goal_gps), r, done, info


class ExploreTask(_SimTask):
    """Maximise newly observed free area over a fixed horizon."""

    kind = "explore"

    def __init__(self, scenes, sim: SimConfig = SimConfig(), seed: int = 0, max_steps: int = 150):
        super().__init__(scenes, sim, seed, max_steps)
        self.offsets = sim.ray_offsets()

    def reset(self) -> np.ndarray:
        scene = self.scenes[int(self.rng.integers(len(self.scenes)))]
        self.env = self._env(scene)
        start, heading = self._random_start(scene)
        obs = self.env.reset(EpisodeSpec(scene.scene_id, start, heading, "", 0.0))
        H, W = scene.shape
        cs = scene.cell_size
        self.map = OccupancyMap.covering(0.0, 0.0, W * cs, H * cs, cs)
        self.cell_area = cs * cs
        self.explored = integrate_scan(self.map, self.env.pose, obs.depth, self.offsets,
                                       self.sim.max_range) * self.cell_area
        return encode(self.kind, obs, self.sim)

    def step(self, action: int):
        res = self.env.step(action)
        gained = integrate_scan(self.map, self.env.pose, res.observation.depth, self.offsets,
                                self.sim.max_range) * self.cell_area
        self.explored += gained
        r = explore_reward(gained)
        done = res.done or self.env.steps >= self.max_steps
        info = {}
        if done:
            info["episode"] = self._episode_common() | {"explored_area": self.explored}
        return encode(self.kind, res.observation, self.sim), r, done, info


class _GoalTask(_SimTask):
    def __init__(self, scenes, sim, seed, max_steps):
        super().__init__(scenes, sim, seed, max_steps)
        self._fields: dict[tuple[str, str], np.ndarray] = {}
        self.scenes = [s for s in self.scenes if s.objects]
        if not self.scenes:
            raise ValueError("goal tasks need scenes with objects")

    def _goal_field(self, scene: Scene, cat: str) -> np.ndarray:
        key = (scene.scene_id, cat)
        if key not in self._fields:
            self._fields[key] = goal_distance_field(scene, cat, self.sim.success_distance)
        return self._fields[key]

    def _start_episode(self, scene, cat, start, heading):
        self.field = self._goal_field(scene, cat)
        self.env = self._env(scene)
        d = field_distance(self.field, *start, scene.cell_size)
        self.episode = EpisodeSpec(scene.scene_id, start, heading, cat, d)
        obs = self.env.reset(self.episode, goal_field=self.field)
        self.d0 = self.dist = d
        return obs

    def step(self, action: int):
        res = self.env.step(action)
        x, y = self.env.pose.position
        d = field_distance(self.field, x, y, self.env.scene.cell_size)
        stopped = int(action) == Action.STOP
        r = reacher_reward(self.dist, d, stopped, self.env.success)
        self.dist = d
        done = res.done or self.env.steps >= self.max_steps
        info = {}
        if done:
            l = max(self.d0, 1e-9)
            p = self.env.path_length
            s = float(self.env.success)
            info["episode"] = self._episode_common() | {
                "success": s, "spl": s * l / max(p, l, 1e-9) if l > 1e-9 else s,
                "distance_to_goal": d, "stopped": float(stopped)}
        return encode(self.kind, res.observation, self.sim), r, done, info


class ReacherTask(_GoalTask):
    """Start with the goal in view; approach it and stop within the success radius."""

    kind = "reacher"

    def __init__(self, scenes, sim: SimConfig = SimConfig(), seed: int = 0, max_steps: int = 100,
                 max_start_distance: float = 4.0):
        super().__init__(scenes, sim, seed, max_steps)
        self.max_start_distance = max_start_distance

    def reset(self) -> np.ndarray:
        while True:
            scene = self.scenes[int(self.rng.integers(len(self.scenes)))]
            cats = scene.categories_present()
            cat = cats[int(self.rng.integers(len(cats)))]
            self._env(scene)
            cells = self._starts[scene.scene_id]
            f = self._goal_field(scene, cat)
            d = f[cells[:, 0], cells[:, 1]]
            ok = cells[np.isfinite(d) & (d <= self.max_start_distance)]
            if len(ok) == 0:
                continue
            for _ in range(50):
                start, heading = self._random_start(scene, ok)
                obs = self._start_episode(scene, cat, start, heading)
                if obs.goal_mask.any():
                    return encode(self.kind, obs, self.sim)


class ObjectNavTask(_GoalTask):
    """Full object-goal episodes with distance shaping (end-to-end baseline)."""

    kind = "objectnav"

    def __init__(self, scenes, sim: SimConfig = SimConfig(), seed: int = 0,
                 max_steps: int | None = None, min_distance: float = 1.0):
        super().__init__(scenes, sim, seed, max_steps or sim.max_steps)
        self.min_distance = min_distance

    def reset(self) -> np.ndarray:
        while True:
            scene = self.scenes[int(self.rng.integers(len(self.scenes)))]
            cats = scene.categories_present()
            cat = cats[int(self.rng.integers(len(cats)))]
            self._env(scene)
            cells = self._starts[scene.scene_id]
            f = self._goal_field(scene, cat)
            d = f[cells[:, 0], cells[:, 1]]
            ok = cells[np.isfinite(d) & (d >= self.min_distance)]
            if len(ok):
                start, heading = self._random_start(scene, ok)
                return encode(self.kind, self._start_episode(scene, cat, start, heading),
                              self.sim)


TASKS = {"pointnav": PointNavTask, "explore": ExploreTask, "reacher": ReacherTask,
         "objectnav": ObjectNavTask}


def task_factory(kind: str, scenes: Sequence[Scene], sim: SimConfig = SimConfig(), **kw):
    """``make_envs(n, seed)`` callable for :func:`hlponav.rlcore.train`."""
    cls = TASKS[kind]

    def make_envs(n: int, seed: int) -> list:
        return [cls(scenes, sim, seed=seed * 1000 + i, **kw) for i in range(n)]
    return make_envs


def run_random(task, n: int, seed: int = 0) -> list[dict]:
    """Uniformly random allowed actions; baseline for the learned skills."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        task.reset()
        while True:
            choices = np.flatnonzero(task.allowed())
            _, _, done, info = task.step(int(rng.choice(choices)))
            if done:
                out.append(info["episode"])
                break
    return out


# ------------------------------------------------------------------------ agent memory

class AgentMemory:
    """What an agent accumulates during one episode: odometry pose, an
    occupancy map built from depth, and the cells where the goal was seen.

    The map is kept in world alignment through the episode's start pose.
    ``gt_map`` is only set for agents granted the ground-truth obstacle map.
    """

    def __init__(self, episode: EpisodeSpec, sim: SimConfig = SimConfig(),
                 cell_size: float = 0.25, gt_map: OccupancyMap | None = None):
        self.episode = episode
        self.sim = sim
        self.offsets = sim.ray_offsets()
        x, y = episode.start_position
        self.map = OccupancyMap.covering(x, y, x, y, cell_size)
        self.gt_map = gt_map
        self.goal_cells: set[tuple[int, int]] = set()
        self.pose: AgentPose | None = None
        self.obs: Observation | None = None
        self.bumped = False
        self.steps = 0

    def update(self, obs: Observation) -> None:
        pose = pose_from_odometry(self.episode, obs)
        self.bumped = (self.obs is not None and obs.prev_action == Action.FORWARD
                       and np.array_equal(obs.gps, self.obs.gps))
        self.pose, self.obs = pose, obs
        integrate_scan(self.map, pose, obs.depth, self.offsets, self.sim.max_range)
        if obs.goal_mask.any():
            x, y = pose.position
            cs = self.map.cell_size
            for k in np.flatnonzero(obs.goal_mask):
                a = pose.heading + self.offsets[k]
                d = obs.depth[k] + 1e-9
                self.goal_cells.add(geometry.world_to_cell(x + d * math.cos(a),
                                                           y + d * math.sin(a), cs))
        self.steps += 1

    def nearest_goal_cell(self) -> tuple[float, float] | None:
        if not self.goal_cells:
            return None
        x, y = self.pose.position
        cs = self.map.cell_size
        pts = [geometry.cell_center(r, c, cs) for r, c in sorted(self.goal_cells)]
        d = [math.hypot(px - x, py - y) for px, py in pts]
        return pts[int(np.argmin(d))]


@dataclass
class SkillContext:
    memory: AgentMemory
    target: tuple[float, float] | None = None
    region: tuple[tuple[float, float], float] | None = None


# ---------------------------------------------------------------------------- policies

class SkillPolicy:
    kind: str = ""
    backend: str = ""

    def reset(self) -> None:
        pass

    def act(self, obs: Observation, ctx: SkillContext) -> Action:
        raise NotImplementedError


class LearnedSkill(SkillPolicy):
    backend = "learned"

    def __init__(self, kind: str, params: np.ndarray, spec: NetSpec, greedy: bool = True,
                 seed: int = 0, sim: SimConfig = SimConfig(), temperature: float = 1.0):
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown skill {kind!r}")
        if spec.obs_dim != obs_dim(kind, sim):
            raise ValueError(f"{kind} checkpoint expects {spec.obs_dim} inputs, "
                             f"adapter gives {obs_dim(kind, sim)}")
        self.kind, self.sim = kind, sim
        self.policy = RecurrentPolicy(params, spec, greedy, np.random.default_rng(seed),
                                      temperature)
        self._mask = allowed_actions(kind)

    @classmethod
    def from_checkpoint(cls, kind: str, path: Path, **kw) -> "LearnedSkill":
        params, spec, _, meta = load_checkpoint(path)
        if meta.get("skill", kind) != kind:
            raise ValueError(f"checkpoint {path} holds skill {meta.get('skill')!r}, not {kind!r}")
        return cls(kind, params, spec, **kw)

    def reset(self) -> None:
        self.policy.reset()

    def act(self, obs: Observation, ctx: SkillContext) -> Action:
        goal = None
        if self.kind == "pointnav":
            goal = world_to_gps(ctx.memory.episode, *ctx.target)
        return Action(self.policy.act(encode(self.kind, obs, self.sim, goal), self._mask))


class RandomSkill(SkillPolicy):
    backend = "random"

    def __init__(self, kind: str, seed: int = 0):
        self.kind = kind
        self.rng = np.random.default_rng(seed)
        self._choices = np.flatnonzero(allowed_actions(kind))

    def act(self, obs: Observation, ctx: SkillContext) -> Action:
        return Action(int(self.rng.choice(self._choices)))


def _bump_guard(action: Action, memory: AgentMemory) -> Action:
    # a blocked forward move repeats forever under a deterministic planner
    if action == Action.FORWARD and memory.bumped:
        return Action.TURN_LEFT
    return action


class ScriptedPointNav(SkillPolicy):
    kind, backend = "pointnav", "scripted"

    def __init__(self, use_gt_map: bool = False, sim: SimConfig = SimConfig()):
        self.use_gt_map = use_gt_map
        self.turn = sim.turn_angle

    def act(self, obs: Observation, ctx: SkillContext) -> Action:
        mem = ctx.memory
        omap = mem.gt_map if self.use_gt_map else mem.map
        if omap is None:
            raise ValueError("ground-truth map requested but not provided to this agent")
        try:
            a = plan_path(omap, mem.pose, ctx.target, self.turn).action
        except PlanningError:
            a = Action.TURN_LEFT
        return _bump_guard(a, mem)


class ScriptedExplore(SkillPolicy):
    """Frontier-based exploration: head for the closest frontier (by path
    length), preferring frontiers inside the context region when one is set."""

    kind, backend = "explore", "scripted"

    def __init__(self, sim: SimConfig = SimConfig(), patience: int = 40, min_size: int = 2):
        self.turn = sim.turn_angle
        self.patience = patience
        self.min_size = min_size
        self.reset()

    def reset(self) -> None:
        self.target: tuple[float, float] | None = None
        self.target_steps = 0
        self.blacklist: list[tuple[float, float]] = []

    def _banned(self, p) -> bool:
        return any(math.hypot(p[0] - b[0], p[1] - b[1]) < 0.5 for b in self.blacklist)

    def choose(self, ctx: SkillContext) -> tuple[float, float] | None:
        mem = ctx.memory
        omap = mem.map
        fronts = [f for f in extract_frontiers(omap, self.min_size) if not self._banned(f.centroid)]
        if not fronts:
            fronts = [f for f in extract_frontiers(omap, 1) if not self._banned(f.centroid)]
        if not fronts:
            return None
        if ctx.region is not None:
            (cx, cy), rad = ctx.region
            inside = [f for f in fronts
                      if math.hypot(f.centroid[0] - cx, f.centroid[1] - cy) <= rad + 1.0]
            fronts = inside or fronts
        trav = traversable_mask(omap, 0)
        a = omap.cell_of(*mem.pose.position)
        trav[a] = True
        dist = _field(trav, np.array([a]), omap.cell_size)
        costs = [float(dist[f.cells[:, 0], f.cells[:, 1]].min()) for f in fronts]
        k = int(np.argmin(costs))
        if not math.isfinite(costs[k]):
            return None
        return fronts[k].centroid

    def act(self, obs: Observation, ctx: SkillContext) -> Action:
        mem = ctx.memory
        target = self.choose(ctx)
        if target is None:
            return Action.STOP
        if self.target is not None and math.hypot(target[0] - self.target[0],
                                                  target[1] - self.target[1]) < 0.5:
            self.target_steps += 1
        else:
            self.target, self.target_steps = target, 0
        if self.target_steps > self.patience:
            self.blacklist.append(self.target)
            self.target, self.target_steps = None, 0
            return Action.TURN_LEFT
        x, y = mem.pose.position
        if math.hypot(target[0] - x, target[1] - y) < 1.0:
            # close frontiers are resolved by looking at them
            a = steer(mem.pose, target, self.turn)
            return Action.TURN_LEFT if a == Action.FORWARD and mem.bumped else a
        try:
            a = plan_path(mem.map, mem.pose, target, self.turn).action
        except PlanningError:
            self.blacklist.append(target)
            a = Action.TURN_LEFT
        return _bump_guard(a, mem)


class ScriptedReacher(SkillPolicy):
    """Stop when the goal is estimated within ``stop_distance`` and in sight:
    either a goal-mask ray reads that close, or a remembered goal cell is that
    close with a clear line over the agent's map.  Otherwise plan toward the
    nearest remembered goal cell."""

    kind, backend = "reacher", "scripted"

    def __init__(self, sim: SimConfig = SimConfig(), stop_distance: float = 0.9):
        self.turn = sim.turn_angle
        self.stop_distance = stop_distance

    @staticmethod
    def _in_sight(mem: AgentMemory, target: tuple[float, float]) -> bool:
        omap = mem.map
        ox, oy = omap.origin
        x, y = mem.pose.position
        _, r, c = geometry.first_hit(omap.state == OBSTACLE, omap.cell_size, x - ox, y - oy,
                                     target[0] - ox, target[1] - oy)
        return (r, c) == omap.cell_of(*target)

    def act(self, obs: Observation, ctx: SkillContext) -> Action:
        if obs.goal_mask.any() and obs.depth[obs.goal_mask].min() <= self.stop_distance:
            return Action.STOP
        mem = ctx.memory
        target = mem.nearest_goal_cell()
        if target is None:
            return Action.TURN_LEFT
        x, y = mem.pose.position
        if (math.hypot(target[0] - x, target[1] - y) <= self.stop_distance
                and self._in_sight(mem, target)):
            return Action.STOP
        try:
            a = plan_path(mem.map, mem.pose, target, self.turn).action
        except PlanningError:
            a = Action.TURN_LEFT
        return _bump_guard(a, mem)


def make_skill(kind: str, backend: str, checkpoint: Path | None = None, *,
               sim: SimConfig = SimConfig(), greedy: bool = True, seed: int = 0,
               use_gt_map: bool = False, temperature: float = 1.0) -> SkillPolicy:
    if backend == "learned":
        if checkpoint is None:
            raise FileNotFoundError(f"no checkpoint given for learned skill {kind!r}")
        if not Path(checkpoint).exists():
            raise FileNotFoundError(f"checkpoint for skill {kind!r} not found: {checkpoint}")
        return LearnedSkill.from_checkpoint(kind, checkpoint, greedy=greedy, seed=seed, sim=sim,
                                            temperature=temperature)
    if backend == "scripted":
        if kind == "pointnav":
            return ScriptedPointNav(use_gt_map, sim)
        if kind == "explore":
            return ScriptedExplore(sim)
        if kind == "reacher":
            return ScriptedReacher(sim)
    if backend == "random":
        return RandomSkill(kind, seed)
    raise ValueError(f"no {backend!r} backend for skill {kind!r}")
