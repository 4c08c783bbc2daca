"""Episode MDP: four-action kinematics, ray-cast depth/semantic sensors,
GPS+compass relative to the episode start and the stop-success rule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import geometry
from .scenegen import EpisodeSpec, Landmark, Scene, field_distance, goal_distance_field


class Action(IntEnum):
    FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    STOP = 3


NUM_ACTIONS = len(Action)
NO_ACTION = -1


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    num_rays: int = 32
    fov_deg: float = 90.0
    max_range: float = 5.0
    forward_step: float = 0.25
    turn_angle_deg: float = 30.0
    max_steps: int = 500
    success_distance: float = 1.0
    landmark_radius: float = 2.0

    @property
    def turn_angle(self) -> float:
        return math.radians(self.turn_angle_deg)

    def ray_offsets(self) -> np.ndarray:
        """Relative ray angles; index ``num_rays // 2`` looks straight ahead."""
        k = np.arange(self.num_rays) - self.num_rays // 2
        return k * (math.radians(self.fov_deg) / self.num_rays)


@dataclass(frozen=True)
class AgentPose:
    position: tuple[float, float]
    heading: float


@dataclass(frozen=True)
class SemanticNoiseModel:
    p_fn: float = 0.0
    p_fp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_fn <= 1.0 and 0.0 <= self.p_fp <= 1.0):
            raise ValueError("noise rates must lie in [0, 1]")

    @property
    def is_gt(self) -> bool:
        return self.p_fn == 0.0 and self.p_fp == 0.0

    def with_seed(self, seed: int) -> "SemanticNoiseModel":
        return SemanticNoiseModel(self.p_fn, self.p_fp, seed)


@dataclass
class NoiseState:
    """Per-episode persistent draws, one pair of uniforms per surface cell."""

    model: SemanticNoiseModel
    u_fn: np.ndarray
    u_fp: np.ndarray


def make_noise_state(model: SemanticNoiseModel, shape: tuple[int, int]) -> NoiseState:
    rng = np.random.default_rng(model.seed)
    return NoiseState(model, rng.random(shape), rng.random(shape))


def apply_semantic_noise(goal_mask: np.ndarray, hit_rows: np.ndarray, hit_cols: np.ndarray,
                         noise: SemanticNoiseModel, state: NoiseState | None) -> np.ndarray:
    """Flip goal-mask rays; the decision for a surface cell is fixed per episode."""
    mask = np.asarray(goal_mask, dtype=bool)
    if noise.is_gt or state is None:
        return mask.copy()
    out = mask.copy()
    hit = hit_rows >= 0
    r = np.where(hit, hit_rows, 0)
    c = np.where(hit, hit_cols, 0)
    out[mask & hit & (state.u_fn[r, c] < noise.p_fn)] = False
    out[~mask & hit & (state.u_fp[r, c] < noise.p_fp)] = True
    return out


@dataclass(frozen=True)
class Observation:
    depth: np.ndarray
    goal_mask: np.ndarray
    gps: np.ndarray
    compass: float
    prev_action: int


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def evaluate_stop(pose: AgentPose, scene: Scene, goal_category: str,
                  success_distance: float = 1.0) -> bool:
    x, y = pose.position
    for idx in scene.instances(goal_category):
        if (scene.distance_to_object(idx, x, y) <= success_distance
                and scene.object_visible(idx, x, y)):
            return True
    return False


def inside_landmark_area(pose: AgentPose, landmark: Landmark, radius: float) -> bool:
    if radius <= 0:
        raise ValueError("radius must be positive")
    cx, cy = landmark.center
    x, y = pose.position
    return math.hypot(x - cx, y - cy) <= radius


class ObjectNavEnv:
    """Single-owner episode simulator over an immutable scene."""

    def __init__(self, scene: Scene, config: SimConfig = SimConfig()):
        self.scene = scene
        self.config = config
        self._offsets = config.ray_offsets()
        self._blocked = scene.blocked
        self.done = True
        self.episode: EpisodeSpec | None = None
        self.goal_field: np.ndarray | None = None

    # -- state ---------------------------------------------------------------
    @property
    def heading(self) -> float:
        return self._h0 + self._turns * self.config.turn_angle

    @property
    def pose(self) -> AgentPose:
        return AgentPose((self._x, self._y), geometry.wrap_angle(self.heading))

    def distance_to_goal(self) -> float:
        if self.goal_field is None:
            return math.nan
        return field_distance(self.goal_field, self._x, self._y, self.scene.cell_size)

    # -- MDP -----------------------------------------------------------------
    def reset(self, episode: EpisodeSpec, noise: SemanticNoiseModel = SemanticNoiseModel(),
              goal_field: np.ndarray | None = None) -> Observation:
        x, y = episode.start_position
        r, c = geometry.world_to_cell(x, y, self.scene.cell_size)
        H, W = self.scene.shape
        if not (0 <= r < H and 0 <= c < W) or self._blocked[r, c]:
            raise EpisodeError(f"start cell {(r, c)} is occupied")
        self.episode = episode
        self.noise = noise
        self._noise_state = None if noise.is_gt else make_noise_state(noise, self.scene.shape)
        self._x, self._y = float(x), float(y)
        self._x0, self._y0 = self._x, self._y
        self._h0 = float(episode.start_heading)
        self._turns = 0
        self.steps = 0
        self.forward_moves = 0
        self.done = False
        self.success = False
        self.prev_action = NO_ACTION
        # trailing False so that index -1 (no object) maps to a non-goal
        self._is_goal = np.array([o.category == episode.goal_category for o in self.scene.objects]
                                 + [False], dtype=bool)
        if goal_field is not None:
            self.goal_field = goal_field
        elif episode.goal_category and self.scene.instances(episode.goal_category):
            self.goal_field = goal_distance_field(self.scene, episode.goal_category,
                                                  self.config.success_distance)
        else:
            self.goal_field = None
        self.last_observation = self._observe()
        return self.last_observation

    @property
    def path_length(self) -> float:
        return self.forward_moves * self.config.forward_step

    def _scan(self):
        angles = self.heading + self._offsets
        dist, rows, cols = geometry.ray_scan(self._blocked, self.scene.cell_size,
                                             self._x, self._y, angles, self.config.max_range)
        return np.maximum(dist, 1e-6), rows, cols

    def _observe(self) -> Observation:
        dist, rows, cols = self._scan()
        mask = np.zeros(len(dist), dtype=bool)
        cat = self.episode.goal_category
        if cat:
            hit = rows >= 0
            ids = self.scene.object_map[np.where(hit, rows, 0), np.where(hit, cols, 0)]
            mask = hit & (ids >= 0) & self._is_goal[ids]
            mask = apply_semantic_noise(mask, rows, cols, self.noise, self._noise_state)
        self.hit_rows, self.hit_cols = rows, cols
        dx, dy = self._x - self._x0, self._y - self._y0
        ch, sh = math.cos(self._h0), math.sin(self._h0)
        gps = np.array([ch * dx + sh * dy, -sh * dx + ch * dy])
        compass = geometry.wrap_angle(self._turns * self.config.turn_angle)
        return Observation(dist, mask, gps, compass, self.prev_action)

    def _forward_blocked(self) -> bool:
        h = np.array([self.heading])
        d, _, _ = geometry.ray_scan(self._blocked, self.scene.cell_size, self._x, self._y,
                                    h, self.config.forward_step + 1.0)
        return bool(d[0] <= self.config.forward_step + 1e-9)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeError("step() called on a finished episode")
        action = Action(int(action))
        collision = False
        if action == Action.FORWARD:
            if self._forward_blocked():
                collision = True
            else:
                h = self.heading
                self._x += self.config.forward_step * math.cos(h)
                self._y += self.config.forward_step * math.sin(h)
                self.forward_moves += 1
        elif action == Action.TURN_LEFT:
            self._turns += 1
        elif action == Action.TURN_RIGHT:
            self._turns -= 1
        self.steps += 1
        self.prev_action = int(action)
        if action == Action.STOP:
            self.done = True
            if self.episode.goal_category:
                self.success = evaluate_stop(self.pose, self.scene, self.episode.goal_category,
                                             self.config.success_distance)
        elif self.steps >= self.config.max_steps:
            self.done = True
        obs = self._observe()
        self.last_observation = obs
        info = {
            "collision": collision,
            "distance_to_goal": self.distance_to_goal(),
            "inside_landmark": self.landmark_index(),
            "success": self.success,
            "steps": self.steps,
            "path_length": self.path_length,
        }
        return StepResult(obs, 0.0, self.done, info)

    def landmark_index(self) -> int:
        pose = self.pose
        for i, lm in enumerate(self.scene.landmarks):
            if inside_landmark_area(pose, lm, self.config.landmark_radius):
                return i
        return -1

    def pose_from_odometry(self, obs: Observation) -> AgentPose:
        """World pose recovered from GPS+compass and the start pose anchor."""
        return pose_from_odometry(self.episode, obs)


def pose_from_odometry(episode: EpisodeSpec, obs: Observation) -> AgentPose:
    x0, y0 = episode.start_position
    h0 = episode.start_heading
    ch, sh = math.cos(h0), math.sin(h0)
    gx, gy = float(obs.gps[0]), float(obs.gps[1])
    return AgentPose((x0 + ch * gx - sh * gy, y0 + sh * gx + ch * gy),
                     geometry.wrap_angle(h0 + obs.compass))


def world_to_gps(episode: EpisodeSpec, x: float, y: float) -> np.ndarray:
    """Express a world point in the episode's GPS frame (start pose at the origin)."""
    x0, y0 = episode.start_position
    ch, sh = math.cos(episode.start_heading), math.sin(episode.start_heading)
    dx, dy = x - x0, y - y0
    return np.array([ch * dx + sh * dy, -sh * dx + ch * dy])
