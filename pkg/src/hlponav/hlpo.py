"""Landmark ranking, the hierarchical skill controller and the composed agents.

The controller visits landmarks (room centres) in order of
``P(goal | room type) / distance``: it drives to the current landmark with
the PointNav skill, explores inside its disk, hands over to the GoalReacher
as soon as the goal mask fires, and moves on to the next landmark when the
agent leaves the disk or spends its exploration budget there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from itertools import groupby
from pathlib import Path
from typing import Mapping

import numpy as np

from .mapper import OccupancyMap
from .scenegen import EpisodeSpec, LandmarkList, RoomObjectStats
from .simcore import Action, Observation, SimConfig
from .skills import POLICY_KINDS, AgentMemory, SkillContext, SkillPolicy, make_skill

METHODS = ("e2e_rl", "planning", "two_rl", "hlpo", "hlpo_plan", "hlpo_map")


class Phase(str, Enum):
    GOTO = "GoTo"
    EXPLORE = "Explore"
    REACH = "Reach"
    FALLBACK = "Fallback"
    DONE = "Done"


# transitions the controller may take (Done is terminal)
PHASE_GRAPH = {
    Phase.GOTO: {Phase.GOTO, Phase.EXPLORE, Phase.FALLBACK},
    Phase.EXPLORE: {Phase.EXPLORE, Phase.REACH, Phase.GOTO, Phase.FALLBACK},
    Phase.REACH: {Phase.REACH, Phase.EXPLORE, Phase.FALLBACK, Phase.DONE},
    Phase.FALLBACK: {Phase.FALLBACK, Phase.REACH},
    Phase.DONE: {Phase.DONE},
}

SKILL_OF = {Phase.GOTO: "pointnav", Phase.EXPLORE: "explore", Phase.REACH: "reacher",
            Phase.FALLBACK: "explore", Phase.DONE: "reacher"}


# ------------------------------------------------------------------------- ranking

@dataclass
class LandmarkPlan:
    order: list[tuple[int, float]]
    visited: set[int] = field(default_factory=set)
    nearest_first: bool = False

    @property
    def current(self) -> int | None:
        for i, _ in self.order:
            if i not in self.visited:
                return i
        return None


def landmark_score(p: float, distance: float, d_min: float = 1.0) -> float:
    return p / max(distance, d_min)


def rank_landmarks(landmarks: LandmarkList, stats: RoomObjectStats, goal_category: str,
                   agent_position: tuple[float, float], d_min: float = 1.0,
                   exclude: set[int] | frozenset = frozenset()) -> LandmarkPlan:
    """Order landmarks by score, then distance, then index.  When every
    score is zero the order is nearest-first and the plan is flagged."""
    x, y = agent_position
    rows = []
    for i, lm in enumerate(landmarks):
        if i in exclude:
            continue
        d = math.hypot(lm.center[0] - x, lm.center[1] - y)
        rows.append((-landmark_score(stats.prob(lm.room_type, goal_category), d, d_min), d, i))
    rows.sort()
    nearest = bool(rows) and all(r[0] == 0.0 for r in rows)
    return LandmarkPlan([(i, -s) for s, _, i in rows], set(exclude), nearest)


# ----------------------------------------------------------------------- controller

@dataclass(frozen=True)
class ControllerConfig:
    landmark_radius: float = 2.0
    explore_budget: int = 100
    goto_budget: int = 250
    mask_timeout: int = 20
    d_min: float = 1.0
    rerank: bool = True


@dataclass
class ControllerState:
    phase: Phase = Phase.GOTO
    target: int | None = None
    to_goal: bool = False
    reach_origin: Phase = Phase.EXPLORE
    phase_steps: int = 0
    mask_lost: int = 0
    selections: list[int] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)
    transitions: list[tuple[str, str]] = field(default_factory=list)


class HLPOController:
    """Skill-switching state machine for one episode at a time."""

    def __init__(self, skills: Mapping[str, SkillPolicy], landmarks: LandmarkList,
                 stats: RoomObjectStats, goal_category: str,
                 config: ControllerConfig = ControllerConfig()):
        missing = {"pointnav", "explore", "reacher"} - set(skills)
        if missing:
            raise ValueError(f"controller is missing skills {sorted(missing)}")
        self.skills = dict(skills)
        self.landmarks = landmarks
        self.stats = stats
        self.goal = goal_category
        self.config = config
        self.state = ControllerState()
        self.plan: LandmarkPlan | None = None

    # -- helpers ------------------------------------------------------------
    def _inside(self, pos) -> bool:
        if self.state.target is None:
            return False
        cx, cy = self.landmarks[self.state.target].center
        return math.hypot(pos[0] - cx, pos[1] - cy) <= self.config.landmark_radius

    def _enter(self, phase: Phase) -> None:
        st = self.state
        if phase not in PHASE_GRAPH[st.phase]:
            raise RuntimeError(f"illegal transition {st.phase.value} -> {phase.value}")
        if phase != st.phase:
            st.transitions.append((st.phase.value, phase.value))
            self.skills[SKILL_OF[phase]].reset()
        st.phase, st.phase_steps = phase, 0

    def _select(self, pos) -> None:
        """Choose the next unvisited landmark (or fall back to global exploration)."""
        st = self.state
        visited = set(self.plan.visited) if self.plan else set()
        if self.plan is None or self.config.rerank:
            self.plan = rank_landmarks(self.landmarks, self.stats, self.goal, pos,
                                       self.config.d_min, visited)
            self.plan.visited = visited
        st.target = self.plan.current
        if st.target is None:
            self._enter(Phase.FALLBACK)
        else:
            st.selections.append(st.target)
            self._enter(Phase.GOTO)
            self.skills["pointnav"].reset()

    def _visited(self, pos) -> None:
        self.plan.visited.add(self.state.target)
        self._select(pos)

    def reset(self, memory: AgentMemory) -> None:
        self.state = ControllerState()
        self.plan = None
        for s in self.skills.values():
            s.reset()
        self._select(memory.pose.position)

    # -- one decision -------------------------------------------------------
    def step(self, obs: Observation, memory: AgentMemory) -> Action:
        st, cfg = self.state, self.config
        pos = memory.pose.position
        seen = bool(obs.goal_mask.any())
        ctx = SkillContext(memory)
        for _ in range(4 + 2 * len(self.landmarks)):
            if st.phase == Phase.GOTO:
                if self._inside(pos):
                    self._enter(Phase.EXPLORE)
                    continue
                if st.phase_steps >= cfg.goto_budget:
                    self._visited(pos)
                    continue
                ctx.target = self.landmarks[st.target].center
                action = self.skills["pointnav"].act(obs, ctx)
            elif st.phase == Phase.EXPLORE:
                if not self._inside(pos) or st.phase_steps >= cfg.explore_budget:
                    self._visited(pos)
                    continue
                if seen:
                    st.reach_origin, st.to_goal, st.mask_lost = Phase.EXPLORE, True, 0
                    self._enter(Phase.REACH)
                    continue
                lm = self.landmarks[st.target]
                ctx.region = (lm.center, cfg.landmark_radius)
                action = self.skills["explore"].act(obs, ctx)
                if action == Action.STOP:
                    # nothing left to explore here
                    self._visited(pos)
                    continue
            elif st.phase == Phase.FALLBACK:
                if seen:
                    st.reach_origin, st.to_goal, st.mask_lost = Phase.FALLBACK, True, 0
                    self._enter(Phase.REACH)
                    continue
                action = self.skills["explore"].act(obs, ctx)
            elif st.phase == Phase.REACH:
                st.mask_lost = 0 if seen else st.mask_lost + 1
                if st.mask_lost >= cfg.mask_timeout:
                    st.to_goal = False
                    self._enter(st.reach_origin)
                    continue
                action = self.skills["reacher"].act(obs, ctx)
            else:
                raise RuntimeError("controller stepped after the episode ended")
            break
        else:
            raise RuntimeError("controller failed to settle on a skill")
        st.trace.append(st.phase.value)
        st.phase_steps += 1
        if action == Action.STOP and st.phase in (Phase.REACH, Phase.FALLBACK):
            st.phase = Phase.DONE
        return Action(action)

    @property
    def skill_in_control(self) -> str:
        return SKILL_OF[Phase(self.state.trace[-1])] if self.state.trace else ""


def controller_step(controller: HLPOController, obs: Observation,
                    memory: AgentMemory) -> tuple[Action, ControllerState]:
    return controller.step(obs, memory), controller.state


def compress_trace(trace: list[str], done: bool = False) -> list[str]:
    out = [k for k, _ in groupby(trace)]
    return out + [Phase.DONE.value] if done else out


# --------------------------------------------------------------------------- agents

@dataclass
class AgentInputs:
    """Everything an agent may read at episode start."""

    episode: EpisodeSpec
    landmarks: LandmarkList
    stats: RoomObjectStats
    sim: SimConfig = SimConfig()
    cell_size: float = 0.25
    gt_map: OccupancyMap | None = None


class Agent:
    method = ""
    needs_gt_map = False

    def reset(self, inputs: AgentInputs) -> None:
        if inputs.gt_map is not None and not self.needs_gt_map:
            raise ValueError(f"{self.method} agents must not receive the obstacle map")
        self.inputs = inputs
        self.memory = AgentMemory(inputs.episode, inputs.sim, inputs.cell_size, inputs.gt_map)
        self.tag = ""

    def act(self, obs: Observation) -> Action:
        raise NotImplementedError

    @property
    def phase_trace(self) -> list[str]:
        return []


class EndToEndAgent(Agent):
    method = "e2e_rl"

    def __init__(self, policy: SkillPolicy):
        self.policy = policy

    def reset(self, inputs: AgentInputs) -> None:
        super().reset(inputs)
        self.policy.reset()

    def act(self, obs: Observation) -> Action:
        self.memory.update(obs)
        self.tag = "e2e"
        return self.policy.act(obs, SkillContext(self.memory))


class TwoStageAgent(Agent):
    """Explore until the goal mask fires, then reach; no landmarks."""

    def __init__(self, method: str, explore: SkillPolicy, reacher: SkillPolicy,
                 mask_timeout: int = 20):
        self.method = method
        self.explore, self.reacher = explore, reacher
        self.mask_timeout = mask_timeout

    def reset(self, inputs: AgentInputs) -> None:
        super().reset(inputs)
        self.explore.reset()
        self.reacher.reset()
        self.reaching = False
        self.mask_lost = 0
        self._trace: list[str] = []

    def act(self, obs: Observation) -> Action:
        self.memory.update(obs)
        seen = bool(obs.goal_mask.any())
        ctx = SkillContext(self.memory)
        if not self.reaching and seen:
            self.reaching, self.mask_lost = True, 0
            self.reacher.reset()
        elif self.reaching:
            self.mask_lost = 0 if seen else self.mask_lost + 1
            if self.mask_lost >= self.mask_timeout:
                self.reaching = False
                self.explore.reset()
        skill = self.reacher if self.reaching else self.explore
        self.tag = skill.kind
        self._trace.append(Phase.REACH.value if self.reaching else Phase.EXPLORE.value)
        return skill.act(obs, ctx)

    @property
    def phase_trace(self) -> list[str]:
        return self._trace


class HLPOAgent(Agent):
    def __init__(self, method: str, skills: Mapping[str, SkillPolicy],
                 config: ControllerConfig = ControllerConfig(), needs_gt_map: bool = False):
        self.method = method
        self.skills = skills
        self.config = config
        self.needs_gt_map = needs_gt_map

    def reset(self, inputs: AgentInputs) -> None:
        super().reset(inputs)
        self.controller = HLPOController(self.skills, inputs.landmarks, inputs.stats,
                                         inputs.episode.goal_category, self.config)
        self._started = False

    def act(self, obs: Observation) -> Action:
        self.memory.update(obs)
        if not self._started:
            self.controller.reset(self.memory)
            self._started = True
        a = self.controller.step(obs, self.memory)
        self.tag = self.controller.skill_in_control
        return a

    @property
    def phase_trace(self) -> list[str]:
        return self.controller.state.trace if self._started else []


def make_agent(method: str, checkpoints: Mapping[str, Path] | None = None, *,
               sim: SimConfig = SimConfig(), greedy: bool = True, seed: int = 0,
               controller: ControllerConfig = ControllerConfig(),
               temperature: float = 1.0) -> Agent:
    """Build one of the compared agents.  ``checkpoints`` maps a policy kind
    (pointnav / explore / reacher / objectnav) to its checkpoint file."""
    ck = dict(checkpoints or {})

    def learned(kind: str) -> SkillPolicy:
        # one independent sampling stream per skill
        sub = int(np.random.SeedSequence([seed, POLICY_KINDS.index(kind)]).generate_state(1)[0])
        return make_skill(kind, "learned", ck.get(kind), sim=sim, greedy=greedy, seed=sub,
                          temperature=temperature)

    def scripted(kind: str, gt: bool = False) -> SkillPolicy:
        return make_skill(kind, "scripted", sim=sim, use_gt_map=gt)

    if method == "e2e_rl":
        return EndToEndAgent(learned("objectnav"))
    if method == "planning":
        return TwoStageAgent(method, scripted("explore"), scripted("reacher"),
                             controller.mask_timeout)
    if method == "two_rl":
        return TwoStageAgent(method, learned("explore"), learned("reacher"),
                             controller.mask_timeout)
    if method == "hlpo":
        return HLPOAgent(method, {k: learned(k) for k in ("pointnav", "explore", "reacher")},
                         controller)
    if method == "hlpo_plan":
        return HLPOAgent(method, {k: scripted(k) for k in ("pointnav", "explore", "reacher")},
                         controller)
    if method == "hlpo_map":
        return HLPOAgent(method, {"pointnav": scripted("pointnav", gt=True),
                                  "explore": learned("explore"),
                                  "reacher": learned("reacher")}, controller, needs_gt_map=True)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
