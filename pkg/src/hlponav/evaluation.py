"""Run agents over episode suites and collect results plus trajectory logs.

Seeding: the semantic noise of an episode depends only on the condition and
the episode identity, so every run sees the same misfiring surfaces (a fixed
segmenter); the run seed drives the agents' action sampling only.
"""
from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .hlpo import Agent, AgentInputs, ControllerConfig, compress_trace, make_agent
from .mapper import gt_map
from .metrics import EpisodeResult
from .scenegen import EpisodeSpec, RoomObjectStats, Scene, field_distance, goal_distance_field
from .simcore import Action, ObjectNavEnv, SemanticNoiseModel, SimConfig


@dataclass(frozen=True)
class Condition:
    name: str = "gt"
    p_fn: float = 0.0
    p_fp: float = 0.0

    def model(self, seed: int) -> SemanticNoiseModel:
        return SemanticNoiseModel(self.p_fn, self.p_fp, seed)


GT = Condition()
NOISY = Condition("noisy", 0.3, 0.02)


def _scene_key(scene_id: str) -> int:
    return int(hashlib.sha256(scene_id.encode()).hexdigest()[:8], 16)


def episode_seed(run_seed: int, episode: EpisodeSpec) -> int:
    """Per-episode agent seed derived from the run seed and the episode identity."""
    ss = np.random.SeedSequence([run_seed, episode.episode_id, _scene_key(episode.scene_id)])
    return int(ss.generate_state(1)[0])


def noise_seed(condition: Condition, episode: EpisodeSpec) -> int:
    """Persistence seed of the semantic noise; independent of the run."""
    tag = _scene_key(f"{condition.name}:{condition.p_fn!r}:{condition.p_fp!r}")
    ss = np.random.SeedSequence([tag, episode.episode_id, _scene_key(episode.scene_id)])
    return int(ss.generate_state(1)[0])


def run_episode(agent: Agent, scene: Scene, episode: EpisodeSpec, stats: RoomObjectStats,
                condition: Condition = GT, seed: int = 0, sim: SimConfig = SimConfig(),
                goal_field: np.ndarray | None = None,
                record: bool = True) -> tuple[EpisodeResult, dict]:
    """Roll one agent through one episode.  ``seed`` is recorded with the result;
    the log holds one entry per step: ``[x, y, heading, action, skill, collision, reward]``."""
    env = ObjectNavEnv(scene, sim)
    if goal_field is None:
        goal_field = goal_distance_field(scene, episode.goal_category, sim.success_distance)
    obs = env.reset(episode, condition.model(noise_seed(condition, episode)),
                    goal_field=goal_field)
    agent.reset(AgentInputs(episode, scene.landmarks, stats, sim, scene.cell_size,
                            gt_map(scene.blocked, scene.cell_size) if agent.needs_gt_map else None))
    x, y = episode.start_position
    d_init = field_distance(goal_field, x, y, scene.cell_size)
    traj = [[x, y, env.heading, None, "", False, 0.0]]
    stopped = False
    while not env.done:
        a = agent.act(obs)
        res = env.step(a)
        obs = res.observation
        stopped = a == Action.STOP
        if record:
            px, py = env.pose.position
            traj.append([px, py, env.pose.heading, int(a), agent.tag,
                         bool(res.info["collision"]), float(res.reward)])
    px, py = env.pose.position
    result = EpisodeResult(
        episode_id=episode.episode_id, scene_id=episode.scene_id,
        goal_category=episode.goal_category, success=bool(env.success),
        shortest_path=episode.shortest_path_length, path_length=env.path_length,
        steps=env.steps, initial_distance=d_init,
        final_distance=field_distance(goal_field, px, py, scene.cell_size),
        stopped=stopped, method=agent.method, condition=condition.name, seed=seed)
    log = {}
    if record:
        log = {"method": agent.method, "condition": condition.name, "seed": seed,
               "scene_id": episode.scene_id, "episode_id": episode.episode_id,
               "goal_category": episode.goal_category, "success": result.success,
               "path_length": result.path_length,
               "phases": compress_trace(agent.phase_trace, stopped and result.success),
               "trajectory": traj}
    return result, log


@dataclass
class SuiteSpec:
    method: str
    checkpoints: Mapping[str, str]
    condition: Condition
    run_seed: int
    greedy: bool = False
    sim: SimConfig = SimConfig()
    controller: ControllerConfig = ControllerConfig()
    temperature: float = 1.0


def _run_chunk(spec: SuiteSpec, scenes: Mapping[str, Scene], episodes: Sequence[EpisodeSpec],
               stats: RoomObjectStats, record: bool):
    checkpoints = {k: Path(v) for k, v in spec.checkpoints.items()}
    fields: dict[tuple[str, str], np.ndarray] = {}
    out = []
    for ep in episodes:
        scene = scenes[ep.scene_id]
        key = (ep.scene_id, ep.goal_category)
        if key not in fields:
            fields[key] = goal_distance_field(scene, ep.goal_category, spec.sim.success_distance)
        seed = episode_seed(spec.run_seed, ep)
        # a fresh agent per episode: sampled skills draw from a per-episode stream
        agent = make_agent(spec.method, checkpoints, sim=spec.sim, greedy=spec.greedy,
                           seed=seed, controller=spec.controller, temperature=spec.temperature)
        out.append(run_episode(agent, scene, ep, stats, spec.condition, seed, spec.sim,
                               fields[key], record))
    return out


def evaluate_suite(spec: SuiteSpec, scenes: Mapping[str, Scene], episodes: Sequence[EpisodeSpec],
                   stats: RoomObjectStats, workers: int = 1,
                   record: bool = True) -> tuple[list[EpisodeResult], list[dict]]:
    """Evaluate one method under one condition and run seed; results keep episode order."""
    if workers <= 1 or len(episodes) < 2:
        pairs = _run_chunk(spec, scenes, episodes, stats, record)
    else:
        chunks = [list(c) for c in np.array_split(np.arange(len(episodes)), workers) if len(c)]
        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(_run_chunk, spec, scenes, [episodes[i] for i in c], stats, record)
                    for c in chunks]
            pairs = [p for f in futs for p in f.result()]
    return [r for r, _ in pairs], [l for _, l in pairs]


# --------------------------------------------------------------------- log files

_STEP_KEYS = ("x", "y", "heading", "action", "skill", "collision", "reward")


def write_trajectories(path: Path, logs: Sequence[dict]) -> None:
    """Append logs as JSON lines: one ``episode`` header, then one ``step`` line per step."""
    with open(path, "a") as f:
        for log in logs:
            head = {k: v for k, v in log.items() if k != "trajectory"}
            head["type"] = "episode"
            head["steps"] = len(log["trajectory"]) - 1
            f.write(json.dumps(head, sort_keys=True) + "\n")
            for i, row in enumerate(log["trajectory"]):
                step = dict(zip(_STEP_KEYS, row))
                step.update(type="step", step=i, episode_id=log["episode_id"],
                            method=log["method"], condition=log["condition"])
                if "run" in log:
                    step["run"] = log["run"]
                f.write(json.dumps(step, sort_keys=True) + "\n")


def read_trajectories(path: Path) -> list[dict]:
    """Regroup a log file into one dict per episode with its ``trajectory`` rows."""
    out: list[dict] = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "episode":
                rec["trajectory"] = []
                out.append(rec)
            elif kind == "step":
                if not out or rec["episode_id"] != out[-1]["episode_id"]:
                    raise ValueError(f"step line without its episode header in {path}")
                out[-1]["trajectory"].append([rec[k] for k in _STEP_KEYS])
            else:
                raise ValueError(f"unknown log record type {kind!r}")
    return out


def trajectory_length(traj: Sequence[Sequence]) -> float:
    """Sum of straight segment lengths between consecutive logged positions."""
    total = 0.0
    for a, b in zip(traj, traj[1:]):
        total += math.hypot(b[0] - a[0], b[1] - a[1])
    return total
