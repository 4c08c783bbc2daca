"""Command-line harness: dataset generation, skill training, evaluation, statistics, rendering.

Every subcommand resolves a config from its defaults, an optional JSON file
(``--config``) and ``--set key=value`` overrides (dotted keys reach nested
sections, values are parsed as JSON when possible).  The resolved config and
its hash travel with every artifact written.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .dataset import (config_hash, load_dataset, scenegen_config_from_dict,
                      scenegen_config_to_dict, write_dataset, write_json)
from .evaluation import Condition, SuiteSpec, evaluate_suite, read_trajectories, write_trajectories
from .hlpo import METHODS, ControllerConfig
from .metrics import (EpisodeResult, SuiteReport, aggregate, read_results_csv, table1,
                      write_results_csv)
from .render import render_svg
from .rlcore import DivergenceError, TrainConfig, train
from .scenegen import (EpisodeSpec, GenerationError, Scene, compute_room_object_stats,
                       generate_scene, sample_episodes)
from .skills import (BENCHMARK_HOUSE, POLICY_KINDS, PRESETS, preset_kind, preset_scenes,
                     task_factory)

log = logging.getLogger("hlponav")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_DIVERGED = 4


class ConfigError(ValueError):
    """Bad config file, unknown key or invalid value."""


# ------------------------------------------------------------------------ configs

@dataclass
class GenConfig:
    out: str = "data"
    seed: int = 0
    episodes: int = 100
    min_geodesic: float = 5.0
    stats_scenes: int = 50
    scene: dict = field(default_factory=lambda: scenegen_config_to_dict(BENCHMARK_HOUSE))


@dataclass
class TrainRunConfig:
    skill: str = "pointnav"
    out: str = "runs/pointnav"
    scene_seed: int = 1
    preset: str | None = None    # scene mix and task options; defaults to the skill's own
    dataset: str | None = None   # train on a generated dataset's scenes instead of the preset
    init_from: str | None = None  # continue from another run's checkpoint (staged training)
    resume: bool = False
    train: dict = field(default_factory=dict)   # TrainConfig overrides


@dataclass
class EvalConfig:
    dataset: str = "data"
    checkpoints: str = "runs"    # holds <kind>/checkpoint.npz
    methods: list = field(default_factory=lambda: list(METHODS))
    conditions: list = field(default_factory=lambda: ["gt", "noisy"])
    p_fn: float = 0.3
    p_fp: float = 0.02
    runs: int = 3
    seed: int = 0
    workers: int = 1
    greedy: bool = False
    temperature: float = 0.3
    out: str = "results"
    controller: dict = field(default_factory=dict)


@dataclass
class StatsConfig:
    results: str = "results/episodes.csv"
    out: str | None = None


@dataclass
class RenderConfig:
    dataset: str = "data"
    log: str = "results/trajectories.jsonl"
    episode: int = 0
    method: str | None = None
    condition: str | None = None
    run: int | None = None
    out: str = "trajectory.svg"


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _merge(base: dict, updates: dict, where: str = "") -> dict:
    out = dict(base)
    for k, v in updates.items():
        if k not in out:
            raise ConfigError(f"unknown config key {where + k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def resolve_config(cls, path: str | None = None, overrides: Sequence[str] = ()):
    """Defaults, then the JSON file, then ``key=value`` overrides."""
    cfg = dataclasses.asdict(cls())
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        cfg = _merge(cfg, data)
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        head, _, tail = key.partition(".")
        value = _parse_value(text)
        cfg = _merge(cfg, {head: {tail: value} if tail else value})
    return cls(**cfg)


# keys that change where results go or how fast they come, not what they are
_NOT_HASHED = ("out", "workers")


def provenance(cfg) -> dict:
    body = dataclasses.asdict(cfg)
    seed = body.get("seed", body.get("train", {}).get("seed", 0))
    hashed = {k: v for k, v in body.items() if k not in _NOT_HASHED}
    return {"config": body, "config_hash": config_hash(hashed), "seed": seed}


# ---------------------------------------------------------------------------- gen

def generate_dataset(cfg: GenConfig) -> tuple[list[Scene], list[EpisodeSpec], Any]:
    """One episode per test scene; statistics from a disjoint set of training scenes."""
    if cfg.episodes < 1 or cfg.stats_scenes < 1 or cfg.min_geodesic < 0:
        raise ConfigError("episodes and stats_scenes must be positive, min_geodesic >= 0")
    try:
        scene_cfg = scenegen_config_from_dict(cfg.scene)
    except TypeError as exc:
        raise ConfigError(f"bad scene config: {exc}") from exc
    scene_cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    train_seed, test_seed, ep_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    train_scenes = [generate_scene(scene_cfg, train_seed + i, f"train_{i:04d}")
                    for i in range(cfg.stats_scenes)]
    stats = compute_room_object_stats(train_scenes)
    rng = np.random.default_rng(ep_seed)
    scenes: list[Scene] = []
    episodes: list[EpisodeSpec] = []
    i = 0
    while len(episodes) < cfg.episodes:
        if i >= 20 * cfg.episodes:
            raise GenerationError("could not sample enough episodes with the requested "
                                  f"min_geodesic={cfg.min_geodesic}")
        scene = generate_scene(scene_cfg, test_seed + i, f"test_{i:04d}")
        i += 1
        cats = scene.categories_present()
        if not cats:
            continue
        cat = cats[int(rng.integers(len(cats)))]
        try:
            (ep,) = sample_episodes(scene, cat, 1, cfg.min_geodesic, int(rng.integers(1 << 31)))
        except GenerationError:
            continue
        scenes.append(scene)
        episodes.append(dataclasses.replace(ep, episode_id=len(episodes)))
    return scenes, episodes, stats


def histograms(scenes: Sequence[Scene], episodes: Sequence[EpisodeSpec]) -> dict:
    rooms = Counter(r.room_type for s in scenes for r in s.rooms)
    goals = Counter(e.goal_category for e in episodes)
    objects = Counter(o.category for s in scenes for o in s.objects)
    return {"room_types": dict(sorted(rooms.items())),
            "goal_categories": dict(sorted(goals.items())),
            "object_categories": dict(sorted(objects.items()))}


def _bar_chart(title: str, counts: dict) -> str:
    lines = [title]
    top = max(counts.values(), default=1)
    for k, v in counts.items():
        lines.append(f"  {k:<10} {v:5d} {'#' * max(1, round(30 * v / top))}")
    return "\n".join(lines)


def cmd_gen(cfg: GenConfig) -> dict:
    scenes, episodes, stats = generate_dataset(cfg)
    hist = histograms(scenes, episodes)
    prov = provenance(cfg)
    manifest = write_dataset(Path(cfg.out), scenes, episodes, stats,
                             {**prov, "histograms": hist})
    lengths = [e.shortest_path_length for e in episodes]
    print(f"wrote {len(scenes)} scenes, {len(episodes)} episodes to {cfg.out} "
          f"(config {prov['config_hash']}); geodesic {min(lengths):.1f}-{max(lengths):.1f} m")
    print(_bar_chart("room types", hist["room_types"]))
    print(_bar_chart("goal categories", hist["goal_categories"]))
    return manifest


# -------------------------------------------------------------------------- train

def cmd_train(cfg: TrainRunConfig, progress=None):
    if cfg.skill not in POLICY_KINDS:
        raise ConfigError(f"unknown skill {cfg.skill!r}; expected one of {POLICY_KINDS}")
    name = cfg.preset or cfg.skill
    if name not in PRESETS or preset_kind(name) != cfg.skill:
        raise ConfigError(f"preset {name!r} does not train skill {cfg.skill!r}")
    preset = PRESETS[name]
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(cfg.train) - fields
    if unknown:
        raise ConfigError(f"unknown train keys {sorted(unknown)}")
    tc = TrainConfig(**{"learning_rate": preset.learning_rate, "num_envs": preset.num_envs,
                        **cfg.train})
    try:
        tc.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.dataset:
        scenes = list(load_dataset(Path(cfg.dataset)).scenes.values())
    else:
        scenes = preset_scenes(name, cfg.scene_seed)
    out = Path(cfg.out)
    if cfg.resume and cfg.init_from:
        raise ConfigError("resume and init_from are mutually exclusive")
    resume = out / "checkpoint.npz" if cfg.resume else None
    if cfg.init_from:
        resume = Path(cfg.init_from)
    if resume is not None and not resume.exists():
        raise ConfigError(f"nothing to continue from: {resume} does not exist")
    prov = provenance(dataclasses.replace(cfg, resume=False))
    result = train(task_factory(cfg.skill, scenes, **preset.task), tc, skill=cfg.skill,
                   out_dir=out, resume=resume, progress=progress,
                   extra_meta={"run_config": prov["config"], "run_config_hash": prov["config_hash"]})
    last = result.curve[-1] if result.curve else {}
    print(f"trained {cfg.skill} for {result.steps} steps -> {result.checkpoint}; "
          + ", ".join(f"{k}={v:.3f}" for k, v in last.items()
                      if k in ("success", "spl", "explored_area", "entropy")))
    return result


# --------------------------------------------------------------------------- eval

def _conditions(cfg: EvalConfig) -> list[Condition]:
    out = []
    for name in cfg.conditions:
        if name == "gt":
            out.append(Condition("gt"))
        elif name == "noisy":
            out.append(Condition("noisy", cfg.p_fn, cfg.p_fp))
        else:
            raise ConfigError(f"unknown semantic condition {name!r}; expected gt or noisy")
    return out


def run_seed(base: int, run: int) -> int:
    return int(np.random.SeedSequence([base, run]).generate_state(1)[0])


def evaluate_all(cfg: EvalConfig, dataset=None, checkpoints: dict | None = None,
                 progress=None) -> tuple[list[SuiteReport], dict]:
    """Every (method, condition, run); returns the reports and raw per-run results."""
    bad = [m for m in cfg.methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
    if cfg.runs < 1:
        raise ConfigError("runs must be >= 1")
    conds = _conditions(cfg)
    try:
        controller = ControllerConfig(**cfg.controller)
    except TypeError as exc:
        raise ConfigError(f"bad controller config: {exc}") from exc
    data = dataset or load_dataset(Path(cfg.dataset))
    if data.stats is None:
        raise ConfigError(f"dataset {cfg.dataset} carries no room/object statistics")
    ck = checkpoints if checkpoints is not None else {
        k: Path(cfg.checkpoints) / k / "checkpoint.npz" for k in POLICY_KINDS}
    reports, raw = [], {}
    for method in cfg.methods:
        for cond in conds:
            per_run, logs = [], []
            for run in range(cfg.runs):
                spec = SuiteSpec(method, ck, cond, run_seed(cfg.seed, run), cfg.greedy,
                                 controller=controller, temperature=cfg.temperature)
                t = time.perf_counter()
                res, lg = evaluate_suite(spec, data.scenes, data.episodes, data.stats,
                                         workers=cfg.workers)
                for entry in lg:
                    entry["run"] = run
                per_run.append(res)
                logs += lg
                if progress is not None:
                    progress(method, cond.name, run, res, time.perf_counter() - t)
            reports.append(aggregate(per_run, method, cond.name))
            raw[(method, cond.name)] = (per_run, logs)
    return reports, raw


def cmd_eval(cfg: EvalConfig) -> list[SuiteReport]:
    def progress(method, cond, run, res, secs):
        rate = sum(r.success for r in res) / len(res)
        log.info("%s/%s run %d: success %.3f (%.1fs)", method, cond, run, rate, secs)

    reports, raw = evaluate_all(cfg, progress=progress)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg)
    csv_path, traj_path = out / "episodes.csv", out / "trajectories.jsonl"
    for p in (csv_path, traj_path):
        p.unlink(missing_ok=True)
    tag = {"config_hash": prov["config_hash"]}
    for (method, cond), (per_run, logs) in raw.items():
        for run, res in enumerate(per_run):
            write_results_csv(csv_path, res, run, extra=tag)
        write_trajectories(traj_path, [{**entry, **tag} for entry in logs])
    write_json(out / "report.json", {**prov, "reports": [r.row() for r in reports]})
    table = table1(reports)
    (out / "table1.md").write_text(table + "\n")
    print(table)
    return reports


# -------------------------------------------------------------------------- stats

def reports_from_csv(path: Path) -> list[SuiteReport]:
    rows = read_results_csv(path)
    groups: dict[tuple[str, str], dict[int, list[EpisodeResult]]] = {}
    for run, res in rows:
        groups.setdefault((res.method, res.condition), {}).setdefault(run or 0, []).append(res)
    return [aggregate([runs[k] for k in sorted(runs)], m, c)
            for (m, c), runs in groups.items()]


def cmd_stats(cfg: StatsConfig) -> list[SuiteReport]:
    path = Path(cfg.results)
    if not path.exists():
        raise ConfigError(f"results file {path} not found")
    reports = reports_from_csv(path)
    table = table1(reports)
    print(table)
    if cfg.out:
        write_json(Path(cfg.out), {**provenance(cfg), "reports": [r.row() for r in reports]})
    return reports


# ------------------------------------------------------------------------- render

def cmd_render(cfg: RenderConfig) -> str:
    data = load_dataset(Path(cfg.dataset))
    match = [e for e in data.episodes if e.episode_id == cfg.episode]
    if not match:
        raise ConfigError(f"episode {cfg.episode} not in dataset {cfg.dataset}")
    ep = match[0]
    entry = None
    if cfg.log and Path(cfg.log).exists():
        for e in read_trajectories(Path(cfg.log)):
            if (e["episode_id"] == cfg.episode
                    and (cfg.method is None or e["method"] == cfg.method)
                    and (cfg.condition is None or e["condition"] == cfg.condition)
                    and (cfg.run is None or e.get("run") == cfg.run)):
                entry = e
                break
        if entry is None:
            raise ConfigError(f"no trajectory for episode {cfg.episode} matches the filters")
    svg = render_svg(data.scenes[ep.scene_id], entry, ep, provenance=provenance(cfg))
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    Path(cfg.out).write_text(svg)
    print(f"wrote {cfg.out}")
    return svg


# --------------------------------------------------------------------------- main

COMMANDS = {
    "gen": (GenConfig, cmd_gen, "generate scenes, episodes and room/object statistics"),
    "train": (TrainRunConfig, cmd_train, "train one skill policy with PPO"),
    "eval": (EvalConfig, cmd_eval, "evaluate methods over a dataset"),
    "stats": (StatsConfig, cmd_stats, "aggregate an episode CSV into a summary table"),
    "render": (RenderConfig, cmd_render, "draw a trajectory over its scene as SVG"),
}

# shorthand flags: flag name -> config key
_FLAGS = {
    "gen": ("out", "seed", "episodes", "min_geodesic"),
    "train": ("skill", "out", "dataset", "preset", "init_from"),
    "eval": ("dataset", "checkpoints", "runs", "seed", "workers", "out"),
    "stats": ("results", "out"),
    "render": ("dataset", "log", "episode", "method", "condition", "run", "out"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hlponav", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, _, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (dotted for nested sections)")
        for flag in _FLAGS[name]:
            p.add_argument(f"--{flag.replace('_', '-')}", dest=f"flag_{flag}", metavar=flag.upper())
        if name == "eval":
            p.add_argument("--methods", help="comma-separated method list")
            p.add_argument("--conditions", help="comma-separated: gt,noisy")
        if name == "train":
            p.add_argument("--resume", action="store_true")
            p.add_argument("--total-steps", type=int)
    return parser


def _overrides(name: str, args: argparse.Namespace) -> list[str]:
    out = list(args.set)
    for flag in _FLAGS[name]:
        v = getattr(args, f"flag_{flag}")
        if v is not None:
            out.append(f"{flag}={v}" if not isinstance(v, str) or _is_json(v)
                       else f"{flag}={json.dumps(v)}")
    if name == "eval":
        for key in ("methods", "conditions"):
            v = getattr(args, key)
            if v:
                out.append(f"{key}={json.dumps(v.split(','))}")
    if name == "train":
        if args.resume:
            out.append("resume=true")
        if args.total_steps is not None:
            out.append(f"train.total_steps={args.total_steps}")
    return out


def _is_json(text: str) -> bool:
    try:
        json.loads(text)
    except json.JSONDecodeError:
        return False
    return True


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    cls, fn, _ = COMMANDS[args.command]
    try:
        cfg = resolve_config(cls, args.config, _overrides(args.command, args))
        fn(cfg)
    except DivergenceError as exc:
        print(f"error: {exc}" + (f" (state saved to {exc.checkpoint})" if exc.checkpoint else ""),
              file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
