"""Synchronous PPO training loop over in-process worker replicas.

Environments follow a small protocol (see :class:`TaskEnv`): ``reset()`` and
``step()`` return flat float observation vectors, ``allowed()`` returns the
action mask, and the ``info`` of a terminal step carries an ``"episode"``
dict of metrics that feed the training curve.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from ..dataset import stable_hash
from .gae import Minibatch, RolloutBuffer
from .network import NetSpec, forward, init_params, masked_log_softmax, sample_actions
from .optim import Adam, WorkerGroup
from .ppo import LossCoefs, ppo_loss

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    def __init__(self, message: str, checkpoint: Path | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


class TaskEnv(Protocol):
    obs_dim: int

    def reset(self) -> np.ndarray: ...

    def step(self, action: int) -> tuple[np.ndarray, float, bool, dict]: ...

    def allowed(self) -> np.ndarray: ...


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 2.5e-4
    mini_batches: int = 2
    rollout_length: int = 32
    num_envs: int = 22
    num_workers: int = 1
    epochs: int = 2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden: int = 128
    enc_dim: int = 64
    total_steps: int = 200_000
    entropy_floor: float = 0.01
    entropy_patience: int = 50
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        if self.num_envs % self.num_workers:
            raise ValueError("num_envs must be divisible by num_workers")
        per_worker = self.num_envs // self.num_workers
        if per_worker < self.mini_batches:
            raise ValueError("each worker needs at least one env per minibatch")

    @property
    def coefs(self) -> LossCoefs:
        return LossCoefs(self.clip_eps, self.value_coef, self.entropy_coef)


def partition(n: int, parts: int) -> list[np.ndarray]:
    return [a for a in np.array_split(np.arange(n), parts)]


def update_from_buffer(group: WorkerGroup, spec: NetSpec, buf: RolloutBuffer,
                       config: TrainConfig) -> dict:
    """PPO epochs over fixed env-column minibatches; one all-reduce per minibatch.

    Worker ``w`` owns env columns ``partition(W, num_workers)[w]`` and splits
    them into ``mini_batches`` groups.
    """
    workers = partition(buf.W, config.num_workers)
    splits = [[cols[i] for i in partition(len(cols), config.mini_batches)] for cols in workers]
    stats: dict[str, list[float]] = {}
    for _ in range(config.epochs):
        for m in range(config.mini_batches):
            grads = []
            for w in range(config.num_workers):
                _, g, s = ppo_loss(group.params, spec, buf.columns(splits[w][m]), config.coefs)
                grads.append(g)
                for k, v in s.items():
                    stats.setdefault(k, []).append(v)
            info = group.update(grads)
            stats.setdefault("grad_norm", []).append(info["grad_norm"])
    return {k: float(np.mean(v)) for k, v in stats.items()}


def minibatch_of(buf: RolloutBuffer, cols: Sequence[int]) -> Minibatch:
    return buf.columns(np.asarray(cols))


# -- checkpoints ----------------------------------------------------------------
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(path: Path, params: np.ndarray, spec: NetSpec, optimizer: Adam | None,
                    meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"version": CHECKPOINT_VERSION, "net": dataclasses.asdict(spec), **meta}
    arrays = {"params": np.asarray(params)}
    if optimizer is not None and optimizer.m is not None:
        arrays |= {"adam_m": optimizer.m, "adam_v": optimizer.v}
        header["adam"] = {k: v for k, v in optimizer.state_dict().items() if k not in ("m", "v")}
    arrays["meta"] = np.array(json.dumps(header, sort_keys=True))
    tmp = path.with_suffix(".tmp.npz")
    # fixed entry timestamps so identical runs give identical files
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            with zf.open(zipfile.ZipInfo(f"{name}.npy", _ZIP_EPOCH), "w", force_zip64=True) as f:
                np.lib.format.write_array(f, np.asarray(arrays[name]), allow_pickle=False)
    tmp.replace(path)
    return path


def load_checkpoint(path: Path) -> tuple[np.ndarray, NetSpec, Adam | None, dict]:
    with np.load(Path(path)) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = z["params"].copy()
        opt = None
        if "adam_m" in z:
            opt = Adam.from_state(meta["adam"] | {"m": z["adam_m"].copy(), "v": z["adam_v"].copy()})
    spec = NetSpec(**meta["net"])
    if params.shape != (spec.size,):
        raise ValueError("checkpoint parameter count does not match its network spec")
    return params, spec, opt, meta


# -- training ---------------------------------------------------------------------
@dataclass
class TrainResult:
    params: np.ndarray
    spec: NetSpec
    curve: list[dict]
    steps: int
    checkpoint: Path | None


_BOOKKEEPING = ("update", "step", "env", "episodes")


def _curve_row(update: int, steps: int, episodes: list[dict], stats: dict) -> dict:
    row = {"update": update, "step": steps, "episodes": len(episodes)}
    keys = sorted({k for e in episodes for k, v in e.items()
                   if isinstance(v, (int, float, bool)) and k not in _BOOKKEEPING})
    for k in keys:
        vals = [float(e[k]) for e in episodes if k in e]
        row[k] = float(np.mean(vals)) if vals else math.nan
    row |= {k: stats[k] for k in ("loss", "entropy", "value_loss", "approx_kl", "clip_frac")
            if k in stats}
    return row


def write_curve(path: Path, rows: list[dict]) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in keys})


def train(make_envs: Callable[[int, int], list], config: TrainConfig, *, skill: str = "policy",
          out_dir: Path | None = None, resume: Path | None = None, extra_meta: dict | None = None,
          progress: Callable[[dict], None] | None = None) -> TrainResult:
    """Run PPO until ``config.total_steps`` environment steps have been taken.

    ``make_envs(n, seed)`` builds ``n`` task environments.  With ``out_dir``
    the loop writes ``curve.csv``, ``episodes.jsonl`` and ``checkpoint.npz``.
    """
    config.validate()
    # a raw run config may name output paths; its own hash (when given) already omits them
    hashed = {k: v for k, v in (extra_meta or {}).items()
              if not (k == "run_config" and "run_config_hash" in extra_meta)}
    chash = stable_hash({"train": config, "skill": skill, "extra": hashed})
    start_update, steps = 0, 0
    curve: list[dict] = []
    if resume is not None:
        params, spec, opt, meta = load_checkpoint(resume)
        start_update, steps = int(meta["update"]), int(meta["step"])
        opt = opt or Adam(lr=config.learning_rate)
        if out_dir is not None and (Path(out_dir) / "curve.csv").exists():
            with open(Path(out_dir) / "curve.csv") as f:
                curve = [{k: _num(v) for k, v in r.items()} for r in csv.DictReader(f)]
            curve = [r for r in curve if int(r["update"]) <= start_update]
    envs = make_envs(config.num_envs, config.seed + 7919 * start_update)
    obs_dim = envs[0].obs_dim
    if resume is None:
        spec = NetSpec(obs_dim, config.enc_dim, config.hidden, 4)
        params = init_params(spec, np.random.default_rng([config.seed, 1]))
        opt = Adam(lr=config.learning_rate)
    elif spec.obs_dim != obs_dim:
        raise ValueError("checkpoint observation size does not match the task")
    group = WorkerGroup(params, opt, config.max_grad_norm)
    rng = np.random.default_rng([config.seed, 2, start_update])

    W, T = config.num_envs, config.rollout_length
    obs = np.stack([e.reset() for e in envs])
    starts = np.ones(W, dtype=bool)
    h = spec.zero_state(W)
    low_entropy = 0
    ckpt_path = Path(out_dir) / "checkpoint.npz" if out_dir is not None else None
    ep_log = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        ep_log = open(Path(out_dir) / "episodes.jsonl", "a" if resume else "w")

    def meta(update: int) -> dict:
        return {"skill": skill, "config_hash": chash, "seed": config.seed, "update": update,
                "step": steps, "train_config": dataclasses.asdict(config),
                **(extra_meta or {})}

    update = start_update
    t0 = time.perf_counter()
    try:
        while steps < config.total_steps:
            buf = RolloutBuffer(T, W, obs_dim, spec.hidden)
            buf.h0[:] = h
            finished: list[dict] = []
            for t in range(T):
                allowed = np.stack([e.allowed() for e in envs])
                h = h * (~starts)[:, None]
                logits, value, h = forward(group.params, spec, obs, h)
                actions, logp = sample_actions(logits, rng, allowed)
                buf.obs[t], buf.starts[t], buf.allowed[t] = obs, starts, allowed
                buf.actions[t], buf.log_probs[t], buf.values[t] = actions, logp, value
                nxt = np.empty_like(obs)
                for i, e in enumerate(envs):
                    o, r, d, info = e.step(int(actions[i]))
                    buf.rewards[t, i], buf.dones[t, i] = r, d
                    if d:
                        ep = dict(info.get("episode", {}))
                        ep |= {"update": update, "step": steps + (t + 1) * W, "env": i}
                        finished.append(ep)
                        o = e.reset()
                    nxt[i] = o
                obs = nxt
                starts = buf.dones[t].copy()
            steps += T * W
            # bootstrap from the next observation with the state it would see
            _, boot, _ = forward(group.params, spec, obs, h * (~starts)[:, None])
            buf.compute_advantages(boot, config.gamma, config.gae_lambda)
            stats = update_from_buffer(group, spec, buf, config)
            update += 1
            row = _curve_row(update, steps, finished, stats)
            curve.append(row)
            if ep_log is not None:
                for ep in finished:
                    ep_log.write(json.dumps(ep, sort_keys=True) + "\n")
            if progress is not None:
                progress(row)
            if update % 20 == 0:
                log.info("%s update %d step %d (%.0fs) %s", skill, update, steps,
                         time.perf_counter() - t0,
                         {k: round(v, 3) for k, v in row.items() if isinstance(v, float)})
            low_entropy = low_entropy + 1 if stats["entropy"] < config.entropy_floor else 0
            if low_entropy >= config.entropy_patience:
                path = None
                if ckpt_path is not None:
                    path = save_checkpoint(ckpt_path.with_name("diverged.npz"), group.params,
                                           spec, group.optimizer, meta(update))
                raise DivergenceError(
                    f"policy entropy below {config.entropy_floor} nats for "
                    f"{config.entropy_patience} updates", path)
    except FloatingPointError as exc:
        path = None
        if ckpt_path is not None:
            path = save_checkpoint(ckpt_path.with_name("diverged.npz"), group.params, spec,
                                   group.optimizer, meta(update))
        raise DivergenceError(f"training diverged: {exc}", path) from exc
    finally:
        if ep_log is not None:
            ep_log.close()

    if out_dir is not None:
        save_checkpoint(ckpt_path, group.params, spec, group.optimizer, meta(update))
        write_curve(Path(out_dir) / "curve.csv", curve)
    return TrainResult(np.array(group.params), spec, curve, steps, ckpt_path)


def _num(v: str):
    try:
        f = float(v)
    except (TypeError, ValueError):
        return v
    return int(f) if f.is_integer() and "." not in v and "e" not in v else f


# -- rollouts with a fixed policy ---------------------------------------------------
class RecurrentPolicy:
    """Acts with frozen parameters; keeps one hidden state per engagement.

    Sampling divides the logits by ``temperature``; ``greedy`` takes the argmax.
    """

    def __init__(self, params: np.ndarray, spec: NetSpec, greedy: bool = True,
                 rng: np.random.Generator | None = None, temperature: float = 1.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.params = params
        self.spec = spec
        self.greedy = greedy
        self.temperature = temperature
        self.rng = rng or np.random.default_rng(0)
        self.reset()

    def reset(self) -> None:
        self.h = self.spec.zero_state(1)

    def act(self, obs_vec: np.ndarray, allowed: np.ndarray | None = None) -> int:
        logits, _, self.h = forward(self.params, self.spec, obs_vec[None], self.h)
        mask = None if allowed is None else allowed[None]
        if self.greedy:
            lp = masked_log_softmax(logits, mask)
            return int(np.argmax(lp[0]))
        a, _ = sample_actions(logits / self.temperature, self.rng, mask)
        return int(a[0])


def run_episodes(env, policy: RecurrentPolicy, n: int) -> list[dict]:
    """Roll a policy through ``n`` episodes of a task env; returns episode metrics."""
    out = []
    for _ in range(n):
        obs = env.reset()
        policy.reset()
        while True:
            obs, _, done, info = env.step(policy.act(obs, env.allowed()))
            if done:
                out.append(dict(info.get("episode", {})))
                break
    return out
