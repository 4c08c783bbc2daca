"""Generalized advantage estimation and the rollout buffer that feeds PPO."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                bootstrap: np.ndarray, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward recursion over ``[T, W]`` arrays.

    ``dones[t]`` marks that the episode ended with transition ``t``; it cuts
    both the bootstrap value and the advantage carried from ``t + 1``.
    Returns ``(advantages, returns)`` with ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.ndim == 1:
        a, r = compute_gae(rewards[:, None], values[:, None], np.asarray(dones)[:, None],
                           np.atleast_1d(bootstrap), gamma, lam)
        return a[:, 0], r[:, 0]
    if not (0.0 <= gamma <= 1.0 and 0.0 <= lam <= 1.0):
        raise ValueError("gamma and lambda must lie in [0, 1]")
    T = rewards.shape[0]
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap, dtype=np.float64)
    carry = np.zeros(rewards.shape[1])
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * notdone[t] - values[t]
        carry = delta + gamma * lam * notdone[t] * carry
        adv[t] = carry
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / max(float(adv.std()), floor)


@dataclass
class RolloutBuffer:
    """``T x W`` transitions plus the recurrent state at the segment start."""

    T: int
    W: int
    obs_dim: int
    hidden: int
    num_actions: int = 4
    obs: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)
    log_probs: np.ndarray = field(init=False)
    rewards: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)
    dones: np.ndarray = field(init=False)
    starts: np.ndarray = field(init=False)
    allowed: np.ndarray = field(init=False)
    h0: np.ndarray = field(init=False)
    bootstrap: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    norm_advantages: np.ndarray | None = None

    def __post_init__(self):
        T, W = self.T, self.W
        self.obs = np.zeros((T, W, self.obs_dim))
        self.actions = np.zeros((T, W), dtype=np.int64)
        self.log_probs = np.zeros((T, W))
        self.rewards = np.zeros((T, W))
        self.values = np.zeros((T, W))
        self.dones = np.zeros((T, W), dtype=bool)
        self.starts = np.zeros((T, W), dtype=bool)
        self.allowed = np.ones((T, W, self.num_actions), dtype=bool)
        self.h0 = np.zeros((W, self.hidden))

    def compute_advantages(self, bootstrap: np.ndarray, gamma: float, lam: float) -> None:
        if self.advantages is not None:
            raise RuntimeError("advantages already computed for this collection")
        self.bootstrap = np.asarray(bootstrap, dtype=np.float64).copy()
        self.advantages, self.returns = compute_gae(self.rewards, self.values, self.dones,
                                                    self.bootstrap, gamma, lam)
        self.norm_advantages = normalize_advantages(self.advantages)

    def columns(self, idx: np.ndarray) -> "Minibatch":
        """Slice whole env columns so recurrent segments stay intact."""
        if self.norm_advantages is None:
            raise RuntimeError("compute_advantages() must run before minibatching")
        return Minibatch(self.obs[:, idx], self.starts[:, idx], self.h0[idx],
                         self.actions[:, idx], self.log_probs[:, idx],
                         self.norm_advantages[:, idx], self.returns[:, idx],
                         self.allowed[:, idx])


@dataclass
class Minibatch:
    obs: np.ndarray
    starts: np.ndarray
    h0: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    allowed: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.actions.size

    @staticmethod
    def concat(parts: list["Minibatch"]) -> "Minibatch":
        """Join along the env axis."""
        cat = lambda name, ax: np.concatenate([getattr(p, name) for p in parts], axis=ax)
        allowed = None if parts[0].allowed is None else cat("allowed", 1)
        return Minibatch(cat("obs", 1), cat("starts", 1), cat("h0", 0), cat("actions", 1),
                         cat("old_log_probs", 1), cat("advantages", 1), cat("returns", 1),
                         allowed)
