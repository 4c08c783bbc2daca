"""Adam optimiser and the synchronous mean all-reduce update."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class Adam:
    lr: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-5
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": self.m, "v": self.v}

    @classmethod
    def from_state(cls, d: dict) -> "Adam":
        return cls(float(d["lr"]), float(d["beta1"]), float(d["beta2"]), float(d["eps"]),
                   None if d["m"] is None else np.array(d["m"]),
                   None if d["v"] is None else np.array(d["v"]), int(d["t"]))


def clip_grad_norm(grad: np.ndarray, max_norm: float | None) -> tuple[np.ndarray, float]:
    norm = float(np.sqrt(np.dot(grad, grad)))
    if max_norm is not None and norm > max_norm:
        return grad * (max_norm / (norm + 1e-12)), norm
    return grad, norm


def allreduce_mean(worker_grads: Sequence[np.ndarray]) -> np.ndarray:
    if len(worker_grads) == 0:
        raise ValueError("no worker gradients submitted")
    shape = worker_grads[0].shape
    for i, g in enumerate(worker_grads):
        if g.shape != shape:
            raise ValueError(f"worker {i} gradient shape {g.shape} != {shape}")
    return np.mean(np.stack(worker_grads), axis=0)


def allreduce_update(worker_grads: Sequence[np.ndarray], optimizer: Adam, params: np.ndarray,
                     max_grad_norm: float | None = 0.5) -> tuple[np.ndarray, dict]:
    """Average the workers' gradients, clip, and take one optimiser step.

    The returned array is the single parameter snapshot every worker reads next.
    """
    grad, norm = clip_grad_norm(allreduce_mean(worker_grads), max_grad_norm)
    new = optimizer.step(params, grad)
    new.flags.writeable = False
    return new, {"grad_norm": norm}


@dataclass
class WorkerGroup:
    """In-process replicas that share one immutable parameter snapshot."""

    params: np.ndarray
    optimizer: Adam = field(default_factory=Adam)
    max_grad_norm: float | None = 0.5
    version: int = 0

    def __post_init__(self):
        self.params = np.array(self.params, dtype=np.float64)
        self.params.flags.writeable = False

    def update(self, worker_grads: Sequence[np.ndarray]) -> dict:
        # barrier: the caller hands in every worker's gradient for this version
        self.params, info = allreduce_update(worker_grads, self.optimizer, self.params,
                                             self.max_grad_norm)
        self.version += 1
        return info
