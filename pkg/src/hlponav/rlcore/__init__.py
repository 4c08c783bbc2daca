"""Recurrent actor-critic, advantage estimation, PPO and synchronous all-reduce training."""
from .gae import Minibatch, RolloutBuffer, compute_gae, normalize_advantages
from .network import (
    NetSpec,
    NonFiniteError,
    backward_sequence,
    forward,
    forward_sequence,
    init_params,
    masked_log_softmax,
    sample_actions,
)
from .optim import Adam, WorkerGroup, allreduce_mean, allreduce_update, clip_grad_norm
from .ppo import LossCoefs, ppo_loss
from .trainer import (
    DivergenceError,
    RecurrentPolicy,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    run_episodes,
    save_checkpoint,
    train,
    update_from_buffer,
)

__all__ = [
    "Adam", "DivergenceError", "LossCoefs", "Minibatch", "NetSpec", "NonFiniteError",
    "RecurrentPolicy", "RolloutBuffer", "TrainConfig", "TrainResult", "WorkerGroup",
    "allreduce_mean", "allreduce_update", "backward_sequence", "clip_grad_norm", "compute_gae",
    "forward", "forward_sequence", "init_params", "load_checkpoint", "masked_log_softmax",
    "normalize_advantages", "ppo_loss", "run_episodes", "sample_actions", "save_checkpoint",
    "train", "update_from_buffer",
]
