"""Clipped-ratio policy loss, value loss and entropy bonus with exact gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gae import Minibatch
from .network import NetSpec, NonFiniteError, backward_sequence, forward_sequence, masked_log_softmax


@dataclass(frozen=True)
class LossCoefs:
    clip_eps: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01


def _entropy_terms(logp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.exp(logp)
    plogp = np.where(p > 0.0, p * np.where(np.isfinite(logp), logp, 0.0), 0.0)
    ent = -plogp.sum(axis=-1)
    # d ent / d logits_k = -p_k (log p_k + ent); masked actions have p_k = 0
    safe = np.where(np.isfinite(logp), logp, 0.0)
    dent = -p * (safe + ent[..., None])
    return ent, dent


def ppo_loss(params: np.ndarray, spec: NetSpec, batch: Minibatch,
             coefs: LossCoefs = LossCoefs()) -> tuple[float, np.ndarray, dict]:
    """Mean over the minibatch of ``-surrogate + c_v * 0.5 (V - R)^2 - c_e * entropy``.

    Advantages are used as given (normalise beforehand).  Returns the loss,
    its gradient w.r.t. the flat parameters and diagnostic statistics.
    """
    logits, values, cache = forward_sequence(params, spec, batch.obs, batch.starts, batch.h0)
    logp_all = masked_log_softmax(logits, batch.allowed)
    T, B = batch.actions.shape
    N = T * B
    ti, bi = np.indices((T, B))
    logp = logp_all[ti, bi, batch.actions]
    ratio = np.exp(logp - batch.old_log_probs)
    A = batch.advantages
    eps = coefs.clip_eps
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    s1 = ratio * A
    s2 = clipped * A
    take_first = s1 <= s2
    surrogate = np.where(take_first, s1, s2)
    in_band = (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
    g_ratio = np.where(take_first | in_band, A, 0.0)

    ent, dent = _entropy_terms(logp_all)
    value_loss = 0.5 * np.mean((values - batch.returns) ** 2)
    policy_loss = -np.mean(surrogate)
    entropy = float(np.mean(ent))
    loss = policy_loss + coefs.value_coef * value_loss - coefs.entropy_coef * entropy
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite PPO loss")

    # d loss / d logp_a, then through log-softmax: onehot - p
    dlogp = -(g_ratio * ratio) / N
    probs = np.exp(logp_all)
    dlogits = -probs * dlogp[..., None]
    dlogits[ti, bi, batch.actions] += dlogp
    dlogits -= (coefs.entropy_coef / N) * dent
    dvalues = coefs.value_coef * (values - batch.returns) / N
    grad = backward_sequence(params, spec, cache, dlogits, dvalues)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite PPO gradient")

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": entropy,
        "approx_kl": float(np.mean(batch.old_log_probs - logp)),
        "clip_frac": float(np.mean(~in_band)),
    }
    return float(loss), grad, stats
