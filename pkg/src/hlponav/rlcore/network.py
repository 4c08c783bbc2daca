"""Two-head recurrent actor-critic with exact backpropagation through time.

Trunk: two tanh fully-connected layers feeding a GRU cell; heads: one linear
layer for action logits and one for the state value.  All parameters live in
one flat float64 vector so optimisers and all-reduce act on a single array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when activations, losses or gradients stop being finite."""


@dataclass(frozen=True)
class NetSpec:
    obs_dim: int
    enc_dim: int = 64
    hidden: int = 128
    num_actions: int = 4

    @cached_property
    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        D, E, H, A = self.obs_dim, self.enc_dim, self.hidden, self.num_actions
        return [
            ("W1", (D, E)), ("b1", (E,)),
            ("W2", (E, E)), ("b2", (E,)),
            ("Wx", (E, 3 * H)), ("bx", (3 * H,)),
            ("Uzr", (H, 2 * H)), ("Un", (H, H)),
            ("Wa", (H, A)), ("ba", (A,)),
            ("Wv", (H, 1)), ("bv", (1,)),
        ]

    @cached_property
    def size(self) -> int:
        return sum(math.prod(s) for _, s in self.layout)

    def views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out, i = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            out[name] = flat[i:i + n].reshape(shape)
            i += n
        return out

    def zero_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden))


def init_params(spec: NetSpec, rng: np.random.Generator) -> np.ndarray:
    flat = np.zeros(spec.size)
    p = spec.views(flat)
    D, E, H = spec.obs_dim, spec.enc_dim, spec.hidden
    p["W1"][:] = rng.normal(0.0, math.sqrt(2.0 / (D + E)), (D, E))
    p["W2"][:] = rng.normal(0.0, math.sqrt(2.0 / (2 * E)), (E, E))
    p["Wx"][:] = rng.normal(0.0, math.sqrt(1.0 / E), (E, 3 * H))
    # orthogonal recurrent blocks
    p["Uzr"][:, :H] = np.linalg.qr(rng.normal(size=(H, H)))[0]
    p["Uzr"][:, H:] = np.linalg.qr(rng.normal(size=(H, H)))[0]
    p["Un"][:] = np.linalg.qr(rng.normal(size=(H, H)))[0]
    p["Wa"][:] = rng.normal(0.0, 0.01, p["Wa"].shape)
    p["Wv"][:] = rng.normal(0.0, math.sqrt(1.0 / H), p["Wv"].shape)
    return flat


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def masked_log_softmax(logits: np.ndarray, allowed: np.ndarray | None) -> np.ndarray:
    z = logits if allowed is None else np.where(allowed, logits, -np.inf)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def _check(*arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("non-finite activation in policy network")


def forward(params: np.ndarray, spec: NetSpec, obs: np.ndarray,
            state: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One step for a batch: returns ``(logits[B, A], value[B], new_state[B, H])``."""
    p = spec.views(params)
    H = spec.hidden
    e1 = np.tanh(obs @ p["W1"] + p["b1"])
    e2 = np.tanh(e1 @ p["W2"] + p["b2"])
    gx = e2 @ p["Wx"] + p["bx"]
    gh = state @ p["Uzr"]
    z = _sigmoid(gx[:, :H] + gh[:, :H])
    r = _sigmoid(gx[:, H:2 * H] + gh[:, H:])
    n = np.tanh(gx[:, 2 * H:] + (r * state) @ p["Un"])
    h = (1.0 - z) * n + z * state
    logits = h @ p["Wa"] + p["ba"]
    value = (h @ p["Wv"] + p["bv"])[:, 0]
    _check(logits, value)
    return logits, value, h


@dataclass
class SeqCache:
    obs: np.ndarray
    keep: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    hp: list
    z: list
    r: list
    n: list
    h: np.ndarray


def forward_sequence(params: np.ndarray, spec: NetSpec, obs: np.ndarray, starts: np.ndarray,
                     h0: np.ndarray) -> tuple[np.ndarray, np.ndarray, SeqCache]:
    """Unroll over ``obs[T, B, D]``; the state is zeroed before steps where
    ``starts[t, b]`` is true.  Returns logits ``[T, B, A]`` and values ``[T, B]``."""
    p = spec.views(params)
    T, B, D = obs.shape
    H = spec.hidden
    keep = 1.0 - starts.astype(np.float64)
    flat = obs.reshape(T * B, D)
    e1 = np.tanh(flat @ p["W1"] + p["b1"])
    e2 = np.tanh(e1 @ p["W2"] + p["b2"])
    gx = (e2 @ p["Wx"] + p["bx"]).reshape(T, B, 3 * H)
    hs = np.empty((T, B, H))
    cache = SeqCache(obs, keep, e1, e2, [], [], [], [], hs)
    h = h0
    Uzr, Un = p["Uzr"], p["Un"]
    for t in range(T):
        hp = h * keep[t][:, None]
        gh = hp @ Uzr
        z = _sigmoid(gx[t, :, :H] + gh[:, :H])
        r = _sigmoid(gx[t, :, H:2 * H] + gh[:, H:])
        n = np.tanh(gx[t, :, 2 * H:] + (r * hp) @ Un)
        h = (1.0 - z) * n + z * hp
        hs[t] = h
        cache.hp.append(hp)
        cache.z.append(z)
        cache.r.append(r)
        cache.n.append(n)
    logits = hs @ p["Wa"] + p["ba"]
    values = (hs @ p["Wv"] + p["bv"])[..., 0]
    _check(logits, values)
    return logits, values, cache


def backward_sequence(params: np.ndarray, spec: NetSpec, cache: SeqCache,
                      dlogits: np.ndarray, dvalues: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the flat parameters, given its
    gradients w.r.t. the sequence outputs.  The initial state is a constant."""
    p = spec.views(params)
    grad = np.zeros_like(params)
    g = spec.views(grad)
    T, B, A = dlogits.shape
    H = spec.hidden
    hs = cache.h
    g["Wa"][:] = hs.reshape(T * B, H).T @ dlogits.reshape(T * B, A)
    g["ba"][:] = dlogits.sum(axis=(0, 1))
    g["Wv"][:] = hs.reshape(T * B, H).T @ dvalues.reshape(T * B, 1)
    g["bv"][:] = dvalues.sum()
    dh_out = dlogits @ p["Wa"].T + dvalues[..., None] * p["Wv"][:, 0]

    Uzr, Un = p["Uzr"], p["Un"]
    dgx = np.empty((T, B, 3 * H))
    dUzr = np.zeros_like(Uzr)
    dUn = np.zeros_like(Un)
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        hp, z, r, n = cache.hp[t], cache.z[t], cache.r[t], cache.n[t]
        dh = dh_out[t] + dh_next
        dn = dh * (1.0 - z)
        dz = dh * (hp - n)
        dhp = dh * z
        dan = dn * (1.0 - n * n)
        rh = r * hp
        dUn += rh.T @ dan
        drh = dan @ Un.T
        dr = drh * hp
        dhp += drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dgh = np.concatenate([daz, dar], axis=1)
        dUzr += hp.T @ dgh
        dhp += dgh @ Uzr.T
        dgx[t] = np.concatenate([daz, dar, dan], axis=1)
        dh_next = dhp * cache.keep[t][:, None]
    g["Uzr"][:] = dUzr
    g["Un"][:] = dUn
    dgx_flat = dgx.reshape(T * B, 3 * H)
    e1, e2 = cache.e1, cache.e2
    g["Wx"][:] = e2.T @ dgx_flat
    g["bx"][:] = dgx_flat.sum(axis=0)
    da2 = (dgx_flat @ p["Wx"].T) * (1.0 - e2 * e2)
    g["W2"][:] = e1.T @ da2
    g["b2"][:] = da2.sum(axis=0)
    da1 = (da2 @ p["W2"].T) * (1.0 - e1 * e1)
    g["W1"][:] = cache.obs.reshape(T * B, -1).T @ da1
    g["b1"][:] = da1.sum(axis=0)
    return grad


def sample_actions(logits: np.ndarray, rng: np.random.Generator,
                   allowed: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Draw from the categorical over (allowed) logits; returns actions and log-probs."""
    logp = masked_log_softmax(logits, allowed)
    probs = np.exp(logp)
    u = rng.random(len(logits))[:, None]
    actions = (probs.cumsum(axis=1) < u).sum(axis=1)
    actions = np.minimum(actions, logits.shape[1] - 1)
    rows = np.arange(len(actions))
    if allowed is not None:
        # guard against landing on a zero-probability tail after rounding
        allowed = np.broadcast_to(allowed, probs.shape)
        bad = ~allowed[rows, actions]
        if bad.any():
            actions[bad] = np.argmax(np.where(allowed[bad], probs[bad], -1.0), axis=1)
    return actions, logp[rows, actions]
