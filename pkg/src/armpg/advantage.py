"""Rollout buffers, Monte-Carlo returns, A2C / GAE advantages and critic fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .nn import AdamState, MlpParams, adam_step, backward_batch, clip_norm, forward_batch
from .sampling import RngStream


@dataclass
class RolloutBatch:
    """``B`` consecutive on-policy steps, possibly spanning several episodes.

    A segment ends at a terminal step, a truncated step, or the last slot of
    the buffer.  ``next_states[t]`` is the state reached after step ``t``; the
    critic's value there is the bootstrap for truncated (and buffer-cut)
    segments.
    """

    states: np.ndarray
    next_states: np.ndarray
    u: np.ndarray
    actions: np.ndarray
    pseudo_actions: np.ndarray
    prob_one: np.ndarray
    logits: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray
    truncated: np.ndarray
    values: np.ndarray | None = None
    next_values: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("states", "next_states", "u", "actions", "pseudo_actions", "prob_one",
                     "logits", "terminal", "truncated"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"field {name!r} has length {len(getattr(self, name))}, expected {n}")
        if np.any(self.terminal.astype(bool) & self.truncated.astype(bool)):
            raise ValueError("a step cannot be both terminal and truncated")

    def __len__(self):
        return len(self.rewards)

    @property
    def segment_end(self) -> np.ndarray:
        end = self.terminal.astype(bool) | self.truncated.astype(bool)
        end[-1] = True
        return end

    @classmethod
    def allocate(cls, size: int, obs_dim: int) -> "RolloutBatch":
        return cls(
            states=np.zeros((size, obs_dim)),
            next_states=np.zeros((size, obs_dim)),
            u=np.zeros(size),
            actions=np.zeros(size, dtype=np.int8),
            pseudo_actions=np.zeros(size, dtype=np.int8),
            prob_one=np.zeros(size),
            logits=np.zeros(size),
            rewards=np.zeros(size),
            terminal=np.zeros(size, dtype=np.int8),
            truncated=np.zeros(size, dtype=np.int8),
        )

    def subset(self, idx) -> "RolloutBatch":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return RolloutBatch(**{k: pick(v) for k, v in self.__dict__.items()})


@dataclass
class AdvantageVector:
    values: np.ndarray
    method: str
    gamma: float
    lam: float | None = None


def critic_values(batch: RolloutBatch, critic=None):
    """``(V(s_t), V(s_{t+1}))`` from an MLP, a callable, or the batch's own arrays."""
    if critic is None:
        v = batch.values if batch.values is not None else np.zeros(len(batch))
        nv = batch.next_values if batch.next_values is not None else np.zeros(len(batch))
        return np.asarray(v, dtype=np.float64), np.asarray(nv, dtype=np.float64)
    if isinstance(critic, MlpParams):
        return forward_batch(critic, batch.states)[0], forward_batch(critic, batch.next_states)[0]
    return (np.asarray(critic(batch.states), dtype=np.float64),
            np.asarray(critic(batch.next_states), dtype=np.float64))


def _bootstrap_tail(batch: RolloutBatch, next_values) -> np.ndarray:
    # zero continuation after a true termination
    return np.where(batch.terminal.astype(bool), 0.0, next_values)


def mc_returns(batch: RolloutBatch, gamma: float, next_values=None) -> np.ndarray:
    """Discounted partial returns within each segment, bootstrapped at cuts."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if next_values is None:
        next_values = critic_values(batch)[1]
    tail = _bootstrap_tail(batch, np.asarray(next_values, dtype=np.float64))
    return kernels.discounted_backward(
        np.ascontiguousarray(batch.rewards, dtype=np.float64), float(gamma),
        batch.segment_end.astype(np.int8), tail,
    )


def a2c_advantage(batch: RolloutBatch, critic, gamma: float) -> AdvantageVector:
    v, nv = critic_values(batch, critic)
    return AdvantageVector(mc_returns(batch, gamma, nv) - v, "a2c", gamma)


def td_errors(batch: RolloutBatch, critic, gamma: float) -> np.ndarray:
    v, nv = critic_values(batch, critic)
    return batch.rewards + gamma * _bootstrap_tail(batch, nv) - v


def gae(batch: RolloutBatch, critic, gamma: float, lam: float) -> AdvantageVector:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    delta = td_errors(batch, critic, gamma)
    adv = kernels.discounted_backward(
        delta, float(gamma * lam), batch.segment_end.astype(np.int8), np.zeros(len(batch))
    )
    return AdvantageVector(adv, "gae", gamma, lam)


def estimate_advantages(batch, critic, method: str, gamma: float, lam: float) -> AdvantageVector:
    if method == "a2c":
        return a2c_advantage(batch, critic, gamma)
    if method == "gae":
        return gae(batch, critic, gamma, lam)
    raise ValueError(f"unknown advantage method {method!r}")


def critic_loss(critic: MlpParams, states, targets) -> float:
    v, _ = forward_batch(critic, states)
    return float(np.mean((v - targets) ** 2))


def fit_critic(batch: RolloutBatch, critic: MlpParams, opt: AdamState, epochs: int,
               minibatch: int, rng: RngStream, gamma: float = 0.99, targets=None,
               max_norm: float | None = None) -> float:
    """Regress the critic onto Monte-Carlo returns; returns the final full-batch MSE.

    Targets default to :func:`mc_returns` bootstrapped with the critic as it
    was before fitting.
    """
    if targets is None:
        targets = mc_returns(batch, gamma, critic_values(batch, critic)[1])
    targets = np.asarray(targets, dtype=np.float64)
    n = len(targets)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, minibatch):
            idx = order[lo : lo + minibatch]
            x = batch.states[idx]
            v, cache = forward_batch(critic, x)
            err = v - targets[idx]
            loss = float(np.mean(err * err))
            if not np.isfinite(loss):
                raise FloatingPointError(f"critic loss became non-finite ({loss})")
            grad = clip_norm(backward_batch(critic, cache, 2.0 * err / len(idx)), max_norm)
            adam_step(critic, opt, grad, maximize=False)
    return critic_loss(critic, batch.states, targets)
