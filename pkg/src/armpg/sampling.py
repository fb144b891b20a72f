"""Seeded random streams and the coupled action / pseudo-action draw.

Every stream is a PCG64 generator whose seed material is
``SeedSequence(seed, spawn_key=(stream_id,))``; the same ``(seed, stream_id)``
pair reproduces the same draws on every platform, and different stream ids
give independent sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

_TWO_M53 = 2.0**-53


class Stream(IntEnum):
    """Stream ids used by the training harness."""

    POLICY_INIT = 0
    CRITIC_INIT = 1
    ENV = 2
    ACTION_NOISE = 3
    CRITIC_SHUFFLE = 4
    RESAMPLE = 5


class RngStream:
    """Single-owner deterministic random stream."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform_open(self, size=None):
        """Uniform draws strictly inside (0, 1) on the 2**-53 grid."""
        k = self._gen.integers(0, 1 << 53, size=size, dtype=np.int64)
        return (k + 0.5) * _TWO_M53

    def uniform(self, low, high, size=None):
        return low + (high - low) * self.uniform_open(size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size, dtype=np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, size=None):
        return self._gen.standard_normal(size)


def sigmoid(phi: float) -> float:
    """Logistic function, stable for large ``|phi|``."""
    assert math.isfinite(phi), f"sigmoid of non-finite logit {phi!r}"
    if phi >= 0.0:
        return 1.0 / (1.0 + math.exp(-phi))
    e = math.exp(phi)
    return e / (1.0 + e)


def sigmoid_array(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    assert np.all(np.isfinite(phi)), "sigmoid of non-finite logits"
    out = np.empty_like(phi)
    pos = phi >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-phi[pos]))
    e = np.exp(phi[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class CoupledDraw:
    u: float
    action: int
    pseudo_action: int
    prob_one: float

    @property
    def differ(self) -> int:
        return int(self.action != self.pseudo_action)


def sample_coupled(phi: float, u: float) -> CoupledDraw:
    """Executed action ``1[u < sigma(phi)]`` and pseudo action ``1[u > sigma(-phi)]``.

    Both come from the same uniform ``u``; ties resolve by the strict
    inequalities.
    """
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u!r}")
    p = sigmoid(phi)
    return CoupledDraw(u=u, action=int(u < p), pseudo_action=int(u > sigmoid(-phi)), prob_one=p)


def sample_coupled_array(phi, u):
    """Vectorised :func:`sample_coupled`; returns ``(actions, pseudo, prob_one)``."""
    phi = np.asarray(phi, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("u must lie in (0, 1)")
    p = sigmoid_array(phi)
    actions = (u < p).astype(np.int8)
    pseudo = (u > sigmoid_array(-phi)).astype(np.int8)
    return actions, pseudo, p


def prob_actions_differ(phi: float) -> float:
    """Exact ``P(action != pseudo_action) = 2 sigma(-|phi|)``."""
    return 2.0 * sigmoid(-abs(phi))
