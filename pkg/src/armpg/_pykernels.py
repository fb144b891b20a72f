"""Pure-Python reference kernels (used when the compiled module is absent)."""

from __future__ import annotations

import math

import numpy as np

from .envs import PHYSICS, observe_values


def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _unpack(sizes, flat):
    layers, off = [], 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = flat[off : off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        layers.append((w, flat[off : off + n_out]))
        off += n_out
    return layers


def mlp_logit(sizes, flat, obs) -> float:
    h = np.asarray(obs, dtype=np.float64)
    layers = _unpack(sizes, flat)
    for k, (w, b) in enumerate(layers):
        h = w @ h + b
        if k < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return float(h[0])


def rollout_segment(code, consts, sizes, flat, phys, elapsed, horizon, u, start, stop,
                    out_states, out_next, out_logit, out_prob, out_action, out_pseudo,
                    out_reward, out_terminal, out_truncated):
    """Advance one episode from ``phys`` over buffer slots ``[start, stop)``.

    Stops early when the episode terminates or hits the horizon.  ``phys`` is
    updated in place.  Returns ``(t_end, elapsed, ended)``.
    """
    physics = PHYSICS[code]
    consts = tuple(float(c) for c in consts)
    sizes = tuple(int(s) for s in sizes)
    s = tuple(float(v) for v in phys)
    obs = observe_values(code, s)
    t = start
    while t < stop:
        out_states[t] = obs
        logit = mlp_logit(sizes, flat, obs)
        p = _sigmoid(logit)
        ut = u[t]
        a = 1 if ut < p else 0
        out_logit[t] = logit
        out_prob[t] = p
        out_action[t] = a
        out_pseudo[t] = 1 if ut > _sigmoid(-logit) else 0
        s, r, terminal = physics(s, a, consts)
        elapsed += 1
        truncated = (not terminal) and elapsed >= horizon
        obs = observe_values(code, s)
        out_next[t] = obs
        out_reward[t] = r
        out_terminal[t] = terminal
        out_truncated[t] = truncated
        t += 1
        if terminal or truncated:
            phys[:] = s
            return t, elapsed, True
    phys[:] = s
    return t, elapsed, False


def discounted_backward(values, coef, seg_end, tail):
    """``x[t] = values[t] + coef * (tail[t] if seg_end[t] else x[t+1])``."""
    n = len(values)
    out = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        nxt = tail[t] if seg_end[t] else acc
        acc = values[t] + coef * nxt
        out[t] = acc
    return out
