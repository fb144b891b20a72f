# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout and backward-recursion kernels.

Mirrors ``_pykernels`` operation for operation.  Built with
``-ffp-contract=off`` so the physics matches the Python path bit for bit.
"""

from libc.math cimport cos, sin, exp, fmod, M_PI
from libc.stdlib cimport malloc, free

import numpy as np


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _clip(double x, double lo, double hi) nogil:
    # same as Python min(max(x, lo), hi)
    if x < lo:
        x = lo
    if x > hi:
        return hi
    return x


cdef inline double _pymod(double a, double b) nogil:
    # Python float modulo (result has the sign of b)
    cdef double r = fmod(a, b)
    if r != 0.0 and ((r < 0.0) != (b < 0.0)):
        r += b
    elif r == 0.0:
        r = 0.0 * b
    return r


cdef int _observe(int code, double* s, double* obs) nogil:
    if code == 0:
        obs[0] = s[0]; obs[1] = s[1]; obs[2] = s[2]; obs[3] = s[3]
        return 4
    if code == 1:
        obs[0] = s[0]; obs[1] = s[1]
        return 2
    obs[0] = cos(s[0]); obs[1] = sin(s[0]); obs[2] = s[1]
    return 3


cdef int _physics(int code, double* s, int action, const double[:] c,
                  double* reward) nogil:
    """Advance ``s`` in place; returns the terminal flag."""
    cdef double force, total_mass, pml, ct, st, temp, thetaacc, xacc
    cdef double velocity, position, u, thn, cost, thdot
    cdef int terminal
    if code == 0:
        force = c[4] if action == 1 else -c[4]
        total_mass = c[2] + c[1]
        pml = c[2] * c[3]
        ct = cos(s[2])
        st = sin(s[2])
        temp = (force + pml * s[3] * s[3] * st) / total_mass
        thetaacc = (c[0] * st - ct * temp) / (c[3] * (4.0 / 3.0 - c[2] * ct * ct / total_mass))
        xacc = temp - pml * thetaacc * ct / total_mass
        s[1] = s[1] + c[5] * xacc
        s[0] = s[0] + c[5] * s[1]
        s[3] = s[3] + c[5] * thetaacc
        s[2] = s[2] + c[5] * s[3]
        reward[0] = 1.0
        return s[0] < -c[7] or s[0] > c[7] or s[2] < -c[6] or s[2] > c[6]
    if code == 1:
        force = c[2] if action == 1 else -c[2]
        position = s[0]
        velocity = s[1]
        velocity = velocity + force * c[0] - c[1] * cos(3.0 * position)
        velocity = _clip(velocity, -c[5], c[5])
        position = position + velocity
        position = _clip(position, c[3], c[4])
        if position == c[3] and velocity < 0.0:
            velocity = 0.0
        terminal = position >= c[6]
        reward[0] = -c[7] * force * force
        if terminal:
            reward[0] = reward[0] + c[8]
        s[0] = position
        s[1] = velocity
        return terminal
    u = c[4] if action == 1 else -c[4]
    thn = _pymod(s[0] + M_PI, 2.0 * M_PI) - M_PI
    cost = thn * thn + 0.1 * s[1] * s[1] + 0.001 * u * u
    thdot = s[1] + (3.0 * c[0] / (2.0 * c[2]) * sin(s[0]) + 3.0 / (c[1] * c[2] * c[2]) * u) * c[3]
    thdot = _clip(thdot, -c[5], c[5])
    s[0] = s[0] + thdot * c[3]
    s[1] = thdot
    reward[0] = -cost
    return 0


cdef double _mlp(const long[:] sizes, const double[:] flat, double* x,
                 double* buf_a, double* buf_b) nogil:
    cdef Py_ssize_t nl = sizes.shape[0] - 1
    cdef Py_ssize_t k, i, j, n_in, n_out, off = 0
    cdef double acc
    cdef double* src = x
    cdef double* dst = buf_a
    cdef double* tmp
    for k in range(nl):
        n_in = sizes[k]
        n_out = sizes[k + 1]
        for i in range(n_out):
            acc = 0.0
            for j in range(n_in):
                acc = acc + flat[off + i * n_in + j] * src[j]
            acc = acc + flat[off + n_in * n_out + i]
            if k < nl - 1 and acc < 0.0:
                acc = 0.0
            dst[i] = acc
        off += n_in * n_out + n_out
        if src == x:
            src = dst
            dst = buf_b
        else:
            tmp = src
            src = dst
            dst = tmp
    return src[0]


def mlp_logit(sizes, flat, obs):
    cdef long[:] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef double[:] o = np.ascontiguousarray(obs, dtype=np.float64)
    cdef Py_ssize_t width = max(sz)
    cdef double* a = <double*> malloc(width * sizeof(double))
    cdef double* b = <double*> malloc(width * sizeof(double))
    cdef double r
    try:
        r = _mlp(sz, flat, &o[0], a, b)
    finally:
        free(a)
        free(b)
    return r


def rollout_segment(int code, const double[:] consts, sizes, const double[:] flat,
                    double[:] phys, long elapsed, long horizon, const double[:] u,
                    Py_ssize_t start, Py_ssize_t stop,
                    double[:, :] out_states, double[:, :] out_next, double[:] out_logit,
                    double[:] out_prob, signed char[:] out_action, signed char[:] out_pseudo,
                    double[:] out_reward, signed char[:] out_terminal,
                    signed char[:] out_truncated):
    """See ``_pykernels.rollout_segment``."""
    cdef long[:] sz = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef Py_ssize_t width = max(sz)
    cdef double s[4]
    cdef double obs[4]
    cdef double reward, logit, p
    cdef int a, terminal, truncated, d, j, ended = 0
    cdef Py_ssize_t t = start
    cdef double* buf_a = <double*> malloc(width * sizeof(double))
    cdef double* buf_b = <double*> malloc(width * sizeof(double))
    try:
        for j in range(phys.shape[0]):
            s[j] = phys[j]
        d = _observe(code, s, obs)
        with nogil:
            while t < stop:
                for j in range(d):
                    out_states[t, j] = obs[j]
                logit = _mlp(sz, flat, obs, buf_a, buf_b)
                p = _sigmoid(logit)
                a = 1 if u[t] < p else 0
                out_logit[t] = logit
                out_prob[t] = p
                out_action[t] = a
                out_pseudo[t] = 1 if u[t] > _sigmoid(-logit) else 0
                terminal = _physics(code, s, a, consts, &reward)
                elapsed += 1
                truncated = (not terminal) and elapsed >= horizon
                d = _observe(code, s, obs)
                for j in range(d):
                    out_next[t, j] = obs[j]
                out_reward[t] = reward
                out_terminal[t] = terminal
                out_truncated[t] = truncated
                t += 1
                if terminal or truncated:
                    ended = 1
                    break
        for j in range(phys.shape[0]):
            phys[j] = s[j]
    finally:
        free(buf_a)
        free(buf_b)
    return t, elapsed, bool(ended)


def discounted_backward(const double[:] values, double coef, const signed char[:] seg_end,
                        const double[:] tail):
    """``x[t] = values[t] + coef * (tail[t] if seg_end[t] else x[t+1])``."""
    cdef Py_ssize_t n = values.shape[0], t
    out = np.empty(n)
    cdef double[:] o = out
    cdef double acc = 0.0, nxt
    for t in range(n - 1, -1, -1):
        nxt = tail[t] if seg_end[t] else acc
        acc = values[t] + coef * nxt
        o[t] = acc
    return out
