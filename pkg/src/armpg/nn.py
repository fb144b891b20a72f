"""Small ReLU multilayer perceptron with hand-written backprop and Adam.

The flat parameter vector is ordered layer by layer; each layer stores its
weight matrix ``W`` (shape ``out x in``, row-major) followed by its bias
``b`` (length ``out``).  Hidden layers use ReLU, the output layer is linear
and scalar.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sampling import RngStream

DEFAULT_HIDDEN = (64, 64)
ESTIMATOR_TAGS = ("ARM", "A2C", "EXPECTED", "REINFORCE", "RESAMPLED_A2C", "CRITIC_MSE")
CHECKPOINT_MAGIC = b"ARMMLP01"


@dataclass
class MlpParams:
    sizes: tuple[int, ...]
    flat: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.sizes}")
        if self.sizes[-1] != 1:
            raise ValueError("output layer must be scalar")
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (param_count(self.sizes),):
            raise ValueError(
                f"flat vector has {self.flat.size} entries, sizes {self.sizes} need "
                f"{param_count(self.sizes)}"
            )

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def layers(self):
        """Views ``[(W, b), ...]`` into the flat vector."""
        out, off = [], 0
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = self.flat[off : off + n_in * n_out].reshape(n_out, n_in)
            off += n_in * n_out
            b = self.flat[off : off + n_out]
            off += n_out
            out.append((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, self.flat.copy())


def param_count(sizes) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


def mlp_sizes(input_dim: int, hidden=DEFAULT_HIDDEN) -> tuple[int, ...]:
    return (input_dim, *hidden, 1)


@dataclass
class GradientVector:
    values: np.ndarray
    tag: str

    def __post_init__(self):
        if self.tag not in ESTIMATOR_TAGS:
            raise ValueError(f"unknown estimator tag {self.tag!r}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float, **kw) -> "AdamState":
        n = params.flat.size
        return cls(np.zeros(n), np.zeros(n), lr, **kw)


@dataclass
class ForwardCache:
    """Activations of one batched forward pass."""

    params_id: int
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)  # pre-activations of hidden layers


def init(sizes, rng: RngStream) -> MlpParams:
    """He-style uniform init: ``W ~ U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases.

    The uniform bound gives weight variance ``2 / fan_in``.
    """
    sizes = tuple(sizes)
    params = MlpParams(sizes, np.zeros(param_count(sizes)))
    for w, _ in params.layers():
        bound = math.sqrt(6.0 / w.shape[1])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return params


def forward_batch(params: MlpParams, states: np.ndarray):
    """Outputs for a batch of states (``N x input_dim``) and the backprop cache."""
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"expected states of shape (N, {params.input_dim}), got {x.shape}")
    cache = ForwardCache(id(params))
    layers = params.layers()
    h = x
    for k, (w, b) in enumerate(layers):
        cache.inputs.append(h)
        z = h @ w.T + b
        if k < len(layers) - 1:
            cache.pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h[:, 0], cache


def forward(params: MlpParams, state):
    """Scalar output for one state, plus cache."""
    s = np.asarray(state, dtype=np.float64)
    if s.shape != (params.input_dim,):
        raise ValueError(f"state must have shape ({params.input_dim},), got {s.shape}")
    out, cache = forward_batch(params, s[None, :])
    return float(out[0]), cache


def backward_batch(params: MlpParams, cache: ForwardCache, upstream) -> np.ndarray:
    """Flat gradient of ``sum_i upstream[i] * output_i`` w.r.t. the parameters."""
    assert cache.params_id == id(params), "cache was produced by a different MlpParams"
    g_out = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
    n = cache.inputs[0].shape[0]
    assert g_out.shape[0] == n, "upstream length does not match cached batch"
    layers = params.layers()
    grad = np.empty_like(params.flat)
    chunks = []
    delta = g_out
    for k in range(len(layers) - 1, -1, -1):
        w, _ = layers[k]
        h_in = cache.inputs[k]
        chunks.append((delta.T @ h_in, delta.sum(axis=0)))
        if k > 0:
            delta = (delta @ w) * (cache.pre[k - 1] > 0.0)
    off = 0
    for gw, gb in reversed(chunks):
        grad[off : off + gw.size] = gw.ravel()
        off += gw.size
        grad[off : off + gb.size] = gb
        off += gb.size
    return grad


def backward(params: MlpParams, cache: ForwardCache, upstream: float, tag: str = "A2C") -> GradientVector:
    return GradientVector(backward_batch(params, cache, [upstream]), tag)


def clip_norm(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    n = float(np.linalg.norm(grad))
    return grad * (max_norm / n) if n > max_norm else grad


def adam_step(params: MlpParams, opt: AdamState, grad, maximize: bool = False):
    """One Adam update, in place; returns ``(params, opt)``.

    ``maximize`` flips the gradient so the step ascends.
    """
    g = grad.values if isinstance(grad, GradientVector) else np.asarray(grad, dtype=np.float64)
    if g.shape != params.flat.shape or opt.m.shape != g.shape:
        raise ValueError("gradient, params and optimizer state must be aligned")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise FloatingPointError(f"non-finite gradient at {bad.size} entries (first index {bad[0]})")
    if maximize:
        g = -g
    opt.step += 1
    opt.m *= opt.beta1
    opt.m += (1.0 - opt.beta1) * g
    opt.v *= opt.beta2
    opt.v += (1.0 - opt.beta2) * g * g
    m_hat = opt.m / (1.0 - opt.beta1**opt.step)
    v_hat = opt.v / (1.0 - opt.beta2**opt.step)
    params.flat -= opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return params, opt


def save_checkpoint(params: MlpParams, path) -> None:
    """Write ``magic | u32 n | u32 sizes[n] | f64 params`` (all little-endian)."""
    header = CHECKPOINT_MAGIC + struct.pack(f"<I{len(params.sizes)}I", len(params.sizes), *params.sizes)
    Path(path).write_bytes(header + params.flat.astype("<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not an MLP checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (n,) = struct.unpack_from("<I", data, off)
    sizes = struct.unpack_from(f"<{n}I", data, off + 4)
    off += 4 + 4 * n
    flat = np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64)
    return MlpParams(sizes, flat)
