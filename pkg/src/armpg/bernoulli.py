"""ARM versus REINFORCE on ``E_{z ~ prod Bernoulli(sigma(phi_i))}[f(z)]``.

Includes an exhaustive-enumeration oracle for the exact gradient.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .sampling import RngStream, sigmoid_array

MAX_ORACLE_DIM = 20


@dataclass
class BinaryObjective:
    """Deterministic ``f: {0,1}^V -> R``.

    ``table`` (length ``2**V``, index ``sum_i z_i 2**i``) takes precedence over
    ``evaluator`` when given.
    """

    dim: int
    evaluator: object = None
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.table is not None:
            self.table = np.asarray(self.table, dtype=np.float64)
            if self.table.shape != (2**self.dim,):
                raise ValueError(f"table must have {2 ** self.dim} entries")
        elif self.evaluator is None:
            raise ValueError("need an evaluator or a table")

    @classmethod
    def from_table(cls, table) -> "BinaryObjective":
        table = np.asarray(table, dtype=np.float64)
        dim = int(np.log2(len(table)))
        return cls(dim, table=table)

    def __call__(self, z) -> np.ndarray:
        """Evaluate on one vector or on rows of a 2-D array."""
        z = np.asarray(z)
        if self.table is not None:
            idx = z.astype(np.int64) @ (1 << np.arange(self.dim))
            return self.table[idx]
        if z.ndim == 1:
            return np.float64(self.evaluator(z))
        return np.array([self.evaluator(row) for row in z], dtype=np.float64)


def _check(phis, f: BinaryObjective, other=None, name="u"):
    phis = np.asarray(phis, dtype=np.float64)
    if phis.ndim != 1 or len(phis) != f.dim:
        raise ValueError(f"expected {f.dim} logits, got shape {phis.shape}")
    if not np.all(np.isfinite(phis)):
        raise ValueError("logits must be finite")
    if other is not None and np.shape(other)[-1] != f.dim:
        raise ValueError(f"{name} has trailing dimension {np.shape(other)[-1]}, expected {f.dim}")
    return phis


def arm_grad_sample(phis, f: BinaryObjective, u) -> np.ndarray:
    """``(f(1[u > sigma(-phi)]) - f(1[u < sigma(phi)])) * (u - 1/2)``.

    ``u`` may be a single vector or an ``(N, V)`` array of draws.
    """
    phis = _check(phis, f, u)
    u = np.asarray(u, dtype=np.float64)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("u entries must lie in (0, 1)")
    z1 = (u > sigmoid_array(-phis)).astype(np.int8)
    z2 = (u < sigmoid_array(phis)).astype(np.int8)
    f_delta = f(z1) - f(z2)
    return np.asarray(f_delta)[..., None] * (u - 0.5)


def reinforce_grad_sample(phis, f: BinaryObjective, z, baseline: float = 0.0) -> np.ndarray:
    """``(f(z) - baseline) * (z - sigma(phi))``; ``z`` may be batched like ``u``."""
    phis = _check(phis, f, z, "z")
    z = np.asarray(z)
    if np.any((z != 0) & (z != 1)):
        raise ValueError("z must be binary")
    return (np.asarray(f(z)) - baseline)[..., None] * (z - sigmoid_array(phis))


def all_binary_vectors(dim: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=dim)), dtype=np.int8)[:, ::-1]


def exact_grad_bruteforce(phis, f: BinaryObjective) -> np.ndarray:
    """``d/dphi sum_z f(z) prod_i p(z_i | phi_i)`` by full enumeration."""
    phis = _check(phis, f)
    if f.dim > MAX_ORACLE_DIM:
        raise ValueError(f"brute force limited to V <= {MAX_ORACLE_DIM}, got {f.dim}")
    zs = all_binary_vectors(f.dim)
    p = sigmoid_array(phis)
    probs = np.prod(np.where(zs == 1, p, 1.0 - p), axis=1)
    fz = f(zs)
    # d log p(z_i | phi_i) / d phi_i = z_i - p_i
    return (probs * fz) @ (zs - p)


@dataclass
class ProbeResult:
    mean: np.ndarray
    var: np.ndarray
    num_samples: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.var / self.num_samples)


def sample_estimates(phis, f: BinaryObjective, estimator: str, num_samples: int,
                     rng: RngStream, baseline: float = 0.0) -> np.ndarray:
    phis = _check(phis, f)
    if estimator == "arm":
        return arm_grad_sample(phis, f, rng.uniform_open((num_samples, f.dim)))
    if estimator == "reinforce":
        z = (rng.uniform_open((num_samples, f.dim)) < sigmoid_array(phis)).astype(np.int8)
        return reinforce_grad_sample(phis, f, z, baseline)
    raise ValueError(f"unknown estimator {estimator!r}; expected 'arm' or 'reinforce'")


def variance_probe(phis, f: BinaryObjective, estimator: str, num_samples: int,
                   rng: RngStream, baseline: float = 0.0) -> ProbeResult:
    """Per-component sample mean and unbiased sample variance."""
    if num_samples < 2:
        raise ValueError("num_samples must be >= 2")
    g = sample_estimates(phis, f, estimator, num_samples, rng, baseline)
    return ProbeResult(g.mean(axis=0), g.var(axis=0, ddof=1), num_samples)


def random_instance(rng: RngStream, max_dim: int = 3):
    """Random ``(phis, f)`` with ``V <= max_dim``, table in [-1, 1], logits in [-2, 2]."""
    dim = int(rng.integers(1, max_dim + 1))
    table = rng.uniform(-1.0, 1.0, size=2**dim)
    phis = rng.uniform(-2.0, 2.0, size=dim)
    return phis, BinaryObjective(dim, table=table)
