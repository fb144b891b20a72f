"""Exact references: tabular-MDP policy gradients and bandit variance quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimators as est
from .sampling import RngStream, sigmoid_array


@dataclass
class TabularMdp:
    """Finite-horizon MDP with binary actions.

    ``transitions[s, a, s']`` and ``rewards[s, a]``; the policy is one logit
    per state, shared across time.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    horizon: int
    gamma: float = 1.0
    init: np.ndarray | None = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        s = self.transitions.shape[0]
        if self.transitions.shape != (s, 2, s) or self.rewards.shape != (s, 2):
            raise ValueError("transitions must be (S, 2, S) and rewards (S, 2)")
        if not 1 <= s <= 8 or not 1 <= self.horizon <= 4:
            raise ValueError("oracle MDPs are limited to S <= 8 and H <= 4")
        if np.any(self.transitions < 0.0) or np.any(self.transitions > 1.0):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(self.transitions.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1")
        self.init = np.full(s, 1.0 / s) if self.init is None else np.asarray(self.init, dtype=np.float64)
        if abs(self.init.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must sum to 1")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]


@dataclass
class ExactValues:
    V: np.ndarray  # (H, S)
    Q: np.ndarray  # (H, S, 2)
    A: np.ndarray  # (H, S, 2)


def _policy(logits) -> np.ndarray:
    p1 = sigmoid_array(np.asarray(logits, dtype=np.float64))
    return np.stack([1.0 - p1, p1], axis=-1)  # pi[s, a]


def exact_values(mdp: TabularMdp, logits) -> ExactValues:
    """Backward induction; ``Q_t(s, a) = r(s, a) + gamma E[V_{t+1}(s')]``."""
    pi = _policy(logits)
    H, S = mdp.horizon, mdp.n_states
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, 2))
    for t in range(H - 1, -1, -1):
        Q[t] = mdp.rewards + mdp.gamma * mdp.transitions @ V[t + 1]
        V[t] = np.sum(pi * Q[t], axis=1)
    return ExactValues(V[:H], Q, Q - V[:H, :, None])


def state_distributions(mdp: TabularMdp, logits) -> np.ndarray:
    """``d[t, s] = P(s_t = s)``."""
    pi = _policy(logits)
    step = np.einsum("sa,sap->sp", pi, mdp.transitions)
    d = np.zeros((mdp.horizon, mdp.n_states))
    d[0] = mdp.init
    for t in range(1, mdp.horizon):
        d[t] = d[t - 1] @ step
    return d


def objective(mdp: TabularMdp, logits) -> float:
    return float(mdp.init @ exact_values(mdp, logits).V[0])


def exact_policy_gradient(mdp: TabularMdp, logits) -> np.ndarray:
    """``sum_t sum_s d_t(s) (A_1 - A_0) pi_1 pi_0`` per state logit.

    This is the practitioner's gradient without ``gamma^t`` weights; it equals
    the gradient of :func:`objective` when ``gamma = 1``.
    """
    vals = exact_values(mdp, logits)
    d = state_distributions(mdp, logits)
    p = sigmoid_array(np.asarray(logits, dtype=np.float64))
    return np.sum(d * (vals.A[:, :, 1] - vals.A[:, :, 0]), axis=0) * p * (1.0 - p)


@dataclass
class BiasReport:
    estimator: str
    mean: np.ndarray
    stderr: np.ndarray
    oracle: np.ndarray
    num_batches: int

    @property
    def z(self) -> np.ndarray:
        diff = self.mean - self.oracle
        with np.errstate(divide="ignore", invalid="ignore"):
            z = diff / self.stderr
        return np.where(self.stderr > 0, z, np.where(np.abs(diff) < 1e-12, 0.0, np.inf))

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))


def sample_estimates(mdp: TabularMdp, logits, estimator: str, num_batches: int,
                     rng: RngStream) -> np.ndarray:
    """One gradient estimate per sampled trajectory, shape ``(N, S)``.

    Each estimate sums the per-step coefficients of ``estimator`` onto the
    visited state's logit, using exact advantages (or exact Q for REINFORCE).
    """
    logits = np.asarray(logits, dtype=np.float64)
    vals = exact_values(mdp, logits)
    p1 = sigmoid_array(logits)
    n, S = num_batches, mdp.n_states
    grads = np.zeros((n, S))
    rows = np.arange(n)
    s = np.searchsorted(np.cumsum(mdp.init), rng.uniform_open(n), side="right")
    s = np.minimum(s, S - 1)
    cum_t = np.cumsum(mdp.transitions, axis=2)
    for t in range(mdp.horizon):
        u = rng.uniform_open(n)
        prob = p1[s]
        a = (u < prob).astype(np.int8)
        pseudo = (u > sigmoid_array(-logits[s])).astype(np.int8)
        adv = vals.A[t, s, a]
        if estimator == "arm":
            c = est.arm_coefficients(prob, a, pseudo, u, adv)
        elif estimator == "a2c":
            c = est.a2c_coefficients(prob, a, adv)
        elif estimator == "reinforce":
            c = est.score_coefficients(prob, a, vals.Q[t, s, a])
        elif estimator == "expected":
            a1, a0 = est.both_action_advantages(prob, a, adv)
            c = est.expected_coefficients(prob, a1, a0)
        elif estimator == "resampled_a2c":
            resampled = (rng.uniform_open(n) < prob).astype(np.int8)
            c = est.resampled_coefficients(prob, adv, resampled)
        else:
            raise ValueError(f"unknown estimator {estimator!r}; expected one of {est.ESTIMATORS}")
        np.add.at(grads, (rows, s), c)
        nxt = (cum_t[s, a] < rng.uniform_open(n)[:, None]).sum(axis=1)
        s = np.minimum(nxt, S - 1)
    return grads


def estimator_bias_report(mdp: TabularMdp, logits, estimator: str, num_batches: int,
                          rng: RngStream) -> BiasReport:
    g = sample_estimates(mdp, logits, estimator, num_batches, rng)
    return BiasReport(
        estimator,
        g.mean(axis=0),
        g.std(axis=0, ddof=1) / np.sqrt(num_batches),
        exact_policy_gradient(mdp, logits),
        num_batches,
    )


def two_state_chain(gamma: float = 1.0) -> TabularMdp:
    """Two states, horizon two, action-dependent moves and rewards."""
    transitions = np.array([
        [[0.9, 0.1], [0.2, 0.8]],
        [[0.7, 0.3], [0.1, 0.9]],
    ])
    rewards = np.array([[0.0, 1.0], [2.0, -1.0]])
    return TabularMdp(transitions, rewards, horizon=2, gamma=gamma, init=np.array([0.6, 0.4]))


# -- single-state bandit variance ------------------------------------------------

@dataclass
class VarianceTable:
    phis: np.ndarray
    var_arm: np.ndarray
    var_standard: np.ndarray
    mean_arm: np.ndarray
    mean_standard: np.ndarray
    var_arm_midpoint: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        """Pointwise ratio; ``nan`` marks the 0/0 case (constant rewards)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.var_arm / self.var_standard
        both_zero = (self.var_arm == 0.0) & (self.var_standard == 0.0)
        return np.where(both_zero, np.nan, r)

    @property
    def max_ratio(self) -> float:
        r = self.ratio
        return float(np.nanmax(r)) if np.any(~np.isnan(r)) else float("nan")

    @property
    def sup_ratio(self) -> float:
        """``sup_phi Var(ARM) / sup_phi Var(standard)``."""
        top = self.var_standard.max()
        return float(self.var_arm.max() / top) if top > 0 else float("nan")


def _arm_moments_exact(phi: float, r1: float, r0: float):
    p = float(sigmoid_array(np.array(phi)))
    v = p * r1 + (1.0 - p) * r0
    adv = (r0 - v, r1 - v)
    lo, hi = min(p, 1.0 - p), max(p, 1.0 - p)
    m1 = m2 = 0.0
    for a, b in ((0.0, lo), (lo, hi), (hi, 1.0)):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        act = int(mid < p)
        pseudo = int(mid > 1.0 - p)
        k = adv[pseudo] - adv[act]
        m1 += k * ((b - 0.5) ** 2 - (a - 0.5) ** 2) / 2.0
        m2 += k * k * ((b - 0.5) ** 3 - (a - 0.5) ** 3) / 3.0
    return m1, max(m2 - m1 * m1, 0.0)


def _arm_var_midpoint(phi: float, r1: float, r0: float, n: int) -> float:
    p = float(sigmoid_array(np.array(phi)))
    v = p * r1 + (1.0 - p) * r0
    u = (np.arange(n) + 0.5) / n
    a = (u < p).astype(np.int8)
    pseudo = (u > float(sigmoid_array(np.array(-phi)))).astype(np.int8)
    adv = np.where(a == 1, r1 - v, r0 - v)
    c = est.arm_coefficients(np.full(n, p), a, pseudo, u, adv)
    return float(np.mean(c * c) - np.mean(c) ** 2)


def bandit_variance_ratio(phis, rewards=(1.0, 0.0), midpoint_points: int = 100_000) -> VarianceTable:
    """ARM versus the standard ``Q(a) d log pi(a)`` estimator on a one-state bandit.

    ``rewards = (r(a=1), r(a=0))``.  ARM moments are integrated exactly over
    the three indicator regions of ``u``; a midpoint rule with
    ``midpoint_points`` nodes is kept as a cross-check.  The standard
    estimator's moments come from enumerating both actions.
    """
    r1, r0 = (float(r) for r in rewards)
    phis = np.asarray(phis, dtype=np.float64)
    out = {k: np.zeros(len(phis)) for k in ("va", "vs", "ma", "ms", "vm")}
    for i, phi in enumerate(phis):
        out["ma"][i], out["va"][i] = _arm_moments_exact(phi, r1, r0)
        p = float(sigmoid_array(np.array(phi)))
        vals = np.array([r0 * (0.0 - p), r1 * (1.0 - p)])
        probs = np.array([1.0 - p, p])
        out["ms"][i] = probs @ vals
        out["vs"][i] = max(probs @ vals**2 - out["ms"][i] ** 2, 0.0)
        out["vm"][i] = _arm_var_midpoint(phi, r1, r0, midpoint_points) if midpoint_points else np.nan
    return VarianceTable(phis, out["va"], out["vs"], out["ma"], out["ms"], out["vm"])
