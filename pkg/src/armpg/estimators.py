"""Policy-gradient estimators for a Bernoulli-logit policy.

Every estimator reduces to a per-step coefficient ``c_t`` multiplying the
logit gradient, ``g = (1/B) sum_t c_t * grad_theta T_theta(s_t)``.  The
``*_coefficients`` functions compute ``c_t`` from batch arrays and are shared
with the tabular oracle; the ``*_pg`` functions push them through the
network.

Note on the ARM coefficient: the commonly printed pseudocode form
``(pi/(1-pi) + 1)(u - 1/2) A |a_s - a|`` with ``pi = sigma(T(s))`` has the
wrong sign and, when ``a = 0``, the wrong probability.  The coefficient used
here is ``(A(s, a_s) - A(s, a)) (u - 1/2)`` with the pseudo-action advantage
recovered from ``E_a[A] = 0``, i.e.
``-(pi(a|s) / (1 - pi(a|s)) + 1) * A(s, a) * (u - 1/2) * |a_s - a|``,
which the unbiasedness oracle confirms.
"""

from __future__ import annotations

import numpy as np

from .advantage import RolloutBatch, mc_returns
from .nn import GradientVector, MlpParams, backward_batch, forward_batch
from .sampling import RngStream

ESTIMATORS = ("arm", "a2c", "reinforce", "expected", "resampled_a2c")
TAG = {
    "arm": "ARM",
    "a2c": "A2C",
    "reinforce": "REINFORCE",
    "expected": "EXPECTED",
    "resampled_a2c": "RESAMPLED_A2C",
}


def prob_of_action(prob_one, actions):
    prob_one = np.asarray(prob_one, dtype=np.float64)
    return np.where(np.asarray(actions) == 1, prob_one, 1.0 - prob_one)


def pseudo_action_advantage(prob_on_action, adv_on_action):
    """Advantage of the other action, ``-pi(a)/(1-pi(a)) * A(a)``."""
    p = np.asarray(prob_on_action, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probability of the taken action must lie in (0, 1)")
    out = -p / (1.0 - p) * np.asarray(adv_on_action, dtype=np.float64)
    return float(out) if out.ndim == 0 else out


def arm_coefficients(prob_one, actions, pseudo_actions, u, adv):
    actions = np.asarray(actions)
    differ = np.asarray(pseudo_actions) != actions
    out = np.zeros(np.shape(adv), dtype=np.float64)
    if not np.any(differ):
        return out
    pa = prob_of_action(prob_one, actions)[differ]
    a = np.asarray(adv, dtype=np.float64)[differ]
    out[differ] = -(pa / (1.0 - pa) + 1.0) * a * (np.asarray(u)[differ] - 0.5)
    return out


def score_coefficients(prob_one, actions, weights):
    """``w_t * d/dlogit log pi(a_t) = w_t * (a_t - sigma(T(s_t)))``."""
    return np.asarray(weights, dtype=np.float64) * (np.asarray(actions, dtype=np.float64) - prob_one)


def a2c_coefficients(prob_one, actions, adv):
    return score_coefficients(prob_one, actions, adv)


def both_action_advantages(prob_one, actions, adv):
    """``(A_1, A_0)`` per step, the unobserved one filled in from ``E_a[A] = 0``."""
    actions = np.asarray(actions)
    other = pseudo_action_advantage(prob_of_action(prob_one, actions), adv)
    adv = np.asarray(adv, dtype=np.float64)
    return np.where(actions == 1, adv, other), np.where(actions == 1, other, adv)


def expected_coefficients(prob_one, adv_one, adv_zero):
    p = np.asarray(prob_one, dtype=np.float64)
    return (np.asarray(adv_one) - np.asarray(adv_zero)) * p * (1.0 - p)


def expected_from_on_policy(prob_one, actions, adv):
    """Same as ``expected_coefficients(p, *both_action_advantages(p, a, A))``.

    Simplifies to ``pi(a) * A`` for ``a = 1`` and ``-pi(a) * A`` for ``a = 0``,
    which stays finite when the policy saturates.
    """
    actions = np.asarray(actions)
    sign = np.where(actions == 1, 1.0, -1.0)
    return sign * prob_of_action(prob_one, actions) * np.asarray(adv, dtype=np.float64)


def resampled_coefficients(prob_one, adv, resampled_actions):
    return score_coefficients(prob_one, resampled_actions, adv)


def logit_gradient(policy: MlpParams, states, coefficients, tag: str) -> GradientVector:
    """``(1/B) sum_t c_t grad T(s_t)``."""
    c = np.asarray(coefficients, dtype=np.float64)
    _, cache = forward_batch(policy, states)
    return GradientVector(backward_batch(policy, cache, c / len(c)), tag)


def _adv(advantages):
    return np.asarray(getattr(advantages, "values", advantages), dtype=np.float64)


def arm_pg(policy: MlpParams, batch: RolloutBatch, advantages) -> GradientVector:
    if batch.pseudo_actions is None or batch.u is None:
        raise ValueError("ARM needs the pseudo actions and uniforms of the rollout")
    c = arm_coefficients(batch.prob_one, batch.actions, batch.pseudo_actions, batch.u, _adv(advantages))
    return logit_gradient(policy, batch.states, c, "ARM")


def a2c_pg(policy: MlpParams, batch: RolloutBatch, advantages) -> GradientVector:
    c = a2c_coefficients(batch.prob_one, batch.actions, _adv(advantages))
    return logit_gradient(policy, batch.states, c, "A2C")


def reinforce_pg(policy: MlpParams, batch: RolloutBatch, gamma: float) -> GradientVector:
    c = score_coefficients(batch.prob_one, batch.actions, mc_returns(batch, gamma))
    return logit_gradient(policy, batch.states, c, "REINFORCE")


def expected_pg(policy: MlpParams, batch: RolloutBatch, adv_one, adv_zero) -> GradientVector:
    c = expected_coefficients(batch.prob_one, adv_one, adv_zero)
    return logit_gradient(policy, batch.states, c, "EXPECTED")


def resampled_a2c_pg(policy: MlpParams, batch: RolloutBatch, advantages, rng: RngStream) -> GradientVector:
    """Biased on purpose: the advantage is paired with a freshly drawn action."""
    resampled = (rng.uniform_open(len(batch)) < batch.prob_one).astype(np.int8)
    c = resampled_coefficients(batch.prob_one, _adv(advantages), resampled)
    return logit_gradient(policy, batch.states, c, "RESAMPLED_A2C")


def estimator_coefficients(name: str, batch: RolloutBatch, advantages, *, gamma=0.99,
                           rng: RngStream | None = None) -> np.ndarray:
    """Per-step logit coefficients for estimator ``name``."""
    adv = _adv(advantages)
    if name == "arm":
        return arm_coefficients(batch.prob_one, batch.actions, batch.pseudo_actions, batch.u, adv)
    if name == "a2c":
        return a2c_coefficients(batch.prob_one, batch.actions, adv)
    if name == "reinforce":
        return score_coefficients(batch.prob_one, batch.actions, mc_returns(batch, gamma))
    if name == "expected":
        return expected_from_on_policy(batch.prob_one, batch.actions, adv)
    if name == "resampled_a2c":
        if rng is None:
            raise ValueError("resampled_a2c needs an rng")
        resampled = (rng.uniform_open(len(batch)) < batch.prob_one).astype(np.int8)
        return resampled_coefficients(batch.prob_one, adv, resampled)
    raise ValueError(f"unknown estimator {name!r}; expected one of {ESTIMATORS}")
