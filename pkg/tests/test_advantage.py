import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from armpg import advantage as adv
from armpg.advantage import RolloutBatch
from armpg.nn import AdamState, MlpParams, forward_batch, init
from armpg.sampling import RngStream
from armpg.verify import random_batch


def make_batch(rewards, terminal=None, truncated=None, values=None, next_values=None, obs_dim=1):
    n = len(rewards)
    b = RolloutBatch.allocate(n, obs_dim)
    b.rewards[:] = rewards
    if terminal is not None:
        b.terminal[:] = terminal
    if truncated is not None:
        b.truncated[:] = truncated
    b.values = None if values is None else np.asarray(values, dtype=float)
    b.next_values = None if next_values is None else np.asarray(next_values, dtype=float)
    return b


def test_mc_returns_terminal():
    b = make_batch([1, 1, 1], terminal=[0, 0, 1])
    np.testing.assert_allclose(adv.mc_returns(b, 0.5), [1.75, 1.5, 1.0])


def test_mc_returns_gamma_zero():
    b = make_batch([0.3, -1.0, 2.0], terminal=[0, 0, 1])
    np.testing.assert_array_equal(adv.mc_returns(b, 0.0), [0.3, -1.0, 2.0])


def test_mc_returns_truncated_bootstrap():
    b = make_batch([0.0], truncated=[1], next_values=[3.0])
    np.testing.assert_allclose(adv.mc_returns(b, 0.9), [2.7])


def test_mc_returns_ignore_bootstrap_at_terminal():
    b = make_batch([0.0], terminal=[1], next_values=[3.0])
    np.testing.assert_array_equal(adv.mc_returns(b, 0.9), [0.0])


def test_buffer_cut_bootstraps():
    # last slot ends a segment even without a flag and bootstraps from the critic
    b = make_batch([1.0, 1.0], next_values=[0.0, 4.0])
    np.testing.assert_allclose(adv.mc_returns(b, 0.5), [1 + 0.5 * (1 + 2.0), 1 + 2.0])


def test_a2c_examples():
    b = make_batch([1, 1], terminal=[0, 1], values=[1.5, 0.5], next_values=[0.5, 0.0])
    np.testing.assert_allclose(adv.a2c_advantage(b, None, 1.0).values, [0.5, 0.5])
    zero = make_batch([1, 2, 3], terminal=[0, 0, 1])
    np.testing.assert_array_equal(adv.a2c_advantage(zero, None, 0.9).values, adv.mc_returns(zero, 0.9))
    ret = adv.mc_returns(zero, 0.9)
    exact = make_batch([1, 2, 3], terminal=[0, 0, 1], values=ret, next_values=np.r_[ret[1:], 0.0])
    np.testing.assert_allclose(adv.a2c_advantage(exact, None, 0.9).values, 0.0, atol=1e-15)


def test_gae_delta_example():
    # r + gamma * V' - V = 1 at both steps
    b = make_batch([1.0, 1.0], terminal=[0, 1], values=[0.0, 0.0], next_values=[0.0, 0.0])
    np.testing.assert_allclose(adv.gae(b, None, 0.9, 0.5).values, [1.45, 1.0], atol=1e-15)


def test_gae_rejects_bad_lambda():
    with pytest.raises(ValueError):
        adv.gae(make_batch([1.0]), None, 0.9, 1.5)
    with pytest.raises(ValueError):
        adv.mc_returns(make_batch([1.0]), -0.1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.integers(1, 120))
def test_gae_limits(seed, gamma, size):
    b = random_batch(RngStream(seed, 1), size=size)
    np.testing.assert_allclose(adv.gae(b, None, gamma, 1.0).values,
                               adv.a2c_advantage(b, None, gamma).values, rtol=0, atol=1e-12)
    np.testing.assert_allclose(adv.gae(b, None, gamma, 0.0).values,
                               adv.td_errors(b, None, gamma), rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 1.0), st.floats(0.0, 1.0), st.floats(0.1, 10.0))
def test_gae_is_linear_in_rewards_and_values(seed, gamma, lam, scale):
    b = random_batch(RngStream(seed, 2), size=50)
    a = adv.gae(b, None, gamma, lam).values
    b.rewards *= scale
    b.values = b.values * scale
    b.next_values = b.next_values * scale
    np.testing.assert_allclose(adv.gae(b, None, gamma, lam).values, scale * a, rtol=1e-10, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_segments_are_isolated(seed):
    # changing rewards in one segment leaves the other segments untouched
    rng = RngStream(seed, 3)
    b = random_batch(rng, size=80, p_terminal=0.1)
    ends = np.flatnonzero(b.segment_end)
    if len(ends) < 2:
        return
    before = adv.gae(b, None, 0.99, 0.95).values.copy()
    first = slice(0, ends[0] + 1)
    b.rewards[first] += 5.0
    after = adv.gae(b, None, 0.99, 0.95).values
    np.testing.assert_array_equal(after[ends[0] + 1:], before[ends[0] + 1:])
    assert np.all(after[first] != before[first])


def test_gae_against_direct_sum():
    # independent oracle: sum_k (gamma lam)^k delta_{t+k} within the segment
    b = random_batch(RngStream(9, 0), size=60)
    gamma, lam = 0.97, 0.8
    delta = adv.td_errors(b, None, gamma)
    ends = b.segment_end
    expect = np.zeros(len(b))
    for t in range(len(b)):
        acc, k = 0.0, t
        while True:
            acc += (gamma * lam) ** (k - t) * delta[k]
            if ends[k]:
                break
            k += 1
        expect[t] = acc
    np.testing.assert_allclose(adv.gae(b, None, gamma, lam).values, expect, rtol=1e-12, atol=1e-12)


def test_critic_values_sources():
    b = make_batch([1.0, 2.0], obs_dim=2)
    b.states[:] = [[1.0, 0.0], [0.0, 1.0]]
    b.next_states[:] = [[2.0, 0.0], [0.0, 2.0]]
    v, nv = adv.critic_values(b, lambda x: x.sum(axis=1))
    np.testing.assert_array_equal(v, [1.0, 1.0])
    np.testing.assert_array_equal(nv, [2.0, 2.0])
    net = MlpParams((2, 1), np.array([1.0, -1.0, 0.5]))
    v, nv = adv.critic_values(b, net)
    np.testing.assert_array_equal(v, [1.5, -0.5])


def constant_batch(n=64, obs_dim=3, seed=0):
    b = RolloutBatch.allocate(n, obs_dim)
    b.states[:] = RngStream(seed, 0).normal((n, obs_dim))
    return b


def test_fit_critic_converges_to_constant():
    b = constant_batch()
    critic = init((3, 64, 64, 1), RngStream(0, 1))
    opt = AdamState.for_params(critic, 1e-3)
    loss = adv.fit_critic(b, critic, opt, 3000, 64, RngStream(0, 4), targets=np.full(64, 2.5))
    assert np.max(np.abs(forward_batch(critic, b.states)[0] - 2.5)) < 0.01
    assert loss < 1e-4


def test_fit_critic_zero_epochs():
    b = constant_batch()
    critic = init((3, 64, 64, 1), RngStream(0, 1))
    before = critic.flat.copy()
    adv.fit_critic(b, critic, AdamState.for_params(critic, 1e-3), 0, 16, RngStream(0, 4),
                   targets=np.ones(64))
    np.testing.assert_array_equal(critic.flat, before)


def test_fit_critic_descends():
    wins = 0
    for seed in range(10):
        b = constant_batch(seed=seed)
        targets = RngStream(seed, 5).normal(64) + b.states[:, 0]
        critic = init((3, 64, 64, 1), RngStream(seed, 1))
        start = adv.critic_loss(critic, b.states, targets)
        end = adv.fit_critic(b, critic, AdamState.for_params(critic, 1e-4), 5, 16, RngStream(seed, 4),
                             targets=targets)
        wins += end <= start
    assert wins >= 9


def test_fit_critic_raises_on_blowup():
    b = constant_batch()
    critic = init((3, 64, 64, 1), RngStream(0, 1))
    with pytest.raises(FloatingPointError):
        adv.fit_critic(b, critic, AdamState.for_params(critic, 1e-3), 1, 16, RngStream(0, 4),
                       targets=np.full(64, np.inf))


def test_batch_validation():
    b = RolloutBatch.allocate(3, 2)
    with pytest.raises(ValueError):
        RolloutBatch(**{**b.__dict__, "u": np.zeros(2)})
    with pytest.raises(ValueError):
        RolloutBatch(**{**b.__dict__, "terminal": np.ones(3, np.int8), "truncated": np.ones(3, np.int8)})
