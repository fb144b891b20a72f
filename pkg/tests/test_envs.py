import math

import numpy as np
import pytest

from armpg import envs
from armpg.envs import EnvState, make_spec
from armpg.sampling import RngStream


def test_cartpole_reset_bounds_and_determinism():
    spec = make_spec("cartpole")
    for seed in range(20):
        s = envs.reset(spec, RngStream(seed, 2))
        assert np.all(np.abs(s.values) <= 0.05)
        assert s.elapsed == 0 and not s.done
    a = envs.reset(spec, RngStream(4, 2)).values
    np.testing.assert_array_equal(a, envs.reset(spec, RngStream(4, 2)).values)


def test_other_resets():
    mc = envs.reset(make_spec("mountaincar"), RngStream(0, 2)).values
    assert -0.6 <= mc[0] <= -0.4 and mc[1] == 0.0
    pd = envs.reset(make_spec("pendulum"), RngStream(0, 2)).values
    assert -math.pi <= pd[0] <= math.pi and -1.0 <= pd[1] <= 1.0


@pytest.mark.parametrize("action", [0, 1])
def test_cartpole_upright_step(action):
    spec = make_spec("cartpole")
    r = envs.step(spec, EnvState(np.zeros(4)), action)
    assert r.reward == 1.0 and not r.terminal and not r.truncated
    # semi-implicit Euler: positions move with the updated velocities
    x, xd, th, thd = r.state.values
    assert x == 0.02 * xd and th == 0.02 * thd
    assert np.sign(xd) == (1 if action else -1) and np.sign(thd) == -np.sign(xd)


def test_cartpole_fails_past_angle_threshold():
    spec = make_spec("cartpole")
    th = 12.0 * math.pi / 180.0 + 1e-3
    r = envs.step(spec, EnvState(np.array([0.0, 0.0, th, 0.5])), 1)
    assert r.terminal and r.reward == 1.0


def test_cartpole_fails_past_position_threshold():
    r = envs.step(make_spec("cartpole"), EnvState(np.array([2.399, 1.0, 0.0, 0.0])), 1)
    assert r.terminal


def test_cartpole_matches_hand_computation():
    # one step of the documented semi-implicit Euler update, evaluated by hand
    x, xd, th, thd, f = 0.01, -0.02, 0.03, 0.04, 10.0
    tm, pml = 1.1, 0.05
    temp = (f + pml * thd**2 * math.sin(th)) / tm
    thacc = (9.8 * math.sin(th) - math.cos(th) * temp) / (0.5 * (4 / 3 - 0.1 * math.cos(th) ** 2 / tm))
    xacc = temp - pml * thacc * math.cos(th) / tm
    xd2 = xd + 0.02 * xacc
    thd2 = thd + 0.02 * thacc
    expect = [x + 0.02 * xd2, xd2, th + 0.02 * thd2, thd2]
    r = envs.step(make_spec("cartpole"), EnvState(np.array([x, xd, th, thd])), 1)
    np.testing.assert_allclose(r.state.values, expect, rtol=0, atol=1e-15)


@pytest.mark.parametrize("action", [0, 1])
def test_pendulum_hanging_reward(action):
    spec = make_spec("pendulum")
    r = envs.step(spec, EnvState(np.array([math.pi, 0.0])), action)
    assert r.reward == pytest.approx(-(math.pi**2) - 0.001 * 4.0, abs=1e-12)
    assert not r.terminal


def test_pendulum_observation():
    obs = envs.observe(make_spec("pendulum"), EnvState(np.array([math.pi / 2, 0.3])))
    np.testing.assert_allclose(obs, [0.0, 1.0, 0.3], atol=1e-15)


def _energies(th0, steps):
    spec = make_spec("pendulum", horizon=steps + 1, max_torque=0.0)
    s = EnvState(np.array([th0, 0.0]))
    out = [envs.pendulum_energy(spec, s.values)]
    for _ in range(steps):
        s = envs.step(spec, s, 1).state
        out.append(envs.pendulum_energy(spec, s.values))
    return np.array(out)


@pytest.mark.parametrize("swing", [0.1, 0.4, 0.7])
def test_pendulum_energy_step_error_small_swings(swing):
    e = _energies(math.pi - swing, 400)
    assert np.max(np.abs(np.diff(e))) <= 0.05


@pytest.mark.parametrize("th0", [0.05, 1.0, 2.0, math.pi - 0.3])
def test_pendulum_energy_has_no_secular_drift(th0):
    # the integrator is symplectic: energy oscillates but does not creep
    e = _energies(th0, 4000)
    assert abs(e[-400:].mean() - e[:400].mean()) <= 0.05


def test_mountaincar_goal_and_cost():
    spec = make_spec("mountaincar")
    r = envs.step(spec, EnvState(np.array([0.449, 0.05])), 1)
    assert r.terminal and r.reward == pytest.approx(100.0 - 0.05)
    r = envs.step(spec, EnvState(np.array([-0.5, 0.0])), 0)
    assert not r.terminal and r.reward == pytest.approx(-0.05)


def test_mountaincar_left_wall_stops():
    r = envs.step(make_spec("mountaincar"), EnvState(np.array([-1.2, -0.07])), 0)
    assert r.state.values[0] == -1.2 and r.state.values[1] == 0.0


def test_binarize():
    assert envs.binarize(1, make_spec("pendulum")) == 2.0
    assert envs.binarize(0, make_spec("pendulum")) == -2.0
    assert envs.binarize(1, make_spec("cartpole")) == 10.0
    assert envs.binarize(0, make_spec("cartpole")) == -10.0
    with pytest.raises(ValueError):
        envs.binarize(2, make_spec("cartpole"))


def test_horizon_truncates():
    spec = make_spec("pendulum", horizon=3)
    s = envs.reset(spec, RngStream(0, 2))
    flags = []
    for _ in range(3):
        r = envs.step(spec, s, 0)
        flags.append((r.terminal, r.truncated))
        s = r.state
    assert flags == [(False, False), (False, False), (False, True)]
    assert s.done
    with pytest.raises(AssertionError):
        envs.step(spec, s, 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        envs.EnvSpec("acrobot", 10)
    with pytest.raises(ValueError):
        make_spec("cartpole", horizon=0)
    with pytest.raises(ValueError):
        make_spec("cartpole", mass=2.0)
    assert make_spec("cartpole", force_mag=5.0).constants["force_mag"] == 5.0


def test_angle_normalize():
    assert envs.angle_normalize(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert envs.angle_normalize(0.1) == pytest.approx(0.1)
