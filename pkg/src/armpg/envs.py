"""Binary-action classic-control tasks: cart-pole, mountain car, pendulum.

Dynamics follow the usual classic-control formulations.  Cart-pole and
pendulum integrate with semi-implicit Euler (velocity first).  Randomness is
consumed only by :func:`reset`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sampling import RngStream

ENV_IDS = ("cartpole", "mountaincar", "pendulum")
ENV_CODES = {name: k for k, name in enumerate(ENV_IDS)}

CARTPOLE = {
    "gravity": 9.8,
    "masscart": 1.0,
    "masspole": 0.1,
    "length": 0.5,  # half the pole length
    "force_mag": 10.0,
    "tau": 0.02,
    "theta_threshold": 12.0 * 2.0 * math.pi / 360.0,
    "x_threshold": 2.4,
}
MOUNTAINCAR = {
    "power": 0.0015,
    "gravity": 0.0025,
    "force_scale": 1.0,
    "min_position": -1.2,
    "max_position": 0.6,
    "max_speed": 0.07,
    "goal_position": 0.45,
    "action_cost": 0.05,
    "goal_reward": 100.0,
}
PENDULUM = {
    "g": 10.0,
    "m": 1.0,
    "l": 1.0,
    "dt": 0.05,
    "max_torque": 2.0,
    "max_speed": 8.0,
}
DEFAULT_CONSTANTS = {"cartpole": CARTPOLE, "mountaincar": MOUNTAINCAR, "pendulum": PENDULUM}
DEFAULT_HORIZON = {"cartpole": 200, "mountaincar": 999, "pendulum": 200}
OBS_DIM = {"cartpole": 4, "mountaincar": 2, "pendulum": 3}
# order of the constants vector handed to the rollout kernels
CONSTANT_ORDER = {
    "cartpole": ("gravity", "masscart", "masspole", "length", "force_mag", "tau",
                 "theta_threshold", "x_threshold"),
    "mountaincar": ("power", "gravity", "force_scale", "min_position", "max_position",
                    "max_speed", "goal_position", "action_cost", "goal_reward"),
    "pendulum": ("g", "m", "l", "dt", "max_torque", "max_speed"),
}


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    horizon: int
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.env_id not in ENV_IDS:
            raise ValueError(f"unknown env {self.env_id!r}; expected one of {ENV_IDS}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        merged = dict(DEFAULT_CONSTANTS[self.env_id])
        merged.update(self.constants)
        unknown = set(merged) - set(CONSTANT_ORDER[self.env_id])
        if unknown:
            raise ValueError(f"unknown constants for {self.env_id}: {sorted(unknown)}")
        object.__setattr__(self, "constants", merged)

    @property
    def obs_dim(self) -> int:
        return OBS_DIM[self.env_id]

    @property
    def code(self) -> int:
        return ENV_CODES[self.env_id]

    def constants_vector(self) -> np.ndarray:
        return np.array([self.constants[k] for k in CONSTANT_ORDER[self.env_id]], dtype=np.float64)


def make_spec(env_id: str, horizon: int | None = None, **constants) -> EnvSpec:
    return EnvSpec(env_id, DEFAULT_HORIZON[env_id] if horizon is None else int(horizon), constants)


@dataclass
class EnvState:
    """Physical state plus elapsed steps.

    ``values`` is the physical state: cart-pole ``(x, x_dot, theta, theta_dot)``,
    mountain car ``(position, velocity)``, pendulum ``(theta, theta_dot)``.  The
    pendulum observation is ``(cos theta, sin theta, theta_dot)``; see :func:`observe`.
    """

    values: np.ndarray
    elapsed: int = 0
    done: bool = False


@dataclass
class StepResult:
    state: EnvState
    reward: float
    terminal: bool
    truncated: bool


def observe(spec: EnvSpec, state: EnvState) -> np.ndarray:
    return observe_values(spec.code, state.values)


def observe_values(code: int, values) -> np.ndarray:
    if code == 2:
        th, thdot = values
        return np.array([math.cos(th), math.sin(th), thdot])
    return np.array(values, dtype=np.float64)


def reset(spec: EnvSpec, rng: RngStream) -> EnvState:
    if spec.env_id == "cartpole":
        values = rng.uniform(-0.05, 0.05, size=4)
    elif spec.env_id == "mountaincar":
        values = np.array([rng.uniform(-0.6, -0.4), 0.0])
    else:
        values = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])
    return EnvState(np.asarray(values, dtype=np.float64), 0)


def binarize(action: int, spec: EnvSpec) -> float:
    """Map ``{0, 1}`` to ``-scale`` / ``+scale``."""
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action!r}")
    c = spec.constants
    scale = {"cartpole": "force_mag", "mountaincar": "force_scale", "pendulum": "max_torque"}[spec.env_id]
    return c[scale] if action == 1 else -c[scale]


# The three physics functions below work on plain floats and a constants
# vector in CONSTANT_ORDER; the compiled kernels repeat the same arithmetic in
# the same order so both back ends agree bit for bit.

def cartpole_physics(s, action, c):
    gravity, masscart, masspole, length, force_mag, tau, th_thr, x_thr = c
    x, x_dot, theta, theta_dot = s
    force = force_mag if action == 1 else -force_mag
    total_mass = masspole + masscart
    polemass_length = masspole * length
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass
    thetaacc = (gravity * sintheta - costheta * temp) / (
        length * (4.0 / 3.0 - masspole * costheta * costheta / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    x_dot = x_dot + tau * xacc
    x = x + tau * x_dot
    theta_dot = theta_dot + tau * thetaacc
    theta = theta + tau * theta_dot
    terminal = x < -x_thr or x > x_thr or theta < -th_thr or theta > th_thr
    return (x, x_dot, theta, theta_dot), 1.0, terminal


def mountaincar_physics(s, action, c):
    power, gravity, force_scale, min_pos, max_pos, max_speed, goal, action_cost, goal_reward = c
    position, velocity = s
    force = force_scale if action == 1 else -force_scale
    velocity = velocity + force * power - gravity * math.cos(3.0 * position)
    velocity = min(max(velocity, -max_speed), max_speed)
    position = position + velocity
    position = min(max(position, min_pos), max_pos)
    if position == min_pos and velocity < 0.0:
        velocity = 0.0
    terminal = position >= goal
    reward = -action_cost * force * force
    if terminal:
        reward = reward + goal_reward
    return (position, velocity), reward, terminal


def angle_normalize(x: float) -> float:
    return ((x + math.pi) % (2.0 * math.pi)) - math.pi


def pendulum_physics(s, action, c):
    g, m, l, dt, max_torque, max_speed = c
    th, thdot = s
    u = max_torque if action == 1 else -max_torque
    thn = angle_normalize(th)
    cost = thn * thn + 0.1 * thdot * thdot + 0.001 * u * u
    thdot = thdot + (3.0 * g / (2.0 * l) * math.sin(th) + 3.0 / (m * l * l) * u) * dt
    thdot = min(max(thdot, -max_speed), max_speed)
    th = th + thdot * dt
    return (th, thdot), -cost, False


PHYSICS = (cartpole_physics, mountaincar_physics, pendulum_physics)


def step(spec: EnvSpec, state: EnvState, action: int) -> StepResult:
    assert not state.done and state.elapsed < spec.horizon, "stepping a finished episode"
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action!r}")
    values, reward, terminal = PHYSICS[spec.code](
        tuple(float(v) for v in state.values), action, tuple(spec.constants_vector())
    )
    elapsed = state.elapsed + 1
    truncated = (not terminal) and elapsed >= spec.horizon
    nxt = EnvState(np.array(values, dtype=np.float64), elapsed, terminal or truncated)
    return StepResult(nxt, reward, terminal, truncated)


def pendulum_energy(spec: EnvSpec, values) -> float:
    """Mechanical energy of the uniform rod (``theta = 0`` upright)."""
    c = spec.constants
    th, thdot = values
    inertia = c["m"] * c["l"] ** 2 / 3.0
    return 0.5 * inertia * thdot * thdot + c["m"] * c["g"] * (c["l"] / 2.0) * math.cos(th)
