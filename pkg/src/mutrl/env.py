"""Parameterized, seedable simulation environments.

Both environments are pure functions over value types: ``reset`` draws an
initial state from a seed, ``step`` maps (config, state, action, step count)
to an :class:`Observation` without touching any hidden state.  States are
plain tuples of floats so that replays compare bit-for-bit.

CartPole follows the canonical cart-pole benchmark.  MiniLander is a 1-D
vertical descent task whose tunable parameters are ``gravity`` and
``engine_power``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from mutrl.errors import ConfigurationError

CARTPOLE = "CartPole"
MINILANDER = "MiniLander"
ENV_IDS = (CARTPOLE, MINILANDER)

State = tuple  # tuple[float, ...]

# CartPole constants.
CP_GRAVITY = 9.8
CP_HALF_LENGTH = 0.5
CP_FORCE = 10.0
CP_TAU = 0.02
CP_ANGLE_LIMIT = 12 * 2 * math.pi / 360
CP_POSITION_LIMIT = 2.4
CP_INIT_RANGE = 0.05

# MiniLander constants.
ML_DT = 0.1
ML_LANDER_MASS = 1.0
ML_FUEL_PER_THRUST = 0.01  # 100 thrust steps per tank
ML_STEP_COST = 0.1
ML_LANDING_BONUS = 100.0
ML_VELOCITY_PENALTY = 50.0
ML_CRASH_SPEED = 2.0
ML_CRASH_REWARD = -100.0
ML_INIT_STATE = (10.0, 0.0, 1.0)

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    CARTPOLE: {"cart_mass": 1.0, "pole_mass": 0.1},
    MINILANDER: {"gravity": 9.8, "engine_power": 15.0},
}

DEFAULT_EPISODE_CAP = {CARTPOLE: 500, MINILANDER: 200}

# Hard validity range of every parameter; search spaces must lie inside.
PARAM_LIMITS: dict[str, dict[str, tuple[float, float]]] = {
    CARTPOLE: {"cart_mass": (0.05, 100.0), "pole_mass": (0.005, 10.0)},
    MINILANDER: {"gravity": (0.5, 50.0), "engine_power": (1.0, 100.0)},
}

# Default (lower, upper) search limits used for test-environment generation.
SEARCH_LIMITS: dict[str, dict[str, tuple[float, float]]] = {
    CARTPOLE: {"cart_mass": (0.1, 10.0), "pole_mass": (0.01, 1.0)},
    MINILANDER: {"gravity": (2.0, 20.0), "engine_power": (5.0, 40.0)},
}

STATE_DIM = {CARTPOLE: 4, MINILANDER: 3}
N_ACTIONS = {CARTPOLE: 2, MINILANDER: 2}
ACTION_NAMES = {CARTPOLE: ("left", "right"), MINILANDER: ("noop", "thrust")}

# Fixed input scaling applied by the learners, never by the dynamics.
OBS_SCALE = {
    CARTPOLE: (1 / 2.4, 1 / 3.0, 1 / 0.21, 1 / 3.0),
    MINILANDER: (1 / 10.0, 1 / 10.0, 1.0),
}


@dataclass(frozen=True)
class EnvironmentConfig:
    """An environment identity plus its physical parameter vector.

    Two configs are equal when their ``env_id``, parameter maps and episode
    caps are equal, which makes them usable as dictionary keys and set
    members during test-environment generation.
    """

    env_id: str
    params: Mapping[str, float] = field(default_factory=dict)
    episode_cap: int = 0

    def __post_init__(self):
        if self.env_id not in ENV_IDS:
            raise ConfigurationError(f"unknown env_id {self.env_id!r}")
        merged = dict(DEFAULT_PARAMS[self.env_id])
        for name, value in self.params.items():
            if name not in merged:
                raise ConfigurationError(f"{self.env_id} has no parameter {name!r}")
            merged[name] = float(value)
        for name, value in merged.items():
            lo, hi = PARAM_LIMITS[self.env_id][name]
            if not math.isfinite(value) or value <= 0.0:
                raise ConfigurationError(f"{name} must be strictly positive, got {value!r}")
            if not lo <= value <= hi:
                raise ConfigurationError(f"{name}={value!r} outside declared limits [{lo}, {hi}]")
        object.__setattr__(self, "params", dict(sorted(merged.items())))
        cap = self.episode_cap or DEFAULT_EPISODE_CAP[self.env_id]
        if int(cap) != cap or cap <= 0:
            raise ConfigurationError(f"episode_cap must be a positive integer, got {cap!r}")
        object.__setattr__(self, "episode_cap", int(cap))

    def __hash__(self):
        return hash((self.env_id, tuple(self.params.items()), self.episode_cap))

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    @property
    def key(self) -> str:
        """Stable, filesystem-safe label, e.g. ``CartPole-cart_mass=1-pole_mass=0.1``."""
        parts = [f"{k}={v!r}" for k, v in self.params.items()]
        return "-".join([self.env_id, *parts]) + ("" if self.episode_cap == DEFAULT_EPISODE_CAP[self.env_id]
                                                   else f"-cap={self.episode_cap}")

    def to_dict(self) -> dict:
        return {"env_id": self.env_id, "params": dict(self.params), "episode_cap": self.episode_cap}

    @classmethod
    def from_dict(cls, data: Mapping) -> "EnvironmentConfig":
        return cls(data["env_id"], dict(data.get("params", {})), int(data.get("episode_cap", 0)))


def default_config(env_id: str) -> EnvironmentConfig:
    return EnvironmentConfig(env_id)


def with_params(config: EnvironmentConfig, overrides: Mapping[str, float]) -> EnvironmentConfig:
    """Return a copy of ``config`` with some parameters replaced."""
    for name in overrides:
        if name not in config.params:
            raise ValueError(f"{config.env_id} has no parameter {name!r}")
    return EnvironmentConfig(config.env_id, {**config.params, **overrides}, config.episode_cap)


class Observation(NamedTuple):
    """One ``(s_t, a_t, r_t, s_{t+1})`` record plus the terminal flag."""

    s_t: State
    a_t: int
    r_t: float
    s_next: State
    terminal: bool


@dataclass(frozen=True)
class EpisodeTrace:
    observations: tuple[Observation, ...]
    return_undiscounted: float

    def __len__(self):
        return len(self.observations)


def reset(config: EnvironmentConfig, seed: int) -> State:
    """Initial state for ``config``, deterministic in ``seed``."""
    if config.env_id == CARTPOLE:
        rng = np.random.default_rng(seed)
        return tuple(float(v) for v in rng.uniform(-CP_INIT_RANGE, CP_INIT_RANGE, size=4))
    return ML_INIT_STATE


def step(config: EnvironmentConfig, state: State, action: int, step_count: int) -> Observation:
    """Advance one explicit-Euler step.

    ``terminal`` is set when the failure/landing condition holds or when
    ``step_count + 1`` reaches the episode cap.
    """
    if action not in (0, 1):
        raise ValueError(f"action {action!r} outside {ACTION_NAMES[config.env_id]}")
    if len(state) != STATE_DIM[config.env_id] or not all(math.isfinite(v) for v in state):
        raise ValueError(f"invalid {config.env_id} state {state!r}")
    if config.env_id == CARTPOLE:
        s_next, reward, done = _cartpole_step(config.params, state, action)
    else:
        s_next, reward, done = _lander_step(config.params, state, action)
    done = done or step_count + 1 >= config.episode_cap
    return Observation(tuple(state), int(action), reward, s_next, done)


def _cartpole_step(params, state, action):
    x, x_dot, theta, theta_dot = state
    masspole = params["pole_mass"]
    total_mass = params["cart_mass"] + masspole
    polemass_length = masspole * CP_HALF_LENGTH
    force = CP_FORCE if action == 1 else -CP_FORCE
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass
    thetaacc = (CP_GRAVITY * sintheta - costheta * temp) / (
        CP_HALF_LENGTH * (4.0 / 3.0 - masspole * costheta * costheta / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    x = x + CP_TAU * x_dot
    x_dot = x_dot + CP_TAU * xacc
    theta = theta + CP_TAU * theta_dot
    theta_dot = theta_dot + CP_TAU * thetaacc
    failed = (
        x < -CP_POSITION_LIMIT
        or x > CP_POSITION_LIMIT
        or theta < -CP_ANGLE_LIMIT
        or theta > CP_ANGLE_LIMIT
    )
    return (x, x_dot, theta, theta_dot), 1.0, failed


def _lander_step(params, state, action):
    height, velocity, fuel = state
    thrusting = action == 1 and fuel > 0.0
    accel = -params["gravity"]
    if thrusting:
        accel += params["engine_power"] / ML_LANDER_MASS
        fuel = max(0.0, fuel - ML_FUEL_PER_THRUST)
    new_height = height + ML_DT * velocity
    new_velocity = velocity + ML_DT * accel
    reward = -ML_STEP_COST
    if new_height <= 0.0:
        # touchdown speed is the velocity that carried the lander into the ground
        speed = abs(velocity)
        if speed > ML_CRASH_SPEED:
            reward += ML_CRASH_REWARD
        else:
            reward += ML_LANDING_BONUS - ML_VELOCITY_PENALTY * speed
        return (0.0, new_velocity, fuel), reward, True
    return (new_height, new_velocity, fuel), reward, False


def run_episode(
    config: EnvironmentConfig,
    act: Callable[[State], int],
    seed: int,
    actions: Optional[Sequence[int]] = None,
) -> EpisodeTrace:
    """Roll out one episode with policy ``act``.

    When ``actions`` is given it is replayed instead of querying ``act``;
    the episode stops early if the sequence runs out.
    """
    state = reset(config, seed)
    observations = []
    total = 0.0
    for t in range(config.episode_cap):
        if actions is not None:
            if t >= len(actions):
                break
            action = actions[t]
        else:
            action = act(state)
        obs = step(config, state, action, t)
        observations.append(obs)
        total += obs.r_t
        state = obs.s_next
        if obs.terminal:
            break
    return EpisodeTrace(tuple(observations), total)
