"""Boundary test-environment generation by bisection.

Starting from the training environment ``E0``, each parameter axis is
searched toward its upper and lower limit for the farthest configuration
on which healthy agents still behave like on ``E0``.  Each depth
iteration then bisects toward ``E0`` from the midpoint of every pair of
angularly adjacent frontier points.

Everything here is written against a ``differs(config) -> bool`` predicate
so the search can be driven by real agents (see :func:`healthy_oracle`)
or by a scripted function in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from mutrl import env as envs
from mutrl.agents.learners import TrainedPolicy, evaluate
from mutrl.env import EnvironmentConfig, with_params
from mutrl.stats import DTR, R, RewardSample, kill

Predicate = Callable[[EnvironmentConfig], bool]


@dataclass(frozen=True)
class Axis:
    name: str
    lower: float
    upper: float
    precision: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"axis {self.name}: lower must be below upper")
        if self.precision <= 0:
            raise ValueError(f"axis {self.name}: precision must be positive")


@dataclass(frozen=True)
class SearchSpace:
    axes: tuple
    depth: int = 1

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if len({a.name for a in self.axes}) != len(self.axes):
            raise ValueError("duplicate axis")

    @classmethod
    def default(cls, env_id: str, depth: int = 1, limits: Optional[Mapping] = None) -> "SearchSpace":
        """Axes over the declared search limits with precision 1% of each range."""
        limits = limits or envs.SEARCH_LIMITS[env_id]
        axes = [Axis(name, lo, hi, 0.01 * (hi - lo)) for name, (lo, hi) in sorted(limits.items())]
        return cls(tuple(axes), depth)

    def axis(self, name: str) -> Axis:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"depth": self.depth,
                "axes": [{"name": a.name, "lower": a.lower, "upper": a.upper, "precision": a.precision}
                         for a in self.axes]}


@dataclass(frozen=True)
class EvalSpec:
    n_episodes: int = 10
    seed: int = 0


@dataclass
class BisectResult:
    config: EnvironmentConfig
    iterations: int
    frontier: Optional[EnvironmentConfig] = None  # nearest probed config that differs


@dataclass
class TestEnvironmentSet:
    """Generated environments, ``E0`` included exactly once."""

    __test__ = False  # not a pytest class

    initial: EnvironmentConfig
    environments: list = field(default_factory=list)
    provenance: list = field(default_factory=list)
    probes: int = 0

    def __len__(self):
        return len(self.environments)

    def __iter__(self):
        return iter(self.environments)

    def to_json(self) -> list:
        return [{"env_id": e.env_id, "params": dict(e.params), "provenance": p}
                for e, p in zip(self.environments, self.provenance)]

    @classmethod
    def from_json(cls, records: Sequence[Mapping]) -> "TestEnvironmentSet":
        envs_, prov = [], []
        initial = None
        for rec in records:
            cfg = EnvironmentConfig(rec["env_id"], dict(rec["params"]))
            envs_.append(cfg)
            prov.append(dict(rec["provenance"]))
            if rec["provenance"].get("source") == "initial":
                initial = cfg
        if initial is None:
            raise ValueError("environment set lacks the initial environment")
        return cls(initial, envs_, prov)


def population_rewards(policies: Sequence[TrainedPolicy], env: EnvironmentConfig, eval_spec: EvalSpec) -> RewardSample:
    """Evaluate every policy on ``env`` with the same episode seeds."""
    return RewardSample(np.array([evaluate(p, env, eval_spec.n_episodes, eval_spec.seed) for p in policies]))


def is_different(agents_a, env_a, agents_b, env_b, criterion: str, eval_spec: EvalSpec, **options) -> bool:
    """Whether population ``a`` on ``env_a`` is distinguishable from ``b`` on ``env_b``."""
    if not agents_a or not agents_b:
        raise ValueError("both agent lists must be non-empty")
    if criterion not in (R, DTR):
        raise ValueError("environment comparisons use the R or DtR criterion")
    ra = population_rewards(agents_a, env_a, eval_spec)
    rb = population_rewards(agents_b, env_b, eval_spec)
    return kill(criterion, ra, rb, **options).killed


def healthy_oracle(policies: Sequence[TrainedPolicy], e0: EnvironmentConfig, criterion: str,
                   eval_spec: EvalSpec, reward_fn=None, **options) -> Predicate:
    """``differs(config)``: do ``policies`` behave differently on ``config`` than on ``e0``?

    Returns on ``e0`` are computed once; candidate returns are memoized.
    ``reward_fn(config) -> RewardSample`` overrides the evaluation (e.g. a
    disk cache).
    """
    if not policies:
        raise ValueError("the oracle needs trained healthy agents")
    if criterion not in (R, DTR):
        raise ValueError("environment comparisons use the R or DtR criterion")
    if reward_fn is None:
        def reward_fn(config):
            return population_rewards(policies, config, eval_spec)
    memo = {}

    def rewards(config):
        if config not in memo:
            memo[config] = reward_fn(config)
        return memo[config]

    def differs(config):
        return kill(criterion, rewards(e0), rewards(config), **options).killed

    return differs


def axis_bisect(differs: Predicate, e0: EnvironmentConfig, param: str, limit: float,
                precision: float) -> BisectResult:
    """Farthest config from ``e0`` along ``param`` toward ``limit`` that does not differ."""
    start = e0[param]
    if start == limit:
        return BisectResult(e0, 0)
    candidate = with_params(e0, {param: limit})
    if not differs(candidate):
        return BisectResult(candidate, 0)
    good, bad = start, limit
    iterations = 0
    while abs(bad - good) > precision:
        mid = 0.5 * (good + bad)
        iterations += 1
        if differs(with_params(e0, {param: mid})):
            bad = mid
        else:
            good = mid
    return BisectResult(with_params(e0, {param: good}), iterations, with_params(e0, {param: bad}))


def segment_bisect(differs: Predicate, e0: EnvironmentConfig, target: EnvironmentConfig,
                   precision: Mapping[str, float]) -> BisectResult:
    """Bisect on the straight segment from ``e0`` (not different) to ``target`` (different)."""
    names = list(precision)
    good = np.array([e0[n] for n in names])
    bad = np.array([target[n] for n in names])
    tol = np.array([precision[n] for n in names])
    iterations = 0
    while np.any(np.abs(bad - good) > tol):
        mid = 0.5 * (good + bad)
        iterations += 1
        if differs(with_params(e0, dict(zip(names, mid.tolist())))):
            bad = mid
        else:
            good = mid
    return BisectResult(with_params(e0, dict(zip(names, good.tolist()))), iterations,
                        with_params(e0, dict(zip(names, bad.tolist()))))


def _angle(config: EnvironmentConfig, e0: EnvironmentConfig, space: SearchSpace) -> float:
    coords = []
    for axis in space.axes[:2]:
        delta = config[axis.name] - e0[axis.name]
        span = (axis.upper - e0[axis.name]) if delta >= 0 else (e0[axis.name] - axis.lower)
        coords.append(delta / span if span > 0 else 0.0)
    return math.atan2(coords[1], coords[0]) % (2 * math.pi)


def generate_bounds_environments(differs: Predicate, e0: EnvironmentConfig,
                                 space: SearchSpace) -> TestEnvironmentSet:
    if len(space.axes) != 2:
        raise ValueError("environment generation works on exactly two parameters")
    probes = 0

    def counted(config):
        nonlocal probes
        probes += 1
        return differs(config)

    found: list[tuple[EnvironmentConfig, dict]] = []

    def add(config, prov):
        if config == e0 or any(config == c for c, _ in found):
            return False
        found.append((config, prov))
        return True

    for axis in space.axes:
        for side, limit in (("upper", axis.upper), ("lower", axis.lower)):
            res = axis_bisect(counted, e0, axis.name, limit, axis.precision)
            add(res.config, {"source": "axis", "param": axis.name, "side": side,
                             "iterations": res.iterations, "depth": 0})

    precision = {a.name: a.precision for a in space.axes}
    for depth in range(1, space.depth + 1):
        frontier = sorted(found, key=lambda item: _angle(item[0], e0, space))
        n = len(frontier)
        if n < 2:
            break
        pairs = [(0, 1)] if n == 2 else [(j, (j + 1) % n) for j in range(n)]
        for j, k in pairs:
            a, b = frontier[j][0], frontier[k][0]
            mid = with_params(e0, {name: 0.5 * (a[name] + b[name]) for name in precision})
            prov = {"source": "segment", "between": [a.key, b.key], "depth": depth}
            if not counted(mid):
                add(mid, {**prov, "iterations": 0})
            else:
                res = segment_bisect(counted, e0, mid, precision)
                add(res.config, {**prov, "iterations": res.iterations})

    ordered = sorted(found, key=lambda item: _angle(item[0], e0, space))
    result = TestEnvironmentSet(e0, probes=probes)
    result.environments.append(e0)
    result.provenance.append({"source": "initial", "depth": 0})
    for config, prov in ordered:
        result.environments.append(config)
        result.provenance.append(prov)
    return result
