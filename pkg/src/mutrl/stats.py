"""Mutation killing criteria over populations of agent returns.

Three criteria decide whether a mutated population differs from the
healthy one:

* ``AVG``  - per-pair ratio of mean returns below ``theta`` for a large
  enough fraction of the pairs;
* ``R``    - Welch two-sample test on per-agent mean returns, gated by
  Cohen's d and post-hoc power;
* ``DtR``  - the same gate applied to Hellinger distances between
  resampled healthy/healthy and healthy/mutated return histograms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

AVG = "AVG"
R = "R"
DTR = "DtR"
CRITERIA = (AVG, R, DTR)

ALPHA = 0.05
EFFECT_THRESHOLD = 0.5
POWER_THRESHOLD = 0.8
HIST_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class RewardSample:
    """Episode returns of a population, one row per agent."""

    returns: np.ndarray

    def __post_init__(self):
        arr = np.array(self.returns, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("RewardSample needs a rectangular (agents x episodes) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("returns must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "returns", arr)

    @classmethod
    def from_lists(cls, per_agent: Sequence[Sequence[float]]) -> "RewardSample":
        lengths = {len(r) for r in per_agent}
        if len(lengths) != 1:
            raise ValueError("every agent needs the same number of episodes")
        return cls(np.asarray(per_agent, dtype=np.float64))

    @property
    def n_agents(self) -> int:
        return self.returns.shape[0]

    @property
    def n_episodes(self) -> int:
        return self.returns.shape[1]

    def agent_means(self) -> np.ndarray:
        return self.returns.mean(axis=1)


@dataclass(frozen=True)
class DistanceSamples:
    intra: tuple
    inter: tuple


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


@dataclass(frozen=True)
class KillVerdict:
    criterion: str
    killed: bool
    conclusive: bool
    p_value: Optional[float] = None
    effect_size: Optional[float] = None
    power: Optional[float] = None
    ratio_fraction: Optional[float] = None
    distances: Optional[DistanceSamples] = None

    def __post_init__(self):
        if self.killed and not self.conclusive:
            raise ValueError("a killed verdict must be conclusive")

    def to_dict(self) -> dict:
        """JSON record; non-finite floats are written as strings."""
        return {
            "criterion": self.criterion,
            "killed": bool(self.killed),
            "conclusive": bool(self.conclusive),
            "p_value": _json_float(self.p_value),
            "effect_size": _json_float(self.effect_size),
            "power": _json_float(self.power),
            "ratio_fraction": _json_float(self.ratio_fraction),
        }

    @classmethod
    def from_dict(cls, data) -> "KillVerdict":
        def num(v):
            return None if v is None else float(v)

        return cls(data["criterion"], data["killed"], data["conclusive"], num(data["p_value"]),
                   num(data["effect_size"]), num(data["power"]), num(data["ratio_fraction"]))


def avg_killing(healthy: RewardSample, mutated: RewardSample, theta: float = 0.9,
                fraction: float = 0.8) -> KillVerdict:
    """Ratio criterion over agent pairs matched by index.

    Pairs whose healthy mean is not positive are excluded; the kill
    fraction is taken over the remaining pairs.
    """
    if healthy.n_agents != mutated.n_agents:
        raise ValueError("AVG pairs agents by index and needs equal population sizes")
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    h = healthy.agent_means()
    m = mutated.agent_means()
    valid = h > 0.0
    if not valid.any():
        return KillVerdict(AVG, killed=False, conclusive=False)
    ratios = m[valid] / h[valid]
    frac = float(np.count_nonzero(ratios < theta)) / len(ratios)
    return KillVerdict(AVG, killed=frac >= fraction, conclusive=True, ratio_fraction=frac)


def welch_linear_test(a, b) -> float:
    """Two-sided p-value of a two-group Gaussian linear model with unequal variances.

    Degenerate zero-variance samples give ``1.0`` for equal means and
    ``0.0`` otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    va = a.var(ddof=1) / len(a)
    vb = b.var(ddof=1) / len(b)
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0.0:
        return 1.0 if diff == 0.0 else 0.0
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return float(min(1.0, max(0.0, 2.0 * sps.t.sf(abs(t), df))))


def cohens_d(a, b) -> float:
    """``(mean(a) - mean(b)) / pooled_sd``; ``+-inf`` when only the sd vanishes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    na, nb = len(a), len(b)
    pooled = math.sqrt(((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / (na + nb - 2))
    diff = float(a.mean() - b.mean())
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / pooled


def posthoc_power(d: float, n_a: int, n_b: int, alpha: float = ALPHA) -> float:
    """Normal-approximation power of a two-sided two-sample test at effect ``d``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if math.isinf(d):
        return 1.0
    shift = abs(d) * math.sqrt(n_a * n_b / (n_a + n_b))
    return float(min(1.0, max(0.0, sps.norm.cdf(shift - sps.norm.ppf(1.0 - alpha / 2.0)))))


def _gate(criterion, a, b, distances=None) -> KillVerdict:
    p = welch_linear_test(a, b)
    d = cohens_d(a, b)
    power = posthoc_power(d, len(a), len(b))
    conclusive = power >= POWER_THRESHOLD
    killed = conclusive and p < ALPHA and abs(d) >= EFFECT_THRESHOLD
    return KillVerdict(criterion, killed, conclusive, p_value=p, effect_size=d, power=power,
                       distances=distances)


def r_killing(healthy: RewardSample, mutated: RewardSample) -> KillVerdict:
    """Statistical test on the per-agent mean returns of both populations."""
    return _gate(R, healthy.agent_means(), mutated.agent_means())


def hellinger(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("distributions must be 1-D and of equal length")
    for v in (p, q):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("inputs must be probability vectors")
    h = math.sqrt(0.5 * float(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))
    return min(1.0, h)


def shared_histograms(x, y, bins: int = 10):
    """Normalized histograms of ``x`` and ``y`` over their pooled range."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if hi == lo:
        one = np.zeros(bins)
        one[0] = 1.0
        hp = hq = one
    else:
        hp = np.histogram(x, bins=bins, range=(lo, hi))[0].astype(np.float64)
        hq = np.histogram(y, bins=bins, range=(lo, hi))[0].astype(np.float64)
    hp = np.maximum(hp, HIST_FLOOR)
    hq = np.maximum(hq, HIST_FLOOR)
    return hp / hp.sum(), hq / hq.sum()


def dtr_killing(healthy: RewardSample, mutated: RewardSample, subset_size: int = 10,
                resamples: int = 30, bins: int = 10, rng_seed: int = 0) -> KillVerdict:
    """Distance-to-healthy-reward criterion.

    Each resample splits the agent indices into two disjoint subsets A and
    B; the intra distance compares healthy[A] with healthy[B] and the inter
    distance compares healthy[A] with mutated[B], both over pooled episode
    returns.  Identical populations therefore give identical lists.
    """
    n = healthy.n_agents
    if mutated.n_agents != n:
        raise ValueError("populations must have equal size")
    if subset_size > n:
        raise ValueError(f"subset_size {subset_size} exceeds population size {n}")
    if subset_size < 1 or 2 * subset_size > n:
        raise ValueError(f"two disjoint subsets of {subset_size} need at least {2 * subset_size} agents")
    if resamples < 2:
        raise ValueError("resamples must be >= 2")
    rng = np.random.default_rng(rng_seed)
    intra, inter = [], []
    for _ in range(resamples):
        perm = rng.permutation(n)
        a = perm[:subset_size]
        b = perm[subset_size:2 * subset_size]
        ha = healthy.returns[a].ravel()
        intra.append(hellinger(*shared_histograms(ha, healthy.returns[b].ravel(), bins)))
        inter.append(hellinger(*shared_histograms(ha, mutated.returns[b].ravel(), bins)))
    return _gate(DTR, inter, intra, DistanceSamples(tuple(intra), tuple(inter)))


def kill(criterion: str, healthy: RewardSample, mutated: RewardSample, **options) -> KillVerdict:
    if criterion == AVG:
        return avg_killing(healthy, mutated, **options)
    if criterion == R:
        return r_killing(healthy, mutated)
    if criterion == DTR:
        return dtr_killing(healthy, mutated, **options)
    raise ValueError(f"unknown criterion {criterion!r}")
