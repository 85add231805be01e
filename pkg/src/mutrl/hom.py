"""Kill matrices, non-trivial FOM selection and higher-order mutant classification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Callable, Mapping, Optional, Sequence

from mutrl.agents.spec import AlgoSpec
from mutrl.env import EnvironmentConfig
from mutrl.errors import CompositionError
from mutrl.mutation import MutationSpec, compose_hom, parse_mutation_string
from mutrl.stats import KillVerdict, RewardSample, kill

log = logging.getLogger(__name__)


class HomType(str, Enum):
    NOT_KILLED = "NotKilled"
    NS = "NonSubsuming"
    WSC = "WeaklySubsumingCoupled"
    WSD = "WeaklySubsumingDecoupled"
    SSC = "StronglySubsumingCoupled"


def classify_hom(t_h, t_1, t_2) -> HomType:
    """Type of a HOM from the environments killing it and its two constituents."""
    t_h, t_1, t_2 = set(t_h), set(t_1), set(t_2)
    if not t_h:
        return HomType.NOT_KILLED
    union = t_1 | t_2
    if len(t_h) >= len(union):
        return HomType.NS
    if t_h <= (t_1 & t_2):
        return HomType.SSC
    if not t_h & union:
        return HomType.WSD
    return HomType.WSC


@dataclass
class KillMatrix:
    """Verdict per (mutation, environment); rows without a population are flagged incomplete."""

    criterion: str
    rows: list
    columns: list
    cells: dict = field(default_factory=dict)  # (row name, env key) -> KillVerdict
    incomplete: dict = field(default_factory=dict)  # row name -> reason

    def __post_init__(self):
        names = [m.name for m in self.rows]
        if len(set(names)) != len(names):
            raise ValueError("duplicate mutation rows")
        keys = [c.key for c in self.columns]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate environment columns")
        for verdict in self.cells.values():
            if verdict.criterion != self.criterion:
                raise ValueError("every cell must use the matrix criterion")

    def row(self, name: str) -> MutationSpec:
        for m in self.rows:
            if m.name == name:
                return m
        raise KeyError(name)

    def is_complete(self, name: str) -> bool:
        return name not in self.incomplete and all((name, c.key) in self.cells for c in self.columns)

    def verdict(self, name: str, env: EnvironmentConfig) -> Optional[KillVerdict]:
        return self.cells.get((name, env.key))

    def killers(self, name: str) -> frozenset:
        """Keys of the environments that kill row ``name``."""
        return frozenset(c.key for c in self.columns
                         if (v := self.cells.get((name, c.key))) is not None and v.killed)

    def kill_count(self, name: str) -> int:
        return len(self.killers(name))

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "columns": [{"key": c.key, "env_id": c.env_id, "params": dict(c.params)} for c in self.columns],
            "rows": [
                {"mutation": m.name,
                 "complete": self.is_complete(m.name),
                 "reason": self.incomplete.get(m.name),
                 "kills": self.kill_count(m.name),
                 "cells": [None if (v := self.cells.get((m.name, c.key))) is None else v.to_dict()
                           for c in self.columns]}
                for m in self.rows
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "KillMatrix":
        columns = [EnvironmentConfig(c["env_id"], dict(c["params"])) for c in data["columns"]]
        rows, cells, incomplete = [], {}, {}
        for rec in data["rows"]:
            m = parse_mutation_string(rec["mutation"])
            rows.append(m)
            if rec.get("reason"):
                incomplete[m.name] = rec["reason"]
            for c, cell in zip(columns, rec["cells"]):
                if cell is not None:
                    cells[(m.name, c.key)] = KillVerdict.from_dict(cell)
        return cls(data["criterion"], rows, columns, cells, incomplete)


def kill_matrix_from_samples(criterion: str, mutations: Sequence[MutationSpec], envs: Sequence[EnvironmentConfig],
                             healthy: Mapping[EnvironmentConfig, RewardSample],
                             mutated: Mapping[str, Optional[Mapping[EnvironmentConfig, RewardSample]]],
                             **options) -> KillMatrix:
    """Fill a matrix from precomputed returns.

    ``mutated`` maps a mutation name to its returns per environment; a
    missing or ``None`` entry marks the row incomplete.
    """
    envs = list(envs)
    if not envs:
        raise ValueError("the kill matrix needs at least one environment")
    matrix = KillMatrix(criterion, list(mutations), envs)
    for m in matrix.rows:
        samples = mutated.get(m.name)
        if samples is None:
            matrix.incomplete[m.name] = "missing population"
            continue
        for e in envs:
            if e not in samples:
                matrix.incomplete[m.name] = f"no returns on {e.key}"
                continue
            matrix.cells[(m.name, e.key)] = kill(criterion, healthy[e], samples[e], **options)
    return matrix


def build_kill_matrix(healthy_policies, populations: Mapping[MutationSpec, Optional[Sequence]], envs,
                      criterion: str, eval_spec, **options) -> KillMatrix:
    """Evaluate healthy and mutated populations on every environment and compare them."""
    from mutrl.testgen import population_rewards

    envs = list(envs)
    healthy = {e: population_rewards(healthy_policies, e, eval_spec) for e in envs}
    mutated = {}
    for m, agents in populations.items():
        if agents:
            mutated[m.name] = {e: population_rewards(agents, e, eval_spec) for e in envs}
    return kill_matrix_from_samples(criterion, list(populations), envs, healthy, mutated, **options)


def select_nontrivial_foms(matrix: KillMatrix) -> list:
    """Complete first-order rows killed by some but not all environments."""
    n = len(matrix.columns)
    return [m for m in matrix.rows
            if m.order == 1 and matrix.is_complete(m.name) and 0 < matrix.kill_count(m.name) < n]


@dataclass(frozen=True)
class HomClassification:
    hom: MutationSpec
    t_h: frozenset
    t_1: frozenset
    t_2: frozenset
    type: HomType

    def to_dict(self) -> dict:
        return {"hom": self.hom.name, "type": self.type.value,
                "T_H": sorted(self.t_h), "T_1": sorted(self.t_1), "T_2": sorted(self.t_2)}


@dataclass
class HomReport:
    classifications: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # (pair name, reason)
    reason: Optional[str] = None  # set when no HOM could be formed

    def summary(self) -> dict:
        counts = {t: 0 for t in HomType}
        for c in self.classifications:
            counts[c.type] += 1
        return {"hom_count": len(self.classifications), "ns": counts[HomType.NS],
                "wsc": counts[HomType.WSC], "wsd": counts[HomType.WSD], "ssc": counts[HomType.SSC]}

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "reason": self.reason,
                "skipped": [{"pair": p, "reason": r} for p, r in self.skipped],
                "homs": [c.to_dict() for c in self.classifications]}


def hom_pipeline(foms: Sequence[MutationSpec], algo: AlgoSpec, fom_matrix: KillMatrix,
                 healthy: Mapping[EnvironmentConfig, RewardSample],
                 hom_rewards: Callable[[MutationSpec], Mapping[EnvironmentConfig, RewardSample]],
                 **options) -> HomReport:
    """Compose every pair of non-trivial FOMs, evaluate it and classify it.

    ``hom_rewards(hom)`` trains (or loads) the HOM population and returns
    its returns on every column of ``fom_matrix``.
    """
    report = HomReport()
    if len(foms) < 2:
        report.reason = "fewer than two non-trivial FOMs"
        return report
    for a, b in combinations(foms, 2):
        try:
            hom = compose_hom(a.operators[0], b.operators[0], algo)
        except CompositionError as exc:
            pair = f"{a.name}+{b.name}"
            log.info("skipping %s: %s", pair, exc)
            report.skipped.append((pair, str(exc)))
            continue
        samples = hom_rewards(hom)
        t_h = frozenset(e.key for e in fom_matrix.columns
                        if kill(fom_matrix.criterion, healthy[e], samples[e], **options).killed)
        t_1 = fom_matrix.killers(a.name)
        t_2 = fom_matrix.killers(b.name)
        report.classifications.append(HomClassification(hom, t_h, t_1, t_2, classify_hom(t_h, t_1, t_2)))
    if not report.classifications and report.reason is None:
        report.reason = "no compatible FOM pair"
    return report
