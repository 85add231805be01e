"""Campaign orchestration: seeded populations, cached runs, kill matrices and reports.

A campaign directory looks like::

    <out>/config.json                       resolved configuration
    <out>/runs/<run_id>/policy.npz          trained weights
    <out>/runs/<run_id>/run.json            run record (status, seed, timing)
    <out>/rewards/<run_id>/<env key>.csv    evaluation returns per environment
    <out>/environments/<env>_<algo>.json    generated test environments
    <out>/reports/...                       tables, kill matrices, HOM details

Everything under ``reports/`` is a deterministic function of the
configuration; timings only ever go to ``runs/``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
import yaml

from mutrl import env as envs
from mutrl.agents.learners import TrainedPolicy, evaluate, load_policy, save_policy, train
from mutrl.agents.spec import ALGO_IDS, AlgoSpec, default_algo_spec
from mutrl.env import EnvironmentConfig
from mutrl.errors import CompositionError, ConfigurationError
from mutrl.hom import HomReport, KillMatrix, hom_pipeline, kill_matrix_from_samples, select_nontrivial_foms
from mutrl.mutation import MutationSpec, catalog, compose_hom, is_applicable, parse_mutation_string
from mutrl.stats import AVG, CRITERIA, DTR, R, RewardSample
from mutrl.testgen import (Axis, EvalSpec, SearchSpace, TestEnvironmentSet, generate_bounds_environments,
                           healthy_oracle)

log = logging.getLogger(__name__)

HEALTHY = "healthy"
REWARD_HEADER = ("run_id", "algo", "env_id", "mutation", "agent_seed", "episode_index", "episode_return")
KILLED, NOT_KILLED, INAPPLICABLE = "killed", "not-killed", "-"
MARKDOWN_MARKS = {KILLED: "✓", NOT_KILLED: "✗", INAPPLICABLE: "-"}
FORMATS = ("csv", "json", "markdown")

PROFILES = {
    "smoke": {
        "environments": [envs.CARTPOLE],
        "algorithms": ["QNet"],
        "mutations": ["ILF", "RN_1.0"],
        "n_agents": 5,
        "eval_episodes": 5,
        "training_budget": {"QNet": {envs.CARTPOLE: 5_000}},
        "search": {"depth": 0},
    },
    "desk": {"n_agents": 10, "eval_episodes": 10, "search": {"depth": 1}},
    "full": {"n_agents": 20, "eval_episodes": 10, "search": {"depth": 2}},
}

_CRITERION_NAMES = {c.lower(): c for c in CRITERIA}


def criterion_from_name(name: str) -> str:
    try:
        return _CRITERION_NAMES[name.lower()]
    except KeyError:
        raise ConfigurationError(f"unknown criterion {name!r}; expected one of {list(CRITERIA)}") from None


def stable_int(*parts) -> int:
    """Deterministic 31-bit integer from ``parts`` (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


def agent_seed(seed_base: int, env_id: str, algo_id: str, index: int) -> int:
    # The mutation is deliberately left out: agent i of every population shares
    # its seed with healthy agent i, so probability-0 mutants are exact clones.
    return stable_int("agent", seed_base, env_id, algo_id, index)


@dataclass(frozen=True)
class CampaignConfig:
    environments: tuple = (envs.CARTPOLE,)
    algorithms: tuple = ALGO_IDS
    mutations: Optional[tuple] = None  # None: the standard catalog; inapplicable entries report "-"
    n_agents: int = 20
    eval_episodes: int = 10
    criteria: tuple = CRITERIA
    generation_criterion: str = R
    search: Mapping = field(default_factory=dict)
    training_budget: Mapping = field(default_factory=dict)  # algo -> env -> steps
    dtr: Mapping = field(default_factory=dict)  # subset_size / resamples / bins
    hom: bool = True
    seed_base: int = 0
    out: str = "campaign"
    parallelism: int = 1
    profile: Optional[str] = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "environments", tuple(self.environments))
        set_(self, "algorithms", tuple(self.algorithms))
        set_(self, "criteria", tuple(criterion_from_name(c) for c in self.criteria))
        set_(self, "generation_criterion", criterion_from_name(self.generation_criterion))
        if self.mutations is not None:
            set_(self, "mutations", tuple(parse_mutation_string(m).name for m in self.mutations))
        for e in self.environments:
            if e not in envs.ENV_IDS:
                raise ConfigurationError(f"unknown environment {e!r}")
        for a in self.algorithms:
            if a not in ALGO_IDS:
                raise ConfigurationError(f"unknown algorithm {a!r}")
        if not self.environments or not self.algorithms:
            raise ConfigurationError("a campaign needs at least one environment and one algorithm")
        if self.n_agents < 2:
            raise ConfigurationError("n_agents must be >= 2")
        if self.eval_episodes < 1:
            raise ConfigurationError("eval_episodes must be >= 1")
        if self.generation_criterion == AVG:
            raise ConfigurationError("test environments are generated with the R or DtR criterion")
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be >= 1")
        unknown = set(self.dtr) - {"subset_size", "resamples", "bins"}
        if unknown:
            raise ConfigurationError(f"unknown dtr options {sorted(unknown)}")
        unknown = set(self.search) - {"depth", "axes"}
        if unknown:
            raise ConfigurationError(f"unknown search options {sorted(unknown)}")
        for env_id in self.environments:
            self.search_space(env_id)  # validate early

    @classmethod
    def from_dict(cls, data: Mapping, profile: Optional[str] = None) -> "CampaignConfig":
        """Build a config, filling unset keys from ``profile`` (or ``data['profile']``)."""
        data = dict(data)
        profile = profile or data.get("profile")
        merged = {}
        if profile is not None:
            if profile not in PROFILES:
                raise ConfigurationError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
            merged.update(json.loads(json.dumps(PROFILES[profile])))
        merged.update(data)
        merged["profile"] = profile
        known = set(cls.__dataclass_fields__)
        unknown = set(merged) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys {sorted(unknown)}")
        return cls(**merged)

    @classmethod
    def from_yaml(cls, text: str, profile: Optional[str] = None) -> "CampaignConfig":
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigurationError("the configuration file must hold a mapping")
        return cls.from_dict(data, profile)

    @classmethod
    def load(cls, path, profile: Optional[str] = None) -> "CampaignConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_yaml(fh.read(), profile)

    def replace(self, **changes) -> "CampaignConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return json.loads(json.dumps({
            "environments": list(self.environments),
            "algorithms": list(self.algorithms),
            "mutations": None if self.mutations is None else list(self.mutations),
            "n_agents": self.n_agents,
            "eval_episodes": self.eval_episodes,
            "criteria": list(self.criteria),
            "generation_criterion": self.generation_criterion,
            "search": self.search,
            "training_budget": self.training_budget,
            "dtr": self.dtr,
            "hom": self.hom,
            "seed_base": self.seed_base,
            "out": self.out,
            "parallelism": self.parallelism,
            "profile": self.profile,
        }, sort_keys=True))

    def semantic_hash(self) -> str:
        """Hash of everything that changes results (not the output dir or parallelism)."""
        data = self.to_dict()
        for key in ("out", "parallelism", "profile"):
            data.pop(key)
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]

    def algo_spec(self, algo_id: str, env_id: str) -> AlgoSpec:
        spec = default_algo_spec(algo_id, env_id)
        budget = self.training_budget.get(algo_id, {}).get(env_id)
        return spec.replace(training_budget=int(budget)) if budget else spec

    def search_space(self, env_id: str) -> SearchSpace:
        depth = int(self.search.get("depth", 1))
        overrides = self.search.get("axes", {}).get(env_id, {})
        space = SearchSpace.default(env_id, depth)
        axes = []
        for axis in space.axes:
            o = overrides.get(axis.name, {})
            lower, upper = float(o.get("lower", axis.lower)), float(o.get("upper", axis.upper))
            precision = float(o.get("precision", 0.01 * (upper - lower)))
            lo, hi = envs.PARAM_LIMITS[env_id][axis.name]
            if not lo <= lower < upper <= hi:
                raise ConfigurationError(f"{axis.name} search range outside declared limits [{lo}, {hi}]")
            axes.append(Axis(axis.name, lower, upper, precision))
        unknown = set(overrides) - {a.name for a in axes}
        if unknown:
            raise ConfigurationError(f"{env_id} has no parameters {sorted(unknown)}")
        return SearchSpace(tuple(axes), depth)

    def mutation_list(self, algo_id: str) -> list:
        """Mutations of the campaign in order, applicable or not."""
        if self.mutations is None:
            return catalog()
        return [parse_mutation_string(m) for m in self.mutations]

    def dtr_options(self) -> dict:
        opts = {"subset_size": min(10, self.n_agents // 2), "resamples": 30, "bins": 10}
        opts.update(self.dtr)
        return opts

    def eval_spec(self) -> EvalSpec:
        return EvalSpec(self.eval_episodes, stable_int("eval", self.seed_base))


@dataclass
class RunRecord:
    run_id: str
    algo: str
    env_id: str
    mutation: str
    agent_index: int
    seed: int
    status: str = "pending"
    policy_path: Optional[str] = None
    error: Optional[str] = None
    seconds: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_id_for(spec: AlgoSpec, env: EnvironmentConfig, mutation: str, seed: int) -> str:
    blob = json.dumps({"spec": spec.to_dict(), "env": env.to_dict(), "mutation": mutation, "seed": seed},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dump_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _train_job(job):
    """Worker entry point: train one agent and persist it.  Returns the record dict."""
    spec, env, mutation_name, record, run_dir = job
    rec = RunRecord(**record)
    mutation = None if mutation_name == HEALTHY else parse_mutation_string(mutation_name)
    start = time.perf_counter()
    try:
        policy = train(spec, env, mutation, rec.seed)
        path = os.path.join(run_dir, "policy.npz")
        save_policy(policy, path)
        rec.status, rec.policy_path = "done", path
    except Exception as exc:  # isolate the failure to this run
        rec.status, rec.error = "failed", f"{type(exc).__name__}: {exc}"
    rec.seconds = round(time.perf_counter() - start, 3)
    _atomic_write(os.path.join(run_dir, "run.json"), _dump_json(rec.to_dict()))
    return rec.to_dict()


@dataclass
class Population:
    mutation: str
    records: list
    policies: Optional[list]  # None when any run failed

    @property
    def complete(self) -> bool:
        return self.policies is not None


@dataclass
class CampaignReport:
    """Everything the tables are rendered from."""

    healthy: list = field(default_factory=list)  # healthy population summaries
    verdicts: list = field(default_factory=list)  # verdict on the initial environment per mutation
    kill_counts: list = field(default_factory=list)  # kills over all test environments per mutation
    hom_summary: list = field(default_factory=list)  # HOM type counts
    gaps: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"healthy": self.healthy, "verdicts": self.verdicts, "kill_counts": self.kill_counts,
                "hom_summary": self.hom_summary, "gaps": self.gaps}


TABLE_COLUMNS = {
    "healthy": ("env_id", "algo", "n_agents", "mean", "sd", "summary"),
    "verdicts": ("env_id", "algo", "mutation", "criterion", "verdict"),
    "kill_counts": ("env_id", "algo", "mutation", "criterion", "kills", "environments", "summary",
                    "nontrivial"),
    "hom_summary": ("environment", "algorithm", "criterion", "hom_count", "ns", "wsc", "wsd", "ssc"),
}


def _table_rows(report: CampaignReport) -> dict:
    return {"healthy": report.healthy, "verdicts": report.verdicts,
            "kill_counts": report.kill_counts, "hom_summary": report.hom_summary}


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if row.get(c) is None else row.get(c) for c in columns])
    return buf.getvalue()


def _markdown_text(report: CampaignReport) -> str:
    lines = []
    for name, rows in _table_rows(report).items():
        columns = TABLE_COLUMNS[name]
        lines.append(f"## {name}")
        lines.append("")
        lines.append("| " + " | ".join(columns) + " |")
        lines.append("|" + "---|" * len(columns))
        for row in rows:
            cells = []
            for c in columns:
                v = row.get(c)
                if c == "verdict":
                    v = MARKDOWN_MARKS[v]
                cells.append("" if v is None else str(v))
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
    if report.gaps:
        lines.append("## gaps")
        lines.append("")
        lines.extend(f"- {g}" for g in report.gaps)
        lines.append("")
    return "\n".join(lines)


def export_report(report: CampaignReport, fmt: str, out_dir) -> list:
    """Write ``report`` in ``fmt`` under ``out_dir``; returns the written paths."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    out_dir = os.fspath(out_dir)
    paths = []
    if fmt == "csv":
        for name, rows in _table_rows(report).items():
            path = os.path.join(out_dir, f"{name}.csv")
            _atomic_write(path, _csv_text(TABLE_COLUMNS[name], rows))
            paths.append(path)
    elif fmt == "json":
        path = os.path.join(out_dir, "report.json")
        _atomic_write(path, _dump_json(report.to_dict()))
        paths.append(path)
    else:
        path = os.path.join(out_dir, "report.md")
        _atomic_write(path, _markdown_text(report))
        paths.append(path)
    return paths


def format_mean_sd(values) -> str:
    """``"mean (sd)"`` rounded to integers, e.g. ``"500 (0)"``."""
    values = np.asarray(values, dtype=np.float64)
    sd = values.std(ddof=1) if len(values) > 1 else 0.0
    return f"{values.mean():.0f} ({sd:.0f})"


class Campaign:
    """Stateful driver over one campaign directory.  Every stage is idempotent."""

    def __init__(self, config: CampaignConfig):
        self.config = config
        self.out = os.fspath(config.out)
        os.makedirs(self.out, exist_ok=True)
        _atomic_write(os.path.join(self.out, "config.json"),
                      _dump_json({"config": config.to_dict(), "semantic_hash": config.semantic_hash()}))
        self.eval_spec = config.eval_spec()
        self._populations: dict = {}
        self._rewards: dict = {}
        self._env_sets: dict = {}
        self._matrices: dict = {}
        self._homs: dict = {}
        self.trained = 0  # runs trained by this process (not loaded from cache)

    # training ---------------------------------------------------------------

    def _record(self, algo_id, env_id, mutation: str, index: int) -> tuple:
        spec = self.config.algo_spec(algo_id, env_id)
        env = envs.default_config(env_id)
        seed = agent_seed(self.config.seed_base, env_id, algo_id, index)
        rid = run_id_for(spec, env, mutation, seed)
        rec = RunRecord(rid, algo_id, env_id, mutation, index, seed)
        return spec, env, rec, os.path.join(self.out, "runs", rid)

    def _load_record(self, run_dir) -> Optional[dict]:
        path = os.path.join(run_dir, "run.json")
        if not os.path.exists(path):
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)

    def train_populations(self, algo_id: str, env_id: str, mutations: Sequence[str]) -> dict:
        """Train (or load) every population in ``mutations``; returns name -> Population."""
        jobs, plan = [], {}
        for name in mutations:
            if (algo_id, env_id, name) in self._populations:
                continue
            plan[name] = []
            for i in range(self.config.n_agents):
                spec, env, rec, run_dir = self._record(algo_id, env_id, name, i)
                done = self._load_record(run_dir)
                if done is not None and done.get("status") == "done":
                    plan[name].append(done)
                    continue
                plan[name].append(None)
                jobs.append((name, i, (spec, env, name, rec.to_dict(), run_dir)))
        if jobs:
            log.info("training %d runs for %s/%s", len(jobs), algo_id, env_id)
            payloads = [j[2] for j in jobs]
            if self.config.parallelism > 1 and len(jobs) > 1:
                with ProcessPoolExecutor(max_workers=self.config.parallelism) as pool:
                    results = list(pool.map(_train_job, payloads))
            else:
                results = [_train_job(p) for p in payloads]
            self.trained += len(results)
            for (name, i, _), result in zip(jobs, results):
                plan[name][i] = result
        for name, records in plan.items():
            if all(r["status"] == "done" for r in records):
                policies = [load_policy(r["policy_path"]) for r in records]
            else:
                policies = None
            self._populations[(algo_id, env_id, name)] = Population(name, records, policies)
        return {name: self._populations[(algo_id, env_id, name)] for name in mutations}

    def population(self, algo_id, env_id, mutation: str) -> Population:
        return self.train_populations(algo_id, env_id, [mutation])[mutation]

    def applicable_mutations(self, algo_id, env_id) -> list:
        spec = self.config.algo_spec(algo_id, env_id)
        return [m for m in self.config.mutation_list(algo_id) if is_applicable(m, spec)]

    # evaluation -------------------------------------------------------------

    def _reward_path(self, run_id, env: EnvironmentConfig) -> str:
        return os.path.join(self.out, "rewards", run_id, f"{env.key}.csv")

    def _agent_returns(self, record: dict, policy: TrainedPolicy, env: EnvironmentConfig) -> list:
        path = self._reward_path(record["run_id"], env)
        n = self.eval_spec.n_episodes
        if os.path.exists(path):
            with open(path, encoding="utf-8", newline="") as fh:
                rows = list(csv.DictReader(fh))
            if len(rows) == n:
                return [float(r["episode_return"]) for r in rows]
        returns = evaluate(policy, env, n, self.eval_spec.seed)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REWARD_HEADER)
        for k, ret in enumerate(returns):
            writer.writerow([record["run_id"], record["algo"], env.env_id, record["mutation"], record["seed"],
                             k, repr(float(ret))])
        _atomic_write(path, buf.getvalue())
        return returns

    def rewards(self, algo_id, env_id, mutation: str, env: EnvironmentConfig) -> Optional[RewardSample]:
        """Returns of a population on ``env``; ``None`` for an incomplete population."""
        key = (algo_id, env_id, mutation, env)
        if key not in self._rewards:
            pop = self.population(algo_id, env_id, mutation)
            if not pop.complete:
                self._rewards[key] = None
            else:
                self._rewards[key] = RewardSample(np.array(
                    [self._agent_returns(r, p, env) for r, p in zip(pop.records, pop.policies)]))
        return self._rewards[key]

    def _options(self, criterion) -> dict:
        return self.config.dtr_options() if criterion == DTR else {}

    # test environments --------------------------------------------------------

    def environments(self, algo_id, env_id) -> TestEnvironmentSet:
        key = (algo_id, env_id)
        if key in self._env_sets:
            return self._env_sets[key]
        path = os.path.join(self.out, "environments", f"{env_id}_{algo_id}.json")
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                env_set = TestEnvironmentSet.from_json(json.load(fh)["environments"])
        else:
            healthy = self.population(algo_id, env_id, HEALTHY)
            e0 = envs.default_config(env_id)
            if not healthy.complete:
                raise RuntimeError(f"healthy {algo_id}/{env_id} population has failed runs")
            criterion = self.config.generation_criterion
            differs = healthy_oracle(healthy.policies, e0, criterion, self.eval_spec,
                                     reward_fn=lambda e: self.rewards(algo_id, env_id, HEALTHY, e),
                                     **self._options(criterion))
            env_set = generate_bounds_environments(differs, e0, self.config.search_space(env_id))
            _atomic_write(path, _dump_json({"algo": algo_id, "env_id": env_id, "criterion": criterion,
                                            "probes": env_set.probes, "environments": env_set.to_json()}))
        self._env_sets[key] = env_set
        return env_set

    # kill matrices --------------------------------------------------------------

    def kill_matrix(self, algo_id, env_id, criterion) -> KillMatrix:
        key = (algo_id, env_id, criterion)
        if key in self._matrices:
            return self._matrices[key]
        env_list = list(self.environments(algo_id, env_id))
        mutations = self.applicable_mutations(algo_id, env_id)
        self.train_populations(algo_id, env_id, [HEALTHY] + [m.name for m in mutations])
        healthy = {e: self.rewards(algo_id, env_id, HEALTHY, e) for e in env_list}
        mutated = {}
        for m in mutations:
            samples = {e: self.rewards(algo_id, env_id, m.name, e) for e in env_list}
            mutated[m.name] = None if any(s is None for s in samples.values()) else samples
        matrix = kill_matrix_from_samples(criterion, mutations, env_list, healthy, mutated,
                                          **self._options(criterion))
        path = os.path.join(self.out, "reports", f"kill_matrix_{env_id}_{algo_id}_{criterion}.json")
        _atomic_write(path, _dump_json(matrix.to_dict()))
        self._matrices[key] = matrix
        return matrix

    # higher-order mutants -------------------------------------------------------

    def homs(self, algo_id, env_id, criterion) -> HomReport:
        key = (algo_id, env_id, criterion)
        if key in self._homs:
            return self._homs[key]
        matrix = self.kill_matrix(algo_id, env_id, criterion)
        foms = select_nontrivial_foms(matrix)
        spec = self.config.algo_spec(algo_id, env_id)
        pairs = []
        for i, a in enumerate(foms):
            for b in foms[i + 1:]:
                try:
                    pairs.append(compose_hom(a.operators[0], b.operators[0], spec).name)
                except CompositionError:
                    pass
        self.train_populations(algo_id, env_id, pairs)  # parallel up front; the pipeline then loads
        healthy = {e: self.rewards(algo_id, env_id, HEALTHY, e) for e in matrix.columns}

        def hom_rewards(hom: MutationSpec):
            samples = {e: self.rewards(algo_id, env_id, hom.name, e) for e in matrix.columns}
            if any(s is None for s in samples.values()):
                raise RuntimeError(f"HOM {hom.name} population has failed runs")
            return samples

        report = hom_pipeline(foms, spec, matrix, healthy, hom_rewards, **self._options(criterion))
        path = os.path.join(self.out, "reports", f"hom_{env_id}_{algo_id}_{criterion}.json")
        _atomic_write(path, _dump_json({"nontrivial_foms": [f.name for f in foms], **report.to_dict()}))
        self._homs[key] = report
        return report

    # report -------------------------------------------------------------------

    def report(self, criteria: Optional[Sequence[str]] = None, include_hom: Optional[bool] = None) -> CampaignReport:
        criteria = list(criteria or self.config.criteria)
        include_hom = self.config.hom if include_hom is None else include_hom
        rep = CampaignReport()
        for env_id in self.config.environments:
            e0 = envs.default_config(env_id)
            for algo_id in self.config.algorithms:
                healthy = self.rewards(algo_id, env_id, HEALTHY, e0)
                if healthy is None:
                    rep.gaps.append(f"{env_id}/{algo_id}: healthy population incomplete")
                    continue
                means = healthy.agent_means()
                rep.healthy.append({"env_id": env_id, "algo": algo_id, "n_agents": healthy.n_agents,
                                    "mean": float(means.mean()),
                                    "sd": float(means.std(ddof=1)) if len(means) > 1 else 0.0,
                                    "summary": format_mean_sd(means)})
                spec = self.config.algo_spec(algo_id, env_id)
                for criterion in criteria:
                    matrix = self.kill_matrix(algo_id, env_id, criterion)
                    nontrivial = {m.name for m in select_nontrivial_foms(matrix)}
                    n_env = len(matrix.columns)
                    for m in self.config.mutation_list(algo_id):
                        row = {"env_id": env_id, "algo": algo_id, "mutation": m.name, "criterion": criterion}
                        if not is_applicable(m, spec):
                            rep.verdicts.append({**row, "verdict": INAPPLICABLE})
                            rep.kill_counts.append({**row, "kills": None, "environments": n_env,
                                                    "summary": INAPPLICABLE, "nontrivial": False})
                            continue
                        if not matrix.is_complete(m.name):
                            rep.gaps.append(f"{env_id}/{algo_id}/{m.name}: "
                                            f"{matrix.incomplete.get(m.name, 'incomplete')}")
                            continue
                        v = matrix.verdict(m.name, e0)
                        rep.verdicts.append({**row, "verdict": KILLED if v.killed else NOT_KILLED})
                        kills = matrix.kill_count(m.name)
                        rep.kill_counts.append({**row, "kills": kills, "environments": n_env,
                                                "summary": f"{kills}/{n_env}",
                                                "nontrivial": m.name in nontrivial})
                    if include_hom:
                        summary = self.homs(algo_id, env_id, criterion).summary()
                        if summary["hom_count"]:
                            counts = summary
                        else:
                            counts = {k: INAPPLICABLE for k in summary}
                        rep.hom_summary.append({"environment": env_id, "algorithm": algo_id,
                                                "criterion": criterion, **counts})
        return rep

    def write_report(self, report: CampaignReport) -> list:
        out_dir = os.path.join(self.out, "reports")
        paths = []
        for fmt in FORMATS:
            paths.extend(export_report(report, fmt, out_dir))
        return paths


def run_campaign(config: CampaignConfig) -> CampaignReport:
    """Full pipeline: populations, test environments, kill matrices, HOMs and reports."""
    campaign = Campaign(config)
    report = campaign.report()
    campaign.write_report(report)
    return report
