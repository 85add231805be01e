"""Catalog of first-order mutation operators and their composition.

Operators fall into three levels.  Environment-level operators intercept
each training-time :class:`~mutrl.env.Observation`; agent- and
policy-level operators rewrite the :class:`~mutrl.agents.spec.AlgoSpec`
before training starts.

Operator strings follow ``OPID(_PARAM)?(_PROB)?`` and higher-order mutants
join instances with ``+``, e.g. ``M_1.0``, ``PAC_Sigmoid``, ``NR`` or
``PAC_Sigmoid+NDF``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mutrl.agents.nn import ACTIVATIONS, OPTIMIZERS
from mutrl.agents.spec import PG, AlgoSpec, default_algo_spec
from mutrl.env import Observation
from mutrl.errors import (
    CompatibilityError,
    CompositionError,
    MutationParseError,
    VacuousMutationError,
)

ENVIRONMENT = "Environment"
AGENT = "Agent"
POLICY = "Policy"

LEVELS = {
    "RN": ENVIRONMENT,
    "M": ENVIRONMENT,
    "Ra": ENVIRONMENT,
    "R": ENVIRONMENT,
    "NDF": AGENT,
    "NR": AGENT,
    "MSU": AGENT,
    "MTS": AGENT,
    "ILF": AGENT,
    "PAC": POLICY,
    "POC": POLICY,
}

NAMES = {
    "RN": "Reward Noise",
    "M": "Mangled",
    "Ra": "Random",
    "R": "Repeat",
    "NDF": "No Discount Factor",
    "NR": "No Reverse",
    "MSU": "Missing State Update",
    "MTS": "Missing Terminal State",
    "ILF": "Incorrect Loss Function",
    "PAC": "Policy Activation Change",
    "POC": "Policy Optimizer Change",
}

DEFAULT_NOISE_SIGMA = 1.0


@dataclass(frozen=True)
class OperatorInstance:
    op_id: str
    probability: Optional[float] = None
    parameter: Optional[object] = None

    def __post_init__(self):
        if self.op_id not in LEVELS:
            raise ValueError(f"unknown operator {self.op_id!r}")
        if self.level == ENVIRONMENT:
            if self.probability is None or not 0.0 <= self.probability <= 1.0:
                raise ValueError(f"{self.op_id} needs a probability in [0, 1]")
            object.__setattr__(self, "probability", float(self.probability))
        elif self.probability is not None:
            raise ValueError(f"{self.op_id} is not environment-level and takes no probability")
        if self.op_id == "RN":
            sigma = DEFAULT_NOISE_SIGMA if self.parameter is None else float(self.parameter)
            if sigma < 0:
                raise ValueError("RN noise scale must be non-negative")
            object.__setattr__(self, "parameter", sigma)
        elif self.op_id == "PAC":
            if self.parameter not in ACTIVATIONS:
                raise ValueError(f"PAC needs an activation in {ACTIVATIONS}, got {self.parameter!r}")
        elif self.op_id == "POC":
            if self.parameter not in OPTIMIZERS:
                raise ValueError(f"POC needs an optimizer in {OPTIMIZERS}, got {self.parameter!r}")
        elif self.parameter is not None:
            raise ValueError(f"{self.op_id} takes no parameter")

    @property
    def level(self) -> str:
        return LEVELS[self.op_id]

    def render(self) -> str:
        parts = [self.op_id]
        if self.op_id == "RN" and self.parameter != DEFAULT_NOISE_SIGMA:
            parts.append(repr(self.parameter))
        elif self.op_id in ("PAC", "POC"):
            parts.append(self.parameter)
        if self.probability is not None:
            parts.append(repr(self.probability))
        return "_".join(parts)

    def __str__(self):
        return self.render()


@dataclass(frozen=True)
class MutationSpec:
    """A first-order (one operator) or second-order (two operators) mutation."""

    operators: tuple

    def __post_init__(self):
        ops = tuple(self.operators)
        if len(ops) not in (1, 2):
            raise CompositionError("a mutation holds one or two operator instances")
        if len({op.op_id for op in ops}) != len(ops):
            raise CompositionError(f"duplicate operator in {'+'.join(map(str, ops))}")
        object.__setattr__(self, "operators", ops)

    @property
    def order(self) -> int:
        return len(self.operators)

    @property
    def name(self) -> str:
        return "+".join(op.render() for op in self.operators)

    def __str__(self):
        return self.name

    def environment_operators(self) -> tuple:
        return tuple(op for op in self.operators if op.level == ENVIRONMENT)


_TOKEN_FLOAT = re.compile(r"^[0-9]+(\.[0-9]*)?([eE][-+]?[0-9]+)?$")


def _parse_float(token, text, pos, what):
    if not _TOKEN_FLOAT.match(token):
        raise MutationParseError(f"malformed {what} {token!r}", text, pos)
    return float(token)


def parse_operator(text: str, offset: int = 0, source: Optional[str] = None) -> OperatorInstance:
    source = text if source is None else source
    tokens = text.split("_")
    positions = []
    pos = offset
    for tok in tokens:
        positions.append(pos)
        pos += len(tok) + 1
    op_id = tokens[0]
    if op_id not in LEVELS:
        raise MutationParseError(f"unknown operator id {op_id!r}", source, offset)
    rest = tokens[1:]
    level = LEVELS[op_id]
    probability = None
    parameter = None
    if level == ENVIRONMENT:
        if not rest:
            raise MutationParseError(f"{op_id} requires a probability", source, offset + len(op_id))
        probability = _parse_float(rest[-1], source, positions[-1], "probability")
        if not 0.0 <= probability <= 1.0:
            raise MutationParseError(f"probability {rest[-1]!r} outside [0, 1]", source, positions[-1])
        if len(rest) == 2 and op_id == "RN":
            parameter = _parse_float(rest[0], source, positions[1], "noise scale")
        elif len(rest) > 1:
            raise MutationParseError(f"too many fields for {op_id}", source, positions[1])
    elif op_id in ("PAC", "POC"):
        allowed = ACTIVATIONS if op_id == "PAC" else OPTIMIZERS
        if len(rest) != 1 or rest[0] not in allowed:
            where = positions[1] if rest else offset + len(op_id)
            raise MutationParseError(f"{op_id} requires one of {allowed}", source, where)
        parameter = rest[0]
    elif rest:
        raise MutationParseError(f"{op_id} takes no fields", source, positions[1])
    return OperatorInstance(op_id, probability, parameter)


def parse_mutation_string(text: str) -> MutationSpec:
    """Parse ``"M_1.0"``, ``"NR"``, ``"PAC_Sigmoid+NDF"`` and the like."""
    stripped = text.strip()
    lead = len(text) - len(text.lstrip())
    if not stripped:
        raise MutationParseError("empty mutation string", text, 0)
    instances = []
    offset = lead
    for part in stripped.split("+"):
        if not part:
            raise MutationParseError("empty operator", text, offset)
        instances.append(parse_operator(part, offset, text))
        offset += len(part) + 1
    try:
        return MutationSpec(tuple(instances))
    except CompositionError as exc:
        raise MutationParseError(str(exc), text, lead) from exc


def check_compatible(inst: OperatorInstance, spec: AlgoSpec) -> None:
    """Raise if ``inst`` cannot be applied to a learner configured by ``spec``."""
    if inst.op_id == "NR" and spec.algo_id != PG:
        raise CompatibilityError(f"NR reverses Monte-Carlo returns and does not apply to {spec.algo_id}")
    if inst.op_id == "PAC" and inst.parameter == spec.activation:
        raise VacuousMutationError(f"{inst.parameter} is already the activation of {spec.algo_id}")
    if inst.op_id == "POC" and inst.parameter == spec.optimizer:
        raise VacuousMutationError(f"{inst.parameter} is already the optimizer of {spec.algo_id}")


def is_applicable(mutation: MutationSpec, spec: AlgoSpec) -> bool:
    try:
        for op in mutation.operators:
            check_compatible(op, spec)
    except (CompatibilityError, VacuousMutationError):
        return False
    return True


def apply_agent_mutation(inst: OperatorInstance, spec: AlgoSpec) -> AlgoSpec:
    if inst.level != AGENT:
        raise ValueError(f"{inst} is not an agent-level operator")
    check_compatible(inst, spec)
    if inst.op_id == "NDF":
        return spec.replace(gamma=1.0)
    if inst.op_id == "MTS":
        return spec.replace(drop_terminal=True)
    if inst.op_id == "NR":
        return spec.replace(reverse_rewards=True)
    if inst.op_id == "MSU":
        return spec.replace(stale_state=True)
    return spec.replace(loss="NegatedTD")


def apply_policy_mutation(inst: OperatorInstance, spec: AlgoSpec) -> AlgoSpec:
    if inst.level != POLICY:
        raise ValueError(f"{inst} is not a policy-level operator")
    check_compatible(inst, spec)
    if inst.op_id == "PAC":
        return spec.replace(activation=inst.parameter)
    return spec.replace(optimizer=inst.parameter)


def apply_to_spec(mutation: Optional[MutationSpec], spec: AlgoSpec) -> AlgoSpec:
    """All agent- and policy-level transforms of ``mutation`` applied to ``spec``.

    Compatibility is checked against the unmutated spec for every operator
    first, so the result does not depend on operator order.
    """
    if mutation is None:
        return spec
    for op in mutation.operators:
        check_compatible(op, spec)
    out = spec
    for op in mutation.operators:
        if op.level == AGENT:
            out = apply_agent_mutation(op, out)
        elif op.level == POLICY:
            out = apply_policy_mutation(op, out)
    return out


def compose_hom(a: OperatorInstance, b: OperatorInstance, algo) -> MutationSpec:
    """Order-2 mutant ``a+b`` for ``algo`` (an algo id or an :class:`AlgoSpec`)."""
    spec = algo if isinstance(algo, AlgoSpec) else default_algo_spec(algo)
    if a.op_id == b.op_id:
        raise CompositionError(f"cannot compose {a.op_id} with itself")
    for op in (a, b):
        try:
            check_compatible(op, spec)
        except (CompatibilityError, VacuousMutationError) as exc:
            raise CompositionError(str(exc)) from exc
    return MutationSpec((a, b))


def apply_env_mutation(inst: OperatorInstance, obs: Observation, history: Sequence[Observation], rng) -> Observation:
    """Corrupt one observation.

    ``history`` holds the true observations seen so far in the run.  M, Ra
    and R return ``obs`` unchanged when the history is too short.
    """
    if inst.level != ENVIRONMENT:
        raise ValueError(f"{inst} is not an environment-level operator")
    p = inst.probability
    if p <= 0.0:
        return obs
    if p < 1.0 and rng.random() >= p:
        return obs
    if inst.op_id == "RN":
        return obs._replace(r_t=obs.r_t + float(rng.normal(0.0, inst.parameter)))
    if inst.op_id == "R":
        if not history:
            return obs
        prev = history[-1]
        return obs._replace(r_t=prev.r_t, s_next=prev.s_next)
    if inst.op_id == "Ra":
        if not history:
            return obs
        src = history[int(rng.integers(len(history)))]
        return obs._replace(r_t=src.r_t, s_next=src.s_next)
    # Mangled: state and reward come from two different entries
    if len(history) < 2:
        return obs
    i, j = rng.choice(len(history), size=2, replace=False)
    return obs._replace(r_t=history[int(j)].r_t, s_next=history[int(i)].s_next)


class EnvInterceptor:
    """Applies a mutation's environment-level operators to a training stream.

    Operators run in listed order; the history only ever records true
    observations.  ``noop_steps`` counts steps where an operator had to
    pass the observation through because the history was too short.
    """

    def __init__(self, operators: Sequence[OperatorInstance], rng):
        self.operators = tuple(operators)
        self.rng = rng
        self.history: list[Observation] = []
        self.noop_steps = 0

    def __bool__(self):
        return bool(self.operators)

    def __call__(self, obs: Observation) -> Observation:
        out = obs
        for op in self.operators:
            if op.op_id in ("M", "Ra", "R") and op.probability > 0 and len(self.history) < (2 if op.op_id == "M" else 1):
                self.noop_steps += 1
            out = apply_env_mutation(op, out, self.history, self.rng)
        self.history.append(obs)
        return out


STANDARD_FOMS = ("ILF", "M_1.0", "R_1.0", "Ra_1.0", "RN_1.0", "NDF", "NR", "MSU", "MTS",
                 "PAC_ReLU", "PAC_Sigmoid", "POC_SGD")


def catalog(algo_id: Optional[str] = None) -> list[MutationSpec]:
    """The standard first-order mutants; only those applicable to ``algo_id`` when given."""
    mutations = [parse_mutation_string(name) for name in STANDARD_FOMS]
    if algo_id is None:
        return mutations
    spec = default_algo_spec(algo_id)
    return [m for m in mutations if is_applicable(m, spec)]
