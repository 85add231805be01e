from itertools import combinations, product

import numpy as np
import pytest

from mutrl.agents.spec import default_algo_spec
from mutrl.env import CARTPOLE, default_config, with_params
from mutrl.hom import (HomType, KillMatrix, classify_hom, hom_pipeline, kill_matrix_from_samples,
                       select_nontrivial_foms)
from mutrl.mutation import parse_mutation_string
from mutrl.stats import AVG, R, KillVerdict, RewardSample

UNIVERSE = ("e1", "e2", "e3", "e4")
E0 = default_config(CARTPOLE)
ENVS = [E0] + [with_params(E0, {"cart_mass": m}) for m in (2.0, 3.0, 4.0)]


def subsets(universe):
    for r in range(len(universe) + 1):
        yield from (frozenset(c) for c in combinations(universe, r))


def brute_force_type(t_h, t_1, t_2):
    """Direct evaluation of the subsumption and coupling predicates."""
    if len(t_h) == 0:
        return HomType.NOT_KILLED
    union = t_1 | t_2
    subsuming = len(t_h) < len(union)
    if not subsuming:
        return HomType.NS
    coupled = len(t_h & union) > 0
    strongly = all(e in t_1 and e in t_2 for e in t_h)
    if strongly:
        return HomType.SSC
    return HomType.WSC if coupled else HomType.WSD


def matrix_with_counts(counts, criterion=R):
    rows = [parse_mutation_string(name) for name in counts]
    cells = {}
    for name, k in counts.items():
        for j, env in enumerate(ENVS):
            cells[(name, env.key)] = KillVerdict(criterion, killed=j < k, conclusive=True)
    return KillMatrix(criterion, rows, list(ENVS), cells)


class TestClassifyHom:
    def test_exhaustive_against_brute_force(self):
        cases = 0
        for t_h, t_1, t_2 in product(list(subsets(UNIVERSE)), repeat=3):
            assert classify_hom(t_h, t_1, t_2) == brute_force_type(t_h, t_1, t_2)
            cases += 1
        assert cases == 4096

    @pytest.mark.parametrize("t_h, t_1, t_2, expected", [
        ({"e1"}, {"e1", "e2"}, {"e1", "e3"}, HomType.SSC),
        ({"e9"}, {"e1", "e2"}, {"e3"}, HomType.WSD),
        ({"e1", "e2"}, {"e1", "e2"}, {"e1", "e2"}, HomType.NS),
        ({"e2"}, {"e1", "e2"}, {"e3"}, HomType.WSC),
        (set(), {"e1"}, {"e2"}, HomType.NOT_KILLED),
    ])
    def test_examples(self, t_h, t_1, t_2, expected):
        assert classify_hom(t_h, t_1, t_2) == expected

    def test_subsuming_is_strictly_smaller(self):
        for t_h, t_1, t_2 in product(list(subsets(UNIVERSE[:3])), repeat=3):
            kind = classify_hom(t_h, t_1, t_2)
            if kind in (HomType.SSC, HomType.WSC, HomType.WSD):
                assert len(t_h) < len(t_1 | t_2)


class TestSelection:
    def test_table_pattern(self):
        matrix = matrix_with_counts({"ILF": 4, "RN_1.0": 0, "MSU": 3, "M_1.0": 4, "NDF": 3, "Ra_1.0": 0})
        assert [m.name for m in select_nontrivial_foms(matrix)] == ["MSU", "NDF"]

    def test_incomplete_rows_skipped(self):
        matrix = matrix_with_counts({"MSU": 3, "NDF": 2})
        del matrix.cells[("NDF", ENVS[3].key)]
        assert not matrix.is_complete("NDF")
        assert [m.name for m in select_nontrivial_foms(matrix)] == ["MSU"]

    def test_killers_and_counts(self):
        matrix = matrix_with_counts({"MSU": 2})
        assert matrix.killers("MSU") == frozenset({ENVS[0].key, ENVS[1].key})
        assert matrix.kill_count("MSU") == 2


class TestKillMatrix:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.healthy = {e: RewardSample(rng.normal(400, 20, (6, 4))) for e in ENVS}
        self.mutations = [parse_mutation_string(n) for n in ("ILF", "RN_0.0", "MSU")]
        self.mutated = {
            "ILF": {e: RewardSample(np.full((6, 4), 10.0)) for e in ENVS},
            "RN_0.0": dict(self.healthy),
            "MSU": None,
        }

    def test_shape_and_gaps(self):
        matrix = kill_matrix_from_samples(R, self.mutations, ENVS, self.healthy, self.mutated)
        assert matrix.kill_count("ILF") == len(ENVS)
        assert matrix.kill_count("RN_0.0") == 0
        assert matrix.incomplete == {"MSU": "missing population"}
        assert sum(1 for (row, _) in matrix.cells if row == "ILF") == len(ENVS)

    def test_json_round_trip(self):
        matrix = kill_matrix_from_samples(AVG, self.mutations, ENVS, self.healthy, self.mutated)
        back = KillMatrix.from_dict(matrix.to_dict())
        assert back.to_dict() == matrix.to_dict()

    def test_mixed_criteria_rejected(self):
        with pytest.raises(ValueError):
            KillMatrix(R, [], [], {("x", "y"): KillVerdict(AVG, False, True)})

    def test_needs_environments(self):
        with pytest.raises(ValueError):
            kill_matrix_from_samples(R, self.mutations, [], self.healthy, self.mutated)


class TestPipeline:
    def setup_method(self):
        rng = np.random.default_rng(1)
        self.healthy = {e: RewardSample(rng.normal(400, 10, (6, 4))) for e in ENVS}
        self.spec = default_algo_spec("PG")

    def rewards_killed_on(self, keys):
        def fn(hom):
            return {e: RewardSample(np.full((6, 4), 5.0)) if e.key in keys else self.healthy[e] for e in ENVS}
        return fn

    def test_fewer_than_two(self):
        matrix = matrix_with_counts({"MSU": 2})
        report = hom_pipeline(select_nontrivial_foms(matrix), self.spec, matrix, self.healthy, None)
        assert report.classifications == [] and report.reason

    def test_three_foms_three_homs(self):
        matrix = matrix_with_counts({"MSU": 2, "NDF": 3, "NR": 1})
        calls = []

        def fn(hom):
            calls.append(hom.name)
            return self.rewards_killed_on({ENVS[0].key})(hom)

        report = hom_pipeline(select_nontrivial_foms(matrix), self.spec, matrix, self.healthy, fn)
        assert calls == ["MSU+NDF", "MSU+NR", "NDF+NR"]
        assert {c.type for c in report.classifications} == {HomType.SSC}
        summary = report.summary()
        assert summary == {"hom_count": 3, "ns": 0, "wsc": 0, "wsd": 0, "ssc": 3}

    def test_incompatible_pair_skipped(self):
        matrix = matrix_with_counts({"MSU": 2, "NR": 1})
        qnet = default_algo_spec("QNet")
        report = hom_pipeline(select_nontrivial_foms(matrix), qnet, matrix, self.healthy,
                              self.rewards_killed_on(set()))
        assert report.classifications == []
        assert report.skipped and report.skipped[0][0] == "MSU+NR"

    def test_summary_partition(self):
        matrix = matrix_with_counts({"MSU": 2, "NDF": 1, "MTS": 3})
        report = hom_pipeline(select_nontrivial_foms(matrix), self.spec, matrix, self.healthy,
                              self.rewards_killed_on({ENVS[0].key, ENVS[3].key}))
        s = report.summary()
        killed = sum(1 for c in report.classifications if c.type != HomType.NOT_KILLED)
        assert s["ns"] + s["wsc"] + s["wsd"] + s["ssc"] == killed
