import math

import numpy as np
import pytest

from mutrl.env import CARTPOLE, MINILANDER, SEARCH_LIMITS, default_config, with_params
from mutrl.testgen import (Axis, SearchSpace, TestEnvironmentSet, axis_bisect, generate_bounds_environments,
                           segment_bisect)

E0 = default_config(CARTPOLE)


def threshold_predicate(param, threshold, upward=True):
    def differs(config):
        return config[param] > threshold if upward else config[param] < threshold
    return differs


def ellipse_predicate(e0, space, radius=0.5):
    """Differs outside a normalized ball around ``e0``."""
    def norm(config):
        total = 0.0
        for axis in space.axes:
            delta = config[axis.name] - e0[axis.name]
            span = axis.upper - e0[axis.name] if delta >= 0 else e0[axis.name] - axis.lower
            total += (delta / span) ** 2
        return math.sqrt(total)
    return lambda config: norm(config) > radius


class TestAxisBisect:
    @pytest.mark.parametrize("seed", range(20))
    def test_recovers_threshold(self, seed):
        rng = np.random.default_rng(seed)
        threshold = float(rng.uniform(1.05, 9.9))
        precision = 0.01
        calls = []

        def differs(config):
            calls.append(config)
            return config["cart_mass"] > threshold

        res = axis_bisect(differs, E0, "cart_mass", 10.0, precision)
        found = res.config["cart_mass"]
        assert found <= threshold < res.frontier["cart_mass"]
        assert threshold - found <= precision
        assert res.iterations <= math.ceil(math.log2((10.0 - 1.0) / precision))
        assert len(calls) == res.iterations + 1

    def test_lower_direction(self):
        res = axis_bisect(threshold_predicate("pole_mass", 0.04, upward=False), E0, "pole_mass", 0.01, 1e-4)
        assert 0.04 <= res.config["pole_mass"] <= 0.04 + 1e-4

    def test_limit_not_different(self):
        res = axis_bisect(lambda c: False, E0, "cart_mass", 10.0, 0.01)
        assert res.config["cart_mass"] == 10.0 and res.iterations == 0 and res.frontier is None

    def test_already_at_limit(self):
        e0 = with_params(E0, {"cart_mass": 10.0})
        res = axis_bisect(lambda c: True, e0, "cart_mass", 10.0, 0.01)
        assert res.config == e0

    def test_everything_differs_returns_e0_within_precision(self):
        res = axis_bisect(lambda c: True, E0, "cart_mass", 10.0, 0.01)
        assert res.config == E0


class TestSegmentBisect:
    def test_stays_on_segment(self):
        target = with_params(E0, {"cart_mass": 5.0, "pole_mass": 0.5})
        res = segment_bisect(lambda c: c["cart_mass"] > 3.0, E0, target, {"cart_mass": 1e-3, "pole_mass": 1e-4})
        t = (res.config["cart_mass"] - 1.0) / 4.0
        assert res.config["pole_mass"] == pytest.approx(0.1 + t * 0.4)
        assert res.config["cart_mass"] == pytest.approx(3.0, abs=1e-3)


class TestGenerateBoundsEnvironments:
    def space(self, depth):
        return SearchSpace.default(CARTPOLE, depth)

    def test_depth_cardinality(self):
        for depth, expected in [(0, 4), (1, 8), (2, 16)]:
            space = self.space(depth)
            result = generate_bounds_environments(ellipse_predicate(E0, space), E0, space)
            assert len(result) == expected + 1
            assert result.environments[0] == E0
            assert len(set(result.environments)) == len(result)

    def test_axis_points_within_precision(self):
        space = self.space(0)
        result = generate_bounds_environments(ellipse_predicate(E0, space), E0, space)
        by_side = {(p["param"], p["side"]): e for e, p in zip(result.environments, result.provenance)
                   if p["source"] == "axis"}
        cart_up = by_side[("cart_mass", "upper")]["cart_mass"]
        assert cart_up == pytest.approx(1.0 + 0.5 * 9.0, abs=space.axis("cart_mass").precision)

    def test_nothing_differs_gives_corners_and_axes(self):
        space = self.space(1)
        result = generate_bounds_environments(lambda c: False, E0, space)
        assert len(result) == 9
        for env in result:
            for axis in space.axes:
                assert axis.lower <= env[axis.name] <= axis.upper

    def test_everything_differs_collapses_to_e0(self):
        space = self.space(2)
        result = generate_bounds_environments(lambda c: True, E0, space)
        assert result.environments == [E0]

    def test_bounded_cardinality(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            r = float(rng.uniform(0.1, 1.2))
            for depth in range(3):
                space = self.space(depth)
                result = generate_bounds_environments(ellipse_predicate(E0, space, r), E0, space)
                assert len(result) <= 4 * 2 ** depth + 1

    def test_e0_at_limit_deduplicated(self):
        e0 = with_params(E0, {"cart_mass": 10.0})
        space = self.space(0)
        result = generate_bounds_environments(lambda c: False, e0, space)
        assert result.environments.count(e0) == 1
        assert len(result) == 4

    def test_minilander_axes(self):
        e0 = default_config(MINILANDER)
        space = SearchSpace.default(MINILANDER, 1)
        assert {a.name for a in space.axes} == set(SEARCH_LIMITS[MINILANDER])
        result = generate_bounds_environments(ellipse_predicate(e0, space), e0, space)
        assert len(result) == 9

    def test_json_round_trip(self):
        space = self.space(1)
        result = generate_bounds_environments(ellipse_predicate(E0, space), E0, space)
        back = TestEnvironmentSet.from_json(result.to_json())
        assert back.environments == result.environments and back.initial == E0

    def test_requires_two_axes(self):
        space = SearchSpace((Axis("cart_mass", 0.1, 10.0, 0.1),))
        with pytest.raises(ValueError):
            generate_bounds_environments(lambda c: False, E0, space)


class TestSearchSpace:
    def test_axis_validation(self):
        with pytest.raises(ValueError):
            Axis("cart_mass", 2.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            Axis("cart_mass", 1.0, 2.0, 0.0)

    def test_default_precision(self):
        axis = SearchSpace.default(CARTPOLE).axis("cart_mass")
        assert axis.precision == pytest.approx(0.01 * (axis.upper - axis.lower))
