import math

import numpy as np
import pytest

from mutrl import env as envs
from mutrl.env import (CARTPOLE, MINILANDER, EnvironmentConfig, Observation, default_config, reset, run_episode,
                       step, with_params)
from mutrl.errors import ConfigurationError

CP = default_config(CARTPOLE)
ML = default_config(MINILANDER)


class TestConfig:
    def test_equality_and_hash(self):
        a = EnvironmentConfig(CARTPOLE, {"cart_mass": 2.0})
        b = with_params(CP, {"cart_mass": 2.0})
        assert a == b and hash(a) == hash(b)
        assert len({a, b, CP}) == 2

    def test_with_params_leaves_original(self):
        c = with_params(CP, {"cart_mass": 2.0})
        assert c["cart_mass"] == 2.0 and c["pole_mass"] == CP["pole_mass"]
        assert CP["cart_mass"] == 1.0

    def test_unknown_parameter(self):
        with pytest.raises(ValueError):
            with_params(CP, {"gravity": 3.0})

    @pytest.mark.parametrize("params", [{"cart_mass": 0.0}, {"cart_mass": -1.0}, {"pole_mass": float("nan")},
                                        {"cart_mass": 1e6}])
    def test_invalid_values(self, params):
        with pytest.raises(ConfigurationError):
            EnvironmentConfig(CARTPOLE, params)

    def test_round_trip(self):
        c = with_params(ML, {"gravity": 3.5})
        assert EnvironmentConfig.from_dict(c.to_dict()) == c
        assert "gravity=3.5" in c.key

    def test_search_limits_inside_hard_limits(self):
        for env_id, limits in envs.SEARCH_LIMITS.items():
            for name, (lo, hi) in limits.items():
                hard_lo, hard_hi = envs.PARAM_LIMITS[env_id][name]
                assert hard_lo <= lo < envs.DEFAULT_PARAMS[env_id][name] < hi <= hard_hi


class TestReset:
    def test_deterministic(self):
        assert reset(CP, 7) == reset(CP, 7)

    def test_cartpole_range(self):
        states = np.array([reset(CP, s) for s in range(1000)])
        assert np.all(np.abs(states) <= 0.05)
        assert states.std() > 0.01

    def test_lander_fixed(self):
        assert reset(ML, 123) == (10.0, 0.0, 1.0)


class TestCartPoleStep:
    def test_euler_step_from_rest(self):
        # hand-derived cart-pole equations, force to the right
        g, l, f, tau, mc, mp = 9.8, 0.5, 10.0, 0.02, 1.0, 0.1
        total = mc + mp
        temp = f / total
        thetaacc = -temp / (l * (4.0 / 3.0 - mp / total))
        xacc = temp - mp * l * thetaacc / total
        obs = step(CP, (0.0, 0.0, 0.0, 0.0), 1, 0)
        assert obs.s_next == pytest.approx((0.0, tau * xacc, 0.0, tau * thetaacc), abs=1e-12)
        assert obs.s_next[1] == pytest.approx(0.195122, abs=1e-6)
        assert obs.s_next[3] == pytest.approx(-0.292683, abs=1e-6)
        assert obs.r_t == 1.0 and not obs.terminal

    def test_pure(self):
        s = (0.01, -0.2, 0.03, 0.1)
        assert step(CP, s, 0, 5) == step(CP, s, 0, 5)

    def test_angle_termination(self):
        s = (0.0, 0.0, math.radians(12.5), 0.0)
        obs = step(CP, s, 0, 0)
        assert obs.terminal and obs.r_t == 1.0

    def test_episode_cap(self):
        assert step(CP, (0.0, 0.0, 0.0, 0.0), 1, CP.episode_cap - 1).terminal
        assert not step(CP, (0.0, 0.0, 0.0, 0.0), 1, CP.episode_cap - 2).terminal

    @pytest.mark.parametrize("action", [-1, 2, 0.5])
    def test_bad_action(self, action):
        with pytest.raises(ValueError):
            step(CP, (0.0, 0.0, 0.0, 0.0), action, 0)

    def test_heavier_cart_accelerates_less(self):
        heavy = with_params(CP, {"cart_mass": 5.0})
        assert step(heavy, (0.0,) * 4, 1, 0).s_next[1] < step(CP, (0.0,) * 4, 1, 0).s_next[1]


class TestLanderStep:
    def test_soft_landing(self):
        obs = step(ML, (0.0, 0.0, 0.5), 0, 3)
        assert obs.terminal
        assert obs.r_t == pytest.approx(100.0 - 0.1)

    def test_landing_at_half_speed(self):
        obs = step(ML, (0.0, -0.5, 0.2), 1, 3)
        assert obs.terminal
        assert obs.r_t == pytest.approx(100.0 - 50.0 * 0.5 - 0.1)

    def test_crash(self):
        obs = step(ML, (0.1, -3.0, 0.0), 0, 0)
        assert obs.terminal and obs.r_t == pytest.approx(-100.1)

    def test_thrust_burns_fuel(self):
        obs = step(ML, (10.0, 0.0, 1.0), 1, 0)
        assert obs.s_next[2] == pytest.approx(0.99)
        assert obs.s_next[1] == pytest.approx(0.1 * (15.0 - 9.8))

    def test_no_fuel_no_thrust(self):
        assert step(ML, (10.0, 0.0, 0.0), 1, 0).s_next == step(ML, (10.0, 0.0, 0.0), 0, 0).s_next


class TestEpisode:
    def test_trace_invariants(self):
        trace = run_episode(CP, lambda s: 0 if s[2] < 0 else 1, seed=3)
        flags = [o.terminal for o in trace.observations]
        assert flags[-1] and not any(flags[:-1])
        assert trace.return_undiscounted == pytest.approx(sum(o.r_t for o in trace.observations))
        for a, b in zip(trace.observations, trace.observations[1:]):
            assert a.s_next == b.s_t

    def test_replayed_actions(self):
        trace = run_episode(ML, None, seed=0, actions=[0] * 5)
        assert len(trace) == 5 and all(isinstance(o, Observation) for o in trace.observations)

    def test_free_fall_lands(self):
        trace = run_episode(ML, lambda s: 0, seed=0)
        assert trace.observations[-1].terminal
        assert len(trace) < ML.episode_cap
