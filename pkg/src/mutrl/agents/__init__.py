"""Learners: a from-scratch MLP, a replay-based Q-network and a policy gradient.

The training entry points live in :mod:`mutrl.agents.learners`.
"""

from mutrl.agents.nn import MLP, network_update
from mutrl.agents.spec import PG, QNET, AlgoSpec, default_algo_spec

__all__ = ["MLP", "network_update", "AlgoSpec", "default_algo_spec", "QNET", "PG"]
