from __future__ import annotations

from dataclasses import dataclass, replace

from mutrl.agents.nn import ACTIVATIONS, LOSSES, OPTIMIZERS
from mutrl.env import CARTPOLE, MINILANDER
from mutrl.errors import ConfigurationError

QNET = "QNet"
PG = "PG"
ALGO_IDS = (QNET, PG)

DEFAULT_BUDGET = {
    QNET: {CARTPOLE: 60_000, MINILANDER: 120_000},
    PG: {CARTPOLE: 100_000, MINILANDER: 120_000},
}


@dataclass(frozen=True)
class AlgoSpec:
    """Hyperparameters of one learner.

    The fault switches at the bottom are only ever turned on by agent-level
    mutations; a healthy spec leaves them off.  QNet keeps the weights that
    scored best at a greedy checkpoint when ``checkpoint_interval`` is set.
    """

    algo_id: str
    gamma: float = 0.99
    learning_rate: float = 1e-3
    hidden_layers: tuple = (32, 32)
    activation: str = "Tanh"
    optimizer: str = "Adam"
    loss: str = "MSE"
    training_budget: int = 60_000
    max_grad_norm: float = 10.0
    # QNet
    replay_capacity: int = 50_000
    batch_size: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.2
    target_sync_interval: int = 500
    learning_starts: int = 1_000
    train_freq: int = 1
    checkpoint_interval: int = 0  # steps between greedy checkpoint evaluations; 0 keeps the final weights
    checkpoint_episodes: int = 5
    # PG
    episodes_per_update: int = 4
    baseline: bool = True
    # fault switches
    reverse_rewards: bool = False
    stale_state: bool = False
    drop_terminal: bool = False

    def __post_init__(self):
        if self.algo_id not in ALGO_IDS:
            raise ConfigurationError(f"unknown algo_id {self.algo_id!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.training_budget <= 0:
            raise ConfigurationError("training_budget must be positive")
        if self.checkpoint_interval < 0 or self.checkpoint_episodes < 1:
            raise ConfigurationError("checkpoint_interval must be >= 0 and checkpoint_episodes >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))

    def replace(self, **changes) -> "AlgoSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def default_algo_spec(algo_id: str, env_id: str = CARTPOLE) -> AlgoSpec:
    """Default hyperparameters for ``algo_id`` trained on ``env_id``."""
    budget = DEFAULT_BUDGET[algo_id][env_id]
    if algo_id == QNET:
        return AlgoSpec(QNET, activation="ReLU", loss="Huber", training_budget=budget,
                        train_freq=2, checkpoint_interval=2_000, checkpoint_episodes=3)
    return AlgoSpec(PG, activation="Tanh", loss="MSE", training_budget=budget)
