"""Training and greedy evaluation of QNet and PG agents.

``train`` is a pure function of (spec, environment, mutation, seed): every
stochastic choice draws from a generator derived from the seed and a fixed
role, so the same arguments always give bit-identical weights.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from mutrl import env as envs
from mutrl.agents.nn import MLP, apply_gradient, make_optimizer, network_update
from mutrl.agents.spec import PG, QNET, AlgoSpec
from mutrl.env import EnvironmentConfig
from mutrl.errors import ConfigurationError
from mutrl.mutation import EnvInterceptor, MutationSpec, apply_to_spec

FORMAT_VERSION = 1

# RNG roles
_INIT, _ACT, _REPLAY, _EPISODES, _MUTATION, _PROBE, _CHECKPOINT = range(7)


def _rng(seed: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(role,)))


def compute_returns(rewards, gamma: float, reversed: bool = False) -> list:
    """Discounted returns ``R_t = r_t + gamma * R_{t+1}`` for one segment.

    With ``reversed=True`` the reward list is flipped before the backward
    pass while the results stay attached to the original time indices.
    """
    rewards = list(rewards)
    if not rewards:
        raise ValueError("rewards must be non-empty")
    if reversed:
        rewards = rewards[::-1]
    out = [0.0] * len(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


@dataclass(frozen=True, eq=False)
class TrainedPolicy:
    """Immutable weights of the acting network plus where they came from."""

    algo_id: str
    sizes: tuple
    activation: str
    weights: tuple
    seed: int
    env: EnvironmentConfig
    mutation: str = "healthy"
    obs_scale: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        for w in self.weights:
            w.setflags(write=False)
            if not np.all(np.isfinite(w)):
                raise ConfigurationError("policy weights must be finite")

    @property
    def provenance_hash(self) -> str:
        blob = json.dumps({"env": self.env.to_dict(), "mutation": self.mutation, "seed": self.seed},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def network(self) -> MLP:
        return MLP(self.sizes, self.activation, params=self.weights)

    def same_weights(self, other: "TrainedPolicy") -> bool:
        return len(self.weights) == len(other.weights) and all(
            a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in zip(self.weights, other.weights)
        )


def save_policy(policy: TrainedPolicy, path) -> None:
    """Write ``policy`` as an ``.npz`` file with a JSON header, atomically."""
    header = {
        "format_version": FORMAT_VERSION,
        "algo_id": policy.algo_id,
        "sizes": list(policy.sizes),
        "layer_shapes": [list(w.shape) for w in policy.weights],
        "activation": policy.activation,
        "seed": policy.seed,
        "env": policy.env.to_dict(),
        "mutation": policy.mutation,
        "obs_scale": list(policy.obs_scale),
        "provenance_hash": policy.provenance_hash,
        "info": policy.info,
    }
    buf = io.BytesIO()
    arrays = {f"w{i}": w for i, w in enumerate(policy.weights)}
    np.savez(buf, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_policy(path) -> TrainedPolicy:
    with np.load(os.fspath(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported policy format {header.get('format_version')!r}")
        weights = tuple(np.array(data[f"w{i}"]) for i in range(len(header["layer_shapes"])))
    for w, shape in zip(weights, header["layer_shapes"]):
        if list(w.shape) != shape:
            raise ConfigurationError("layer shape mismatch in policy file")
    return TrainedPolicy(
        header["algo_id"],
        tuple(header["sizes"]),
        header["activation"],
        weights,
        header["seed"],
        EnvironmentConfig.from_dict(header["env"]),
        header["mutation"],
        tuple(header["obs_scale"]),
        header.get("info", {}),
    )


def train(spec: AlgoSpec, env: EnvironmentConfig, mutation: Optional[MutationSpec], seed: int) -> TrainedPolicy:
    """Train one agent; ``mutation`` hooks are wired in before the first step."""
    if spec.loss == "NegatedTD":
        raise ConfigurationError("NegatedTD is only reachable through the ILF mutation")
    mutated_spec = apply_to_spec(mutation, spec)
    interceptor = EnvInterceptor(
        mutation.environment_operators() if mutation is not None else (), _rng(seed, _MUTATION)
    )
    if spec.algo_id == QNET:
        # checkpoint episodes perceive the world through the same faults as training
        probe = EnvInterceptor(
            mutation.environment_operators() if mutation is not None else (), _rng(seed, _PROBE)
        )
        net, info = _train_qnet(mutated_spec, env, interceptor, seed, probe)
    else:
        net, info = _train_pg(mutated_spec, env, interceptor, seed)
    info["noop_steps"] = interceptor.noop_steps
    return TrainedPolicy(
        spec.algo_id,
        net.sizes,
        net.activation,
        tuple(p.copy() for p in net.params),
        int(seed),
        env,
        mutation.name if mutation is not None else "healthy",
        envs.OBS_SCALE[env.env_id],
        info,
    )


def _checkpoint_score(q: MLP, env: EnvironmentConfig, probe, rng, n_episodes: int, scale) -> float:
    """Mean perceived greedy return of ``q`` over ``n_episodes`` fresh episodes."""
    total = 0.0
    for _ in range(n_episodes):
        state = envs.reset(env, int(rng.integers(2**31)))
        perceived = state
        for t in range(env.episode_cap):
            action = int(np.argmax(q.predict(np.asarray(perceived) * scale)))
            obs = envs.step(env, state, action, t)
            seen = probe(obs) if probe else obs
            total += seen.r_t
            if obs.terminal:
                break
            state = obs.s_next
            perceived = seen.s_next
    return total / n_episodes


def _train_qnet(spec: AlgoSpec, env: EnvironmentConfig, interceptor, seed, probe=None):
    dim = envs.STATE_DIM[env.env_id]
    n_actions = envs.N_ACTIONS[env.env_id]
    scale = np.asarray(envs.OBS_SCALE[env.env_id])
    q = MLP((dim, *spec.hidden_layers, n_actions), spec.activation, rng=_rng(seed, _INIT))
    target = q.copy()
    opt = make_optimizer(spec.optimizer, spec.learning_rate)
    act_rng = _rng(seed, _ACT)
    replay_rng = _rng(seed, _REPLAY)
    episode_rng = _rng(seed, _EPISODES)
    checkpoint_rng = _rng(seed, _CHECKPOINT)

    cap = min(spec.replay_capacity, spec.training_budget)
    S = np.zeros((cap, dim))
    A = np.zeros(cap, dtype=np.int64)
    R = np.zeros(cap)
    S2 = np.zeros((cap, dim))
    D = np.zeros(cap)
    size = 0
    ptr = 0

    explore_steps = max(1, int(spec.epsilon_fraction * spec.training_budget))
    state = envs.reset(env, int(episode_rng.integers(2**31)))
    perceived = state
    first_state = state
    ep_step = 0
    episodes = 0
    best, best_score = None, -np.inf
    for t in range(spec.training_budget):
        frac = min(1.0, t / explore_steps)
        eps = spec.epsilon_start + frac * (spec.epsilon_end - spec.epsilon_start)
        if act_rng.random() < eps:
            action = int(act_rng.integers(n_actions))
        else:
            action = int(np.argmax(q.predict(np.asarray(perceived) * scale)))
        obs = envs.step(env, state, action, ep_step)
        seen = interceptor(obs) if interceptor else obs
        S[ptr] = first_state if spec.stale_state else seen.s_t
        A[ptr] = seen.a_t
        R[ptr] = seen.r_t
        S2[ptr] = seen.s_next
        # hitting the episode cap is a time limit, not a terminal state
        truncated = obs.terminal and ep_step + 1 >= env.episode_cap
        D[ptr] = 0.0 if spec.drop_terminal or truncated else float(seen.terminal)
        ptr = (ptr + 1) % cap
        size = min(size + 1, cap)

        ep_step += 1
        if obs.terminal:
            episodes += 1
            state = envs.reset(env, int(episode_rng.integers(2**31)))
            perceived = state
            first_state = state
            ep_step = 0
        else:
            state = obs.s_next
            perceived = seen.s_next

        if t >= spec.learning_starts and t % spec.train_freq == 0:
            idx = replay_rng.integers(size, size=spec.batch_size)
            s2 = S2[idx] * scale
            next_q = target.predict(s2).max(axis=1)
            y = R[idx] + spec.gamma * (1.0 - D[idx]) * next_q
            network_update(q, opt, S[idx] * scale, y, spec.loss, actions=A[idx],
                           max_grad_norm=spec.max_grad_norm)
        if (t + 1) % spec.target_sync_interval == 0:
            target.load(q)
        if spec.checkpoint_interval and t >= spec.learning_starts and (
                (t + 1) % spec.checkpoint_interval == 0 or t + 1 == spec.training_budget):
            score = _checkpoint_score(q, env, probe, checkpoint_rng, spec.checkpoint_episodes, scale)
            if score > best_score:
                best, best_score = q.flat.copy(), score
    info = {"episodes": episodes}
    if best is not None:
        q.flat[...] = best
        info["checkpoint_return"] = best_score
    return q, info


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _train_pg(spec: AlgoSpec, env: EnvironmentConfig, interceptor, seed):
    dim = envs.STATE_DIM[env.env_id]
    n_actions = envs.N_ACTIONS[env.env_id]
    scale = np.asarray(envs.OBS_SCALE[env.env_id])
    init_rng = _rng(seed, _INIT)
    policy = MLP((dim, *spec.hidden_layers, n_actions), spec.activation, rng=init_rng)
    value = MLP((dim, *spec.hidden_layers, 1), spec.activation, rng=init_rng)
    opt_pi = make_optimizer(spec.optimizer, spec.learning_rate)
    opt_v = make_optimizer(spec.optimizer, spec.learning_rate)
    act_rng = _rng(seed, _ACT)
    episode_rng = _rng(seed, _EPISODES)
    # ILF negates the whole policy-gradient objective, not only the baseline fit
    sign = -1.0 if spec.loss == "NegatedTD" else 1.0

    steps = 0
    episodes = 0
    updates = 0
    while steps < spec.training_budget:
        states, actions, rewards, ends = [], [], [], []
        for _ in range(spec.episodes_per_update):
            if steps >= spec.training_budget:
                break
            state = envs.reset(env, int(episode_rng.integers(2**31)))
            perceived = state
            first_state = state
            for ep_step in range(env.episode_cap):
                probs = _softmax(policy.predict(np.asarray(perceived) * scale))
                action = int(np.searchsorted(np.cumsum(probs), act_rng.random() * probs.sum()))
                action = min(action, n_actions - 1)
                obs = envs.step(env, state, action, ep_step)
                seen = interceptor(obs) if interceptor else obs
                states.append(first_state if spec.stale_state else seen.s_t)
                actions.append(seen.a_t)
                rewards.append(seen.r_t)
                steps += 1
                last = obs.terminal or steps >= spec.training_budget
                ends.append(seen.terminal and not spec.drop_terminal)
                if last:
                    break
                state = obs.s_next
                perceived = seen.s_next
            episodes += 1
        if not rewards:
            break
        ends[-1] = True  # the batch always closes the last segment
        returns = np.empty(len(rewards))
        start = 0
        for i, end in enumerate(ends):
            if end:
                returns[start:i + 1] = compute_returns(rewards[start:i + 1], spec.gamma, spec.reverse_rewards)
                start = i + 1
        X = np.asarray(states) * scale
        acts = np.asarray(actions)
        if spec.baseline:
            v_pred = value.predict(X)[:, 0]
            adv = returns - v_pred
        else:
            adv = returns.copy()
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        logits, cache = policy.forward(X)
        probs = _softmax(logits)
        dlogits = probs
        dlogits[np.arange(len(acts)), acts] -= 1.0
        dlogits *= sign * adv[:, None] / len(acts)
        apply_gradient(policy, opt_pi, X, dlogits, cache=cache, max_grad_norm=spec.max_grad_norm)
        if spec.baseline:
            network_update(value, opt_v, X, returns, spec.loss, max_grad_norm=spec.max_grad_norm)
        updates += 1
    return policy, {"episodes": episodes, "updates": updates}


def evaluate(policy: TrainedPolicy, env: EnvironmentConfig, n_episodes: int, seed: int) -> list:
    """Greedy returns of ``policy`` over ``n_episodes`` episodes of ``env``."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    dim = envs.STATE_DIM[env.env_id]
    if policy.sizes[0] != dim or policy.sizes[-1] != envs.N_ACTIONS[env.env_id]:
        raise ValueError(f"policy with sizes {policy.sizes} does not fit {env.env_id}")
    net = policy.network()
    scale = np.asarray(policy.obs_scale)
    rng = np.random.default_rng(int(seed))
    returns = []
    for episode_seed in rng.integers(2**31, size=n_episodes):
        state = envs.reset(env, int(episode_seed))
        total = 0.0
        for t in range(env.episode_cap):
            action = int(np.argmax(net.predict(np.asarray(state) * scale)))
            obs = envs.step(env, state, action, t)
            total += obs.r_t
            if obs.terminal:
                break
            state = obs.s_next
        returns.append(total)
    return returns
