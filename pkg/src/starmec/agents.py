"""Value-learning agents for the slot controller.

The double estimator picks the next action with the online network and
scores it with the target network; the single estimator takes the target
network's own maximum.  A context-free epsilon-greedy bandit over the same
action catalog serves as the non-sequential baseline.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .network import Adam, QNetwork, ReplayBuffer
from .scenario import RlParams


def select_action(net: QNetwork, state: np.ndarray, eps: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy over the online network; ties go to the lowest index."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("exploration probability must lie in [0, 1]")
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(net.n_actions))
    return int(np.argmax(net.q_values(state)))


def dqn_target(rewards, next_states, target: QNetwork, discount: float) -> np.ndarray:
    """y = r + xi * max_a Q_target(s', a)."""
    q_next = target.forward(next_states)
    return np.asarray(rewards, dtype=float) + discount * q_next.max(axis=1)


def ddqn_target(rewards, next_states, online: QNetwork, target: QNetwork,
                discount: float) -> np.ndarray:
    """y = r + xi * Q_target(s', argmax_a Q_online(s', a))."""
    pick = np.argmax(online.forward(next_states), axis=1)
    q_next = target.forward(next_states)
    n = q_next.shape[0]
    return np.asarray(rewards, dtype=float) + discount * q_next[np.arange(n), pick]


def train_step(online: QNetwork, target: QNetwork, optimizer: Adam,
               buffer: ReplayBuffer, batch: int, discount: float,
               rng: np.random.Generator, double: bool = True) -> float:
    """One uniform-batch fitted update; returns the batch loss."""
    states, actions, rewards, next_states = buffer.sample(batch, rng)
    if double:
        y = ddqn_target(rewards, next_states, online, target, discount)
    else:
        y = dqn_target(rewards, next_states, target, discount)
    loss, grads = online.loss_and_grads(states, actions, y)
    optimizer.step(online.params, grads)
    return loss


class DeepAgent:
    """DDQN (``double=True``) or DQN agent with replay and a periodic target."""

    def __init__(self, state_dim: int, n_actions: int, params: RlParams,
                 rng: np.random.Generator, double: bool = True):
        self.params = params
        self.double = double
        self.online = QNetwork(state_dim, n_actions, hidden=params.hidden_width,
                               blocks=params.num_blocks, rng=rng)
        self.target = self.online.clone()
        self.optimizer = Adam(self.online.params, lr=params.learning_rate)
        self.buffer = ReplayBuffer(params.replay_capacity, state_dim)
        self.eps = params.eps_init
        self.steps = 0
        self.episode = 0

    @property
    def kind(self) -> str:
        return "ddqn" if self.double else "dqn"

    def begin_episode(self) -> None:
        if self.episode > 0:
            self.eps = max(self.params.eps_min, self.eps * self.params.eps_decay)
        self.episode += 1

    def act(self, state: np.ndarray, rng: np.random.Generator,
            greedy: bool = False) -> int:
        return select_action(self.online, state, 0.0 if greedy else self.eps, rng)

    def observe(self, state, action, reward, next_state,
                rng: np.random.Generator) -> float | None:
        """Store the transition, learn when possible, sync on schedule."""
        self.buffer.add(state, action, reward, next_state)
        self.steps += 1
        loss = None
        if len(self.buffer) >= self.params.batch_size:
            loss = train_step(self.online, self.target, self.optimizer,
                              self.buffer, self.params.batch_size,
                              self.params.discount, rng, double=self.double)
        if self.steps % self.params.target_sync_period == 0:
            self.target.set_params(self.online.params)
        return loss

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {"eps": self.eps, "episode": self.episode,
                   "steps": self.steps, "double": int(self.double)}
        for i, arr in enumerate(self.online.params):
            payload[f"online_{i}"] = arr
        for i, arr in enumerate(self.target.params):
            payload[f"target_{i}"] = arr
        np.savez(path, **payload)

    def load(self, path: str | Path) -> None:
        data = np.load(path)
        n = len(self.online.params)
        self.online.set_params([data[f"online_{i}"] for i in range(n)])
        self.target.set_params([data[f"target_{i}"] for i in range(n)])
        self.eps = float(data["eps"])
        self.episode = int(data["episode"])
        self.steps = int(data["steps"])


def mab_select(counts: np.ndarray, sums: np.ndarray, eps: float,
               rng: np.random.Generator) -> int:
    """Epsilon-greedy arm choice; unpulled arms are optimistically infinite."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("exploration probability must lie in [0, 1]")
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(len(counts)))
    with np.errstate(divide="ignore", invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)
    return int(np.argmax(means))


class MabAgent:
    """Context-free bandit over the same discrete action catalog."""

    def __init__(self, n_actions: int, params: RlParams):
        self.params = params
        self.counts = np.zeros(n_actions)
        self.sums = np.zeros(n_actions)
        self.eps = params.eps_init
        self.episode = 0

    kind = "mab"

    def begin_episode(self) -> None:
        if self.episode > 0:
            self.eps = max(self.params.eps_min, self.eps * self.params.eps_decay)
        self.episode += 1

    def act(self, state, rng: np.random.Generator, greedy: bool = False) -> int:
        return mab_select(self.counts, self.sums, 0.0 if greedy else self.eps, rng)

    def observe(self, state, action, reward, next_state, rng) -> None:
        self.counts[action] += 1
        self.sums[action] += reward

    def save(self, path: str | Path) -> None:
        np.savez(path, counts=self.counts, sums=self.sums, eps=self.eps,
                 episode=self.episode)

    def load(self, path: str | Path) -> None:
        data = np.load(path)
        self.counts = data["counts"]
        self.sums = data["sums"]
        self.eps = float(data["eps"])
        self.episode = int(data["episode"])


def make_agent(kind: str, state_dim: int, n_actions: int, params: RlParams,
               rng: np.random.Generator):
    if kind == "ddqn":
        return DeepAgent(state_dim, n_actions, params, rng, double=True)
    if kind == "dqn":
        return DeepAgent(state_dim, n_actions, params, rng, double=False)
    if kind == "mab":
        return MabAgent(n_actions, params)
    raise ValueError(f"unknown agent kind '{kind}'")
