"""Minimal feedforward machinery for the value networks.

The network is a dense input layer followed by residual blocks of two dense
layers with a swish gate, then a linear head over the action set.  All
passes are plain numpy with hand-written backprop; ``hidden=0`` degenerates
to a single linear map, which is enough to represent a tabular value
function exactly.
"""

from __future__ import annotations

import numpy as np


def swish(z: np.ndarray) -> np.ndarray:
    return z / (1.0 + np.exp(-z))


def swish_grad(z: np.ndarray) -> np.ndarray:
    sig = 1.0 / (1.0 + np.exp(-z))
    return sig * (1.0 + z * (1.0 - sig))


class QNetwork:
    """Action-value network with an online parameter set."""

    def __init__(self, state_dim: int, n_actions: int, hidden: int = 128,
                 blocks: int = 2, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.hidden = hidden
        self.blocks = blocks if hidden > 0 else 0
        self.params: list[np.ndarray] = []
        if hidden > 0:
            self._add(rng, state_dim, hidden)
            for _ in range(self.blocks):
                self._add(rng, hidden, hidden)
                self._add(rng, hidden, hidden, scale=0.1)
            self._add(rng, hidden, n_actions)
        else:
            self._add(rng, state_dim, n_actions)

    def _add(self, rng, fan_in, fan_out, scale=1.0):
        w = rng.standard_normal((fan_in, fan_out)) * scale * np.sqrt(2.0 / fan_in)
        self.params.append(w)
        self.params.append(np.zeros(fan_out))

    # -- forward ------------------------------------------------------------

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = self.params
        if self.hidden == 0:
            if cache is not None:
                cache.append(x)
            return x @ p[0] + p[1]
        z0 = x @ p[0] + p[1]
        h = swish(z0)
        if cache is not None:
            cache.append((x, z0))
        idx = 2
        for _ in range(self.blocks):
            za = h @ p[idx] + p[idx + 1]
            u = swish(za)
            if cache is not None:
                cache.append((h, za, u))
            h = h + u @ p[idx + 2] + p[idx + 3]
            idx += 4
        if cache is not None:
            cache.append(h)
        return h @ p[idx] + p[idx + 1]

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return self.forward(state)[0]

    # -- backward -----------------------------------------------------------

    def loss_and_grads(self, states, actions, targets):
        """Mean squared error on the chosen actions' values, with gradients."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.asarray(actions, dtype=int)
        targets = np.asarray(targets, dtype=float)
        n = states.shape[0]
        cache: list = []
        q = self.forward(states, cache)
        pred = q[np.arange(n), actions]
        err = pred - targets
        loss = float(np.mean(err ** 2))
        dq = np.zeros_like(q)
        dq[np.arange(n), actions] = 2.0 * err / n
        return loss, self._backward(dq, cache)

    def _backward(self, dq: np.ndarray, cache: list) -> list[np.ndarray]:
        p = self.params
        grads = [np.zeros_like(arr) for arr in p]
        if self.hidden == 0:
            x = cache[0]
            grads[0] = x.T @ dq
            grads[1] = dq.sum(axis=0)
            return grads
        # head
        idx = 2 + 4 * self.blocks
        h_last = cache[-1]
        grads[idx] = h_last.T @ dq
        grads[idx + 1] = dq.sum(axis=0)
        dh = dq @ p[idx].T
        # blocks, reversed
        for blk in range(self.blocks - 1, -1, -1):
            h_in, za, u = cache[1 + blk]
            base = 2 + 4 * blk
            grads[base + 2] = u.T @ dh
            grads[base + 3] = dh.sum(axis=0)
            du = dh @ p[base + 2].T
            dza = du * swish_grad(za)
            grads[base] = h_in.T @ dza
            grads[base + 1] = dza.sum(axis=0)
            dh = dh + dza @ p[base].T
        x, z0 = cache[0]
        dz0 = dh * swish_grad(z0)
        grads[0] = x.T @ dz0
        grads[1] = dz0.sum(axis=0)
        return grads

    # -- parameter plumbing ---------------------------------------------------

    def get_params(self) -> list[np.ndarray]:
        return [arr.copy() for arr in self.params]

    def set_params(self, params: list[np.ndarray]) -> None:
        if len(params) != len(self.params):
            raise ValueError("parameter-list length mismatch")
        self.params = [np.array(arr, dtype=float, copy=True) for arr in params]

    def clone(self) -> "QNetwork":
        twin = QNetwork.__new__(QNetwork)
        twin.state_dim = self.state_dim
        twin.n_actions = self.n_actions
        twin.hidden = self.hidden
        twin.blocks = self.blocks
        twin.params = self.get_params()
        return twin


class Adam:
    """Standard first-order moment-corrected update."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(arr) for arr in params]
        self.v = [np.zeros_like(arr) for arr in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        lr_t = self.lr * np.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        for m, v, p, g in zip(self.m, self.v, params, grads):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            denom = np.sqrt(v)
            denom += self.eps
            denom = np.divide(m, denom, out=denom)
            denom *= lr_t
            p -= denom


class ReplayBuffer:
    """Fixed-capacity ring of (s, a, r, s') with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.idx = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, action, reward, next_state) -> None:
        i = self.idx
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        if self.size < batch:
            raise ValueError("not enough stored transitions to sample a batch")
        idx = rng.integers(0, self.size, size=batch)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx])
