"""Single-view fast-forwarding agent: rewards, Q-network, Q-learning and greedy skipping."""

from __future__ import annotations

import enum
import math
import struct
import warnings
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .features import ViewStream


class Strategy(enum.IntEnum):
    SLOW = 0
    NORMAL = 1
    FAST = 2

    @property
    def action_space(self) -> int:
        return _ACTION_SPACE[self]

    @classmethod
    def parse(cls, name) -> "Strategy":
        if isinstance(name, Strategy):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown strategy {name!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


_ACTION_SPACE = {Strategy.SLOW: 15, Strategy.NORMAL: 25, Strategy.FAST: 35}

CONTROLLER_KIND = 3


@dataclass(frozen=True)
class RewardParams:
    beta: float = 0.8
    hit_window: int = 4
    hit_sigma: float = 1.0
    gamma: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.hit_window < 1:
            raise ValueError("hit_window must be >= 1")
        if not self.hit_sigma > 0:
            raise ValueError("hit_sigma must be > 0")


def skip_penalty(labels_in_interval, beta: float, t_skip: int) -> float:
    labels = np.asarray(labels_in_interval)
    if labels.size == 0:
        raise ValueError("skip interval is empty")
    if labels.size > t_skip:
        raise ValueError(f"interval of {labels.size} frames exceeds T_skip={t_skip}")
    important = int(np.count_nonzero(labels == 1))
    unimportant = labels.size - important
    return important / t_skip - beta * unimportant / t_skip


def hit_reward(z: int, labels, w: int = 4, sigma: float = 1.0) -> float:
    labels = np.asarray(labels)
    if not 0 <= z < labels.size:
        raise IndexError(f"landing index {z} outside stream of {labels.size}")
    lo, hi = max(0, z - w), min(labels.size, z + w + 1)
    idx = np.arange(lo, hi)[labels[lo:hi] == 1]
    return float(np.exp(-((z - idx) ** 2) / (2.0 * sigma * sigma)).sum())


def sigmoid(a: float) -> float:
    return 1.0 / (1.0 + math.exp(-a))


def immediate_reward(strategy: Strategy, skip_pen: float, hit_rew: float, action: int) -> float:
    strategy = Strategy.parse(strategy)
    if not 1 <= action <= strategy.action_space:
        raise ValueError(f"action {action} outside [1, {strategy.action_space}]")
    base = -skip_pen + hit_rew
    if strategy is Strategy.SLOW:
        return base * (1.0 - sigmoid(action) / 2.0)
    if strategy is Strategy.FAST:
        return base * (1.0 + sigmoid(action) / 2.0)
    return base


def step_reward(labels, k: int, action: int, strategy: Strategy, params: RewardParams) -> float:
    """Reward for skipping ``action`` frames from processed frame ``k`` (caller ensures k+action+1 < L)."""
    t_skip = strategy.action_space
    sp = skip_penalty(labels[k + 1 : k + action + 1], params.beta, t_skip)
    hr = hit_reward(k + action + 1, labels, params.hit_window, params.hit_sigma)
    return immediate_reward(strategy, sp, hr, action)


# --------------------------------------------------------------------------- network


@dataclass(eq=False)
class QPolicy:
    """Fully connected Q-approximator: ReLU hidden layers, linear output (one value per action)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    kind: int = int(Strategy.NORMAL)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight (in, out) and bias (out,) shapes disagree")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input width does not chain")
        if self.kind != CONTROLLER_KIND and self.n_actions != Strategy(self.kind).action_space:
            raise ValueError("output width does not match the strategy's action space")

    @property
    def strategy(self) -> Strategy:
        return Strategy(self.kind)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_actions(self) -> int:
        return self.weights[-1].shape[1]

    @classmethod
    def init(cls, sizes: Sequence[int], kind: int, rng: np.random.Generator) -> "QPolicy":
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, kind)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def copy(self) -> "QPolicy":
        return QPolicy([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.kind)

    def as_float32(self) -> "QPolicy":
        return QPolicy([w.astype(np.float32) for w in self.weights],
                       [b.astype(np.float32) for b in self.biases], self.kind)

    def params_equal(self, other: "QPolicy") -> bool:
        return self.kind == other.kind and all(
            np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


def q_values(policy: QPolicy, feature) -> np.ndarray:
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != (policy.in_dim,):
        raise ValueError(f"feature has shape {x.shape}, policy expects ({policy.in_dim},)")
    return policy.forward(x)


def greedy_action(q: np.ndarray) -> int:
    """1-based action; argmax takes the first (smallest) index on ties."""
    return int(np.argmax(q)) + 1


# --------------------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"FFWQ"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps_policy(policy: QPolicy) -> bytes:
    out = [CKPT_MAGIC, struct.pack("<HBB", CKPT_VERSION, policy.kind, len(policy.weights))]
    for w, b in zip(policy.weights, policy.biases):
        rows, cols = w.shape
        out.append(struct.pack("<II", rows, cols))
        out.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(out)


def loads_policy(data: bytes) -> QPolicy:
    if data[:4] != CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {bytes(data[:4])!r}")
    if len(data) < 8:
        raise CheckpointError("checkpoint header truncated")
    version, kind, n_layers = struct.unpack_from("<HBB", data, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"checkpoint version {version}, expected {CKPT_VERSION}")
    pos = 8
    weights, biases = [], []
    for _ in range(n_layers):
        if pos + 8 > len(data):
            raise CheckpointError("checkpoint truncated in layer header")
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        need = 4 * (rows * cols + cols)
        if pos + need > len(data):
            raise CheckpointError("checkpoint truncated in layer data")
        w = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=pos).reshape(rows, cols)
        pos += 4 * rows * cols
        b = np.frombuffer(data, dtype="<f4", count=cols, offset=pos)
        pos += 4 * cols
        weights.append(w.astype(np.float32))
        biases.append(b.astype(np.float32))
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")
    return QPolicy(weights, biases, kind)


def save_policy(policy: QPolicy, path) -> None:
    Path(path).write_bytes(dumps_policy(policy))


def load_policy(path) -> QPolicy:
    return loads_policy(Path(path).read_bytes())


# --------------------------------------------------------------------------- learning


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.params, self.lr, self.b1, self.b2, self.eps = params, lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class QLearner:
    """Online Q-network plus target copy; one ``update`` = one MSE gradient step on a batch."""

    def __init__(self, policy: QPolicy, lr: float = 1e-3, gamma: float = 0.8):
        self.online = policy
        self.target = policy.copy()
        self.gamma = gamma
        self.opt = Adam(self.online.weights + self.online.biases, lr)

    def sync_target(self) -> None:
        self.target = self.online.copy()

    def targets(self, rewards, next_states, dones) -> np.ndarray:
        rewards = np.asarray(rewards, dtype=np.float64)
        if self.gamma == 0.0:
            return rewards
        nxt = self.target.forward(next_states).max(axis=1)
        return rewards + self.gamma * nxt * (1.0 - np.asarray(dones, dtype=np.float64))

    def update(self, states, actions, rewards, next_states, dones) -> float:
        """``actions`` are 0-based output indices. Returns the batch MSE before the step."""
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.int64)
        y = self.targets(rewards, next_states, dones)

        net = self.online
        acts = [states]
        h = states
        last = len(net.weights) - 1
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        rows = np.arange(len(actions))
        err = acts[-1][rows, actions] - y
        loss = float(np.mean(err**2))

        delta = np.zeros_like(acts[-1])
        delta[rows, actions] = 2.0 * err / len(actions)
        gw, gb = [None] * len(net.weights), [None] * len(net.weights)
        for i in range(last, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i:
                delta = (delta @ net.weights[i].T) * (acts[i] > 0)
        self.opt.step(gw + gb)
        return loss


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 12
    lr: float = 1e-3
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.8
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync: int = 500
    hidden: tuple[int, ...] = (128, 64)
    seed: int = 0

    def __post_init__(self):
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.eps_decay_fraction <= 1.0:
            raise ValueError("eps_decay_fraction must lie in (0, 1]")
        if self.episodes < 1 or self.batch_size < 1 or self.replay_capacity < self.batch_size:
            raise ValueError("episodes, batch_size >= 1 and replay_capacity >= batch_size required")

    def epsilon(self, episode: int) -> float:
        """Linear decay from eps_start to eps_end over the first eps_decay_fraction of episodes."""
        span = self.eps_decay_fraction * self.episodes
        frac = min(1.0, episode / span) if span > 0 else 1.0
        return self.eps_start + (self.eps_end - self.eps_start) * frac


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.items)

    def add(self, state, action, reward, next_state, done) -> None:
        self.items.append((state, action, reward, next_state, done))

    def sample(self, rng: np.random.Generator, n: int):
        idx = rng.integers(0, len(self.items), size=n)
        batch = [self.items[i] for i in idx]
        s, a, r, s2, d = zip(*batch)
        return np.stack(s), np.array(a), np.array(r), np.stack(s2), np.array(d, dtype=np.float64)


def train(
    streams: Sequence[ViewStream],
    strategy: Strategy,
    params: RewardParams = RewardParams(),
    config: TrainConfig = TrainConfig(),
) -> QPolicy:
    """Deep Q-learning with experience replay and a periodically synced target network.

    Each episode walks one training stream (chosen by the seeded generator)
    from a random start within the first action-space frames until the next
    landing index would fall off the end.
    """
    strategy = Strategy.parse(strategy)
    streams = list(streams)
    if not streams:
        raise ValueError("need at least one training stream")
    dim = streams[0].dim
    if any(s.dim != dim for s in streams):
        raise ValueError("training streams disagree on feature dimension")
    if not any(s.labels.any() for s in streams):
        warnings.warn("no training stream contains an important frame", RuntimeWarning, stacklevel=2)
    for s in streams:
        if s.labels.all() or not s.labels.any():
            warnings.warn(f"stream {s.view_id} is degenerate (single label value)", RuntimeWarning,
                          stacklevel=2)

    n_actions = strategy.action_space
    rng = np.random.default_rng(config.seed)
    policy = QPolicy.init((dim, *config.hidden, n_actions), int(strategy), rng)
    learner = QLearner(policy, config.lr, params.gamma)
    replay = ReplayBuffer(config.replay_capacity)
    updates = 0

    for episode in range(config.episodes):
        eps = config.epsilon(episode)
        stream = streams[int(rng.integers(0, len(streams)))]
        feats = stream.features.astype(np.float64)
        labels = stream.labels
        length = len(stream)
        k = int(rng.integers(0, min(n_actions, length)))
        while True:
            if rng.random() < eps:
                a = int(rng.integers(1, n_actions + 1))
            else:
                a = greedy_action(learner.online.forward(feats[k]))
            nxt = k + a + 1
            if nxt >= length:
                break
            r = step_reward(labels, k, a, strategy, params)
            done = nxt + 2 >= length
            replay.add(feats[k], a - 1, r, feats[nxt], done)
            if len(replay) >= config.batch_size:
                learner.update(*replay.sample(rng, config.batch_size))
                updates += 1
                if updates % config.target_sync == 0:
                    learner.sync_target()
            if done:
                break
            k = nxt

    return learner.online.as_float32()


@dataclass
class SelectionResult:
    selected: list[int]
    processed: int


def fast_forward(policy: QPolicy, stream: ViewStream, start_index: int = 0) -> SelectionResult:
    """Greedy skipping: process frame k, skip ``a`` frames, continue at k + a + 1."""
    length = len(stream)
    if not 0 <= start_index < length:
        raise IndexError(f"start index {start_index} outside stream of {length}")
    selected = []
    k = start_index
    while k < length:
        selected.append(k)
        k += greedy_action(q_values(policy, stream.features[k])) + 1
    return SelectionResult(selected, len(selected))


class SkipAgent:
    """Stateful per-view skipper that can be advanced period by period with changing policies."""

    def __init__(self, stream: ViewStream, start_index: int = 0):
        self.stream = stream
        self.next_index = start_index
        self.forward_passes = 0

    def advance(self, policy: QPolicy, end: int) -> list[int]:
        """Process frames until the next index reaches ``end``; returns processed indices."""
        end = min(end, len(self.stream))
        feats = self.stream.features
        selected = []
        k = self.next_index
        while k < end:
            selected.append(k)
            self.forward_passes += 1
            k += greedy_action(q_values(policy, feats[k])) + 1
        self.next_index = k
        return selected
