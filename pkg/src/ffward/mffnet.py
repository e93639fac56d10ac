"""Centralized multi-view fast-forwarding: main-view selection, strategy assignment,
summary generation, and the Q-learned controller alternative."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .features import SceneDataset
from .ffagent import (
    CONTROLLER_KIND, QLearner, QPolicy, ReplayBuffer, SkipAgent, Strategy, TrainConfig,
    greedy_action, load_policy, save_policy,
)
from .netsim import (
    CENTRAL, CONTROLLER, Channel, ChannelConfig, Kind, encoded_size, frame_message, strategy_message,
)
from .report import PeriodRecord, RunReport
from .simkernel import SimParams, sim_matrix

NUM_STRATEGIES = len(Strategy)
MAX_JOINT_ACTIONS = 3**6
CONTROLLER_SENDER = 0xFFFF  # sender id the controller stamps on its orders


@dataclass
class Buffer:
    """Frames one agent delivered for a period: time tags and features."""

    indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.size == 0:
            feats = feats.reshape(0, feats.shape[-1] if feats.ndim == 2 else 0)
        self.features = feats
        if len(self.indices) != len(self.features):
            raise ValueError("one feature row per index required")
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("buffer indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def empty(cls, dim: int) -> "Buffer":
        return cls(np.zeros(0, np.int64), np.zeros((0, dim)))


@dataclass(frozen=True)
class ControllerConfig:
    sim: SimParams = field(default_factory=SimParams)
    tau: float = 0.4
    period: int = 100
    dedup_window: int = 50
    neighbor_window: int = 4

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.period < 1 or self.dedup_window < 0 or self.neighbor_window < 0:
            raise ValueError("period >= 1 and non-negative windows required")


class SimilarityCache:
    """Per-frame best similarity to each view: the pairwise table of the main-view search."""

    def __init__(self, buffers: Sequence[Buffer], alpha: float):
        self.buffers = buffers
        n = len(buffers)
        # best[i][:, j] = max over frames of view j of sim(frame of i, that frame)
        self.best = []
        for i in range(n):
            cols = np.full((len(buffers[i]), n), -np.inf)
            for j in range(n):
                if j != i and len(buffers[i]) and len(buffers[j]):
                    cols[:, j] = sim_matrix(buffers[i].features, buffers[j].features, alpha).max(axis=1)
            self.best.append(cols)

    def matches(self, i: int, views: Sequence[int], rho: float) -> int:
        """Frames of view i matched (> rho) by the union of ``views``."""
        if not len(self.buffers[i]) or not views:
            return 0
        return int(np.count_nonzero(self.best[i][:, list(views)].max(axis=1) > rho))


def subset_score(cache: SimilarityCache, subset: Sequence[int], rho: float) -> Fraction | None:
    """Matched frames of the other views per frame kept in ``subset``; None when the subset holds no frames."""
    size = sum(len(cache.buffers[j]) for j in subset)
    if size == 0:
        return None
    inside = set(subset)
    hits = sum(cache.matches(i, subset, rho) for i in range(len(cache.buffers)) if i not in inside)
    return Fraction(hits, size)


def _bitmask(subset: Sequence[int]) -> int:
    return sum(1 << j for j in subset)


def select_main_views(buffers: Sequence[Buffer], params: SimParams,
                      cache: SimilarityCache | None = None) -> tuple[int, ...]:
    """Exhaustive search over the 2^N - 2 non-empty proper subsets.

    Scores are exact fractions. Among optimal subsets the smallest wins, then the
    smallest bitmask. Subsets whose buffers are all empty are not scored.
    """
    n = len(buffers)
    if n < 2:
        raise ValueError("need at least two views")
    if all(len(b) == 0 for b in buffers):
        raise ValueError("all buffers are empty")
    cache = cache or SimilarityCache(buffers, params.alpha)
    best_key, best = None, None
    for mask in range(1, (1 << n) - 1):
        subset = tuple(j for j in range(n) if mask >> j & 1)
        score = subset_score(cache, subset, params.rho)
        if score is None:
            continue
        key = (-score, len(subset), mask)
        if best_key is None or key < best_key:
            best_key, best = key, subset
    return best


def matching_percentage(cache: SimilarityCache, n: int, main: Sequence[int], rho: float) -> float | None:
    size = len(cache.buffers[n])
    if size == 0:
        return None
    return cache.matches(n, main, rho) / size


def assign_strategies(main: Sequence[int], buffers: Sequence[Buffer], params: SimParams, tau: float,
                      cache: SimilarityCache | None = None) -> list[Strategy]:
    """Main views run Slow; the rest run Fast when more than ``tau`` of their frames match the
    main views, Normal otherwise (including an exact tie and an empty buffer)."""
    cache = cache or SimilarityCache(buffers, params.alpha)
    main_set = set(main)
    out = []
    for n in range(len(buffers)):
        if n in main_set:
            out.append(Strategy.SLOW)
            continue
        mp = matching_percentage(cache, n, main, params.rho)
        out.append(Strategy.FAST if mp is not None and mp > tau else Strategy.NORMAL)
    return out


def generate_summary(main: Sequence[int], buffers: Sequence[Buffer], params: SimParams,
                     dedup_window: int, neighbor_window: int, length: int | None = None) -> set[tuple[int, int]]:
    """Compact summary as (view, time tag) pairs.

    Main-view frames are kept. A non-main frame is dropped when a main-view
    frame within ``dedup_window`` time tags matches it above rho. Every kept
    frame then brings its +-``neighbor_window`` neighbors (clipped to
    [0, length) when ``length`` is given).
    """
    main_set = set(main)
    main_idx = [buffers[j].indices for j in main]
    main_feat = [buffers[j].features for j in main]
    kept: list[tuple[int, int]] = []
    for v, buf in enumerate(buffers):
        if v in main_set:
            kept.extend((v, int(t)) for t in buf.indices)
            continue
        for t, x in zip(buf.indices, buf.features):
            dup = False
            for idx, feat in zip(main_idx, main_feat):
                near = np.abs(idx - t) <= dedup_window
                if near.any() and sim_matrix(x, feat[near], params.alpha).max() > params.rho:
                    dup = True
                    break
            if not dup:
                kept.append((v, int(t)))
    out = set()
    for v, t in kept:
        lo = t - neighbor_window
        hi = t + neighbor_window
        if length is not None:
            lo, hi = max(lo, 0), min(hi, length - 1)
        out.update((v, s) for s in range(lo, hi + 1))
    return out


# --------------------------------------------------------------------------- Q-learned controller


def encode_action(strategies: Sequence[Strategy]) -> int:
    """Agent n's strategy is base-3 digit n (agent 0 least significant)."""
    return sum(int(s) * NUM_STRATEGIES**n for n, s in enumerate(strategies))


def decode_action(index: int, n: int) -> list[Strategy]:
    if not 0 <= index < NUM_STRATEGIES**n:
        raise ValueError(f"action index {index} outside [0, {NUM_STRATEGIES**n})")
    return [Strategy((index // NUM_STRATEGIES**k) % NUM_STRATEGIES) for k in range(n)]


def dqn_state(buffers: Sequence[Buffer], dim: int) -> np.ndarray:
    """Concatenated per-agent mean feature; an empty buffer contributes zeros."""
    parts = [b.features.mean(axis=0) if len(b) else np.zeros(dim) for b in buffers]
    return np.concatenate(parts)


def gaussian_smooth(binary, w: int = 4, sigma: float = 1.0) -> np.ndarray:
    """Replace each 1 by a peak-1 Gaussian bump over +-w; overlapping bumps combine by max."""
    y = np.asarray(binary)
    out = np.zeros(y.size)
    for i in np.flatnonzero(y):
        lo, hi = max(0, i - w), min(y.size, i + w + 1)
        d = np.arange(lo, hi) - i
        np.maximum(out[lo:hi], np.exp(-(d**2) / (2.0 * sigma * sigma)), out=out[lo:hi])
    return out


def dqn_reward(selected: Sequence, truth: Sequence, global_truth, alpha_red: float,
               w: int = 4, sigma: float = 1.0) -> float:
    """Smoothed selection/truth agreement summed over agents, plus ``alpha_red`` times the
    smoothed global-truth mass per selected frame (0 when nothing was selected)."""
    g_bar = np.asarray(global_truth)
    length = g_bar.size
    if len(selected) != len(truth):
        raise ValueError("one truth vector per agent required")
    for v in list(selected) + list(truth):
        if np.asarray(v).size != length:
            raise ValueError("all vectors must have the period length")
    agreement = sum(float(gaussian_smooth(s, w, sigma) @ gaussian_smooth(t, w, sigma))
                    for s, t in zip(selected, truth))
    n_sel = sum(int(np.count_nonzero(s)) for s in selected)
    redundancy = float(gaussian_smooth(g_bar, w, sigma).sum()) / n_sel if n_sel else 0.0
    return agreement + alpha_red * redundancy


@dataclass(eq=False)
class DqnControllerPolicy:
    network: QPolicy
    num_views: int
    alpha_red: float = 0.0

    def __post_init__(self):
        if self.network.n_actions != NUM_STRATEGIES**self.num_views:
            raise ValueError("controller output width must be 3^N")

    def choose(self, state: np.ndarray) -> list[Strategy]:
        return decode_action(greedy_action(self.network.forward(state)) - 1, self.num_views)

    def save(self, path) -> None:
        save_policy(self.network, path)

    @classmethod
    def load(cls, path, alpha_red: float = 0.0) -> "DqnControllerPolicy":
        net = load_policy(path)
        if net.kind != CONTROLLER_KIND:
            raise ValueError(f"{path} is not a controller checkpoint")
        n = round(np.log(net.n_actions) / np.log(NUM_STRATEGIES))
        return cls(net, n, alpha_red)


def _period_buffers(dataset: SceneDataset, selections: Sequence[Sequence[int]]) -> list[Buffer]:
    return [Buffer(sel, dataset.views[v].features[sel]) for v, sel in enumerate(selections)]


def train_dqn_controller(dataset: SceneDataset, policies: Mapping[Strategy, QPolicy],
                         config: TrainConfig = TrainConfig(), alpha_red: float = 0.0,
                         period: int = 100, gamma: float = 0.8, w: int = 4,
                         sigma: float = 1.0) -> DqnControllerPolicy:
    """Q-learning over joint strategy assignments; one episode is one pass over the dataset's periods."""
    n, length, dim = dataset.num_views, dataset.length, dataset.dim
    if NUM_STRATEGIES**n > MAX_JOINT_ACTIONS:
        raise ValueError(f"{NUM_STRATEGIES}^{n} joint actions exceeds the supported {MAX_JOINT_ACTIONS}")
    if length < 2 * period:
        raise ValueError("dataset must span at least two periods")
    n_actions = NUM_STRATEGIES**n
    rng = np.random.default_rng(config.seed)
    net = QPolicy.init((n * dim, *config.hidden, n_actions), CONTROLLER_KIND, rng)
    learner = QLearner(net, config.lr, gamma)
    replay = ReplayBuffer(config.replay_capacity)
    labels = [v.labels for v in dataset.views]
    truth = dataset.global_truth
    n_periods = length // period
    updates = 0

    for episode in range(config.episodes):
        eps = config.epsilon(episode)
        agents = [SkipAgent(v) for v in dataset.views]
        first = [a.advance(policies[Strategy.NORMAL], period) for a in agents]
        state = dqn_state(_period_buffers(dataset, first), dim)
        for p in range(1, n_periods):
            if rng.random() < eps:
                action = int(rng.integers(0, n_actions))
            else:
                action = greedy_action(learner.online.forward(state)) - 1
            strategies = decode_action(action, n)
            lo, hi = p * period, (p + 1) * period
            sels = [agents[v].advance(policies[strategies[v]], hi) for v in range(n)]
            y_hat = []
            for sel in sels:
                b = np.zeros(period, dtype=np.uint8)
                b[np.asarray(sel, dtype=np.int64) - lo] = 1
                y_hat.append(b)
            r = dqn_reward(y_hat, [lab[lo:hi] for lab in labels], truth[lo:hi], alpha_red, w, sigma)
            nxt = dqn_state(_period_buffers(dataset, sels), dim)
            done = p == n_periods - 1
            replay.add(state, action, r, nxt, done)
            if len(replay) >= config.batch_size:
                learner.update(*replay.sample(rng, config.batch_size))
                updates += 1
                if updates % config.target_sync == 0:
                    learner.sync_target()
            state = nxt
    return DqnControllerPolicy(learner.online.as_float32(), n, alpha_red)


# --------------------------------------------------------------------------- run loop


def run_mffnet(dataset: SceneDataset, policies: Mapping[Strategy, QPolicy],
               config: ControllerConfig = ControllerConfig(), channel: Channel | None = None,
               controller: DqnControllerPolicy | None = None, periods: int | None = None) -> RunReport:
    """Lock-step MFFNet run.

    Agents start Normal. Each period they fast-forward, ship their buffer to the
    controller, and adopt whatever strategy order reaches them (keeping the old
    strategy when the order is lost). A lost buffer counts as empty at the
    controller and its frames never reach the summary.
    """
    n, length, dim = dataset.num_views, dataset.length, dataset.dim
    for s in Strategy:
        if s not in policies:
            raise KeyError(f"missing policy for strategy {s}")
    if channel is None:
        channel = Channel(ChannelConfig(topology=CENTRAL))
    params = config.sim
    agents = [SkipAgent(v) for v in dataset.views]
    strategies = [Strategy.NORMAL] * n
    n_periods = -(-length // config.period)
    if periods is not None:
        n_periods = min(n_periods, periods)

    report = RunReport("mffnet", n, length, config.period, meta={
        "controller": "dqn" if controller is not None else "heuristic",
        "rho": params.rho,
        "tau": config.tau,
        "alpha": params.alpha,
        "dedup_window": config.dedup_window,
        "neighbor_window": config.neighbor_window,
        "loss": channel.config.loss,
        "channel_seed": channel.config.seed,
    })
    summary_frames = 0

    for p in range(n_periods):
        end = (p + 1) * config.period
        current = list(strategies)
        selected = [agents[v].advance(policies[current[v]], end) for v in range(n)]
        bytes_sent = [0] * n
        delivered = [False] * n
        for v in range(n):
            msg = frame_message(v, p, selected[v], dataset.views[v].features[selected[v]])
            bytes_sent[v] += encoded_size(msg)
            channel.send(msg, CONTROLLER)

        buffers = [Buffer.empty(dim) for _ in range(n)]
        for msg in channel.receive(CONTROLLER):
            if msg.kind is Kind.FRAME_BATCH:
                batch = msg.payload
                feats = batch.features if len(batch) else np.zeros((0, dim))
                buffers[msg.sender] = Buffer(batch.indices.astype(np.int64), feats)
                delivered[msg.sender] = True

        if controller is not None:
            decided = controller.choose(dqn_state(buffers, dim))
        elif any(len(b) for b in buffers):
            cache = SimilarityCache(buffers, params.alpha)
            main = select_main_views(buffers, params, cache)
            decided = assign_strategies(main, buffers, params, config.tau, cache)
            summary_frames += len(generate_summary(main, buffers, params, config.dedup_window,
                                                   config.neighbor_window, length))
        else:
            decided = current

        order = strategy_message(CONTROLLER_SENDER, p, [int(s) for s in decided])
        for v in range(n):
            channel.send(order, v)
        for v in range(n):
            for msg in channel.receive(v):
                if msg.kind is Kind.STRATEGY_ORDER:
                    strategies[v] = Strategy(msg.payload[v])

        report.periods.append(PeriodRecord(
            period=p,
            strategies=[str(s) for s in current],
            selected=[list(map(int, s)) for s in selected],
            delivered=delivered,
            bytes_sent=bytes_sent,
        ))

    report.meta["summary_frames"] = summary_frames
    report.comm = channel.comm_report()
    return report
