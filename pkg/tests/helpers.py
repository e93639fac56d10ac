"""Small hand-built policies so run-level tests do not need training."""

import numpy as np

from ffward.ffagent import QPolicy, Strategy


def constant_policy(strategy: Strategy, action: int, dim: int) -> QPolicy:
    a = strategy.action_space
    bias = np.zeros(a)
    bias[action - 1] = 1.0
    return QPolicy([np.zeros((dim, 3)), np.zeros((3, 2)), np.zeros((2, a))],
                   [np.zeros(3), np.zeros(2), bias], int(strategy))


def fixed_policies(dim: int, slow=2, normal=5, fast=12) -> dict:
    return {Strategy.SLOW: constant_policy(Strategy.SLOW, slow, dim),
            Strategy.NORMAL: constant_policy(Strategy.NORMAL, normal, dim),
            Strategy.FAST: constant_policy(Strategy.FAST, fast, dim)}


def random_policies(dim: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    return {s: QPolicy.init((dim, 8, 8, s.action_space), int(s), rng).as_float32() for s in Strategy}
