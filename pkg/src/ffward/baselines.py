"""Reference skippers: uniform striding and seeded Bernoulli sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNIFORM = "uniform"
RANDOM = "random"


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = UNIFORM
    rate: float = 0.04
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (UNIFORM, RANDOM):
            raise ValueError(f"kind must be {UNIFORM!r} or {RANDOM!r}, got {self.kind!r}")
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("rate must lie in (0, 1]")


def baseline_select(length: int, config: BaselineConfig) -> np.ndarray:
    """Selected frame indices of a stream of ``length`` frames; never empty."""
    if length < 1:
        raise ValueError("stream length must be >= 1")
    if config.kind == UNIFORM:
        # guard against float noise such as 1/0.04 = 25.000000000000004
        stride = math.ceil(round(1.0 / config.rate, 9))
        return np.arange(0, length, stride, dtype=np.int64)
    rng = np.random.default_rng(config.seed)
    picked = np.flatnonzero(rng.random(length) < config.rate)
    if picked.size == 0:
        picked = np.array([int(rng.integers(0, length))])
    return picked.astype(np.int64)
