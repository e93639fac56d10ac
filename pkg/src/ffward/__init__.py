"""Collaborative multi-agent video fast-forwarding over per-frame feature streams."""

from .features import SceneDataset, SynthConfig, ViewStream, apply_desync, generate_scene, read_dataset, write_dataset
from .ffagent import QPolicy, RewardParams, Strategy, TrainConfig, fast_forward, train
from .graph import CommGraph
from .simkernel import SimParams, agent_sim, frame_sim, match_count

__all__ = [
    "CommGraph", "QPolicy", "RewardParams", "SceneDataset", "SimParams", "Strategy", "SynthConfig",
    "TrainConfig", "ViewStream", "agent_sim", "apply_desync", "fast_forward", "frame_sim",
    "generate_scene", "match_count", "read_dataset", "train", "write_dataset",
]
__version__ = "0.1.0"
