"""Frame and agent similarity primitives shared by the DMVF and MFFNet pipelines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class SimParams:
    alpha: float = DEFAULT_ALPHA
    rho: float = 0.525

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")


def _as_matrix(frames) -> np.ndarray:
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    return arr


def frame_sim(x, y, alpha: float = DEFAULT_ALPHA) -> float:
    """exp(-alpha * ||x - y||_2)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.exp(-alpha * np.linalg.norm(x - y)))


def sim_matrix(u, v, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Pairwise frame similarities, shape (len(u), len(v))."""
    u, v = _as_matrix(u), _as_matrix(v)
    if u.shape[1] != v.shape[1]:
        raise ValueError(f"dimension mismatch: {u.shape[1]} vs {v.shape[1]}")
    if len(u) == 0 or len(v) == 0:
        return np.zeros((len(u), len(v)))
    # explicit differences rather than the Gram expansion: exact enough to
    # respect strict threshold comparisons on duplicated frames
    dist = np.linalg.norm(u[:, None, :] - v[None, :, :], axis=-1)
    return np.exp(-alpha * dist)


def agent_sim(frames_j, frames_i, alpha: float = DEFAULT_ALPHA) -> float:
    """Similarity of agent j's selection TO agent i's: mean over j's frames of the best match in i."""
    fj, fi = _as_matrix(frames_j), _as_matrix(frames_i)
    if len(fj) == 0 or len(fi) == 0 or fj.size == 0 or fi.size == 0:
        raise ValueError("agent_sim needs two non-empty frame sets")
    return float(sim_matrix(fj, fi, alpha).max(axis=1).mean())


def match_count(u, v, params: SimParams) -> int:
    """Number of frames in ``u`` whose best match in ``v`` exceeds ``params.rho``."""
    u = _as_matrix(u)
    if u.size == 0:
        return 0
    v = _as_matrix(v)
    if v.size == 0:
        raise ValueError("match_count needs a non-empty reference set v")
    best = sim_matrix(u, v, params.alpha).max(axis=1)
    return int(np.count_nonzero(best > params.rho))
