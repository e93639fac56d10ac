"""Frame/stream data model, the FFWD dataset file format and a synthetic scene generator."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MAGIC = b"FFWD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHII")

# Direction shared by every important segment regardless of scene seed, so a
# policy trained on one scene recognises activity in another.
_ACTIVITY_SEED = 0x5EED


class DatasetFormatError(ValueError):
    """Base class for dataset file decoding problems."""


class BadMagicError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    def __init__(self, offset: int, needed: int, available: int):
        super().__init__(
            f"file truncated at byte offset {offset}: needed {needed} bytes, {available} available"
        )
        self.offset = offset


class DimensionMismatchError(DatasetFormatError):
    pass


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending parameter."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class FrameRecord:
    feature: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class ViewStream:
    """One camera's frames: ``features`` is (L, D) float32, ``labels`` is (L,) uint8."""

    view_id: int
    features: np.ndarray
    labels: np.ndarray
    desync_offset: int = 0

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise ValueError("view needs a non-empty (L, D) feature matrix")
        if labels.shape != (feats.shape[0],):
            raise ValueError("labels must have one entry per frame")
        if np.any(labels > 1):
            raise ValueError("labels must be 0 or 1")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> FrameRecord:
        return FrameRecord(self.features[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[FrameRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ViewStream):
            return NotImplemented
        return (
            self.view_id == other.view_id
            and self.desync_offset == other.desync_offset
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


def global_truth_of(views: Sequence[ViewStream]) -> np.ndarray:
    """Element-wise ``min(sum of labels, 1)`` across views."""
    total = np.sum([v.labels.astype(np.int64) for v in views], axis=0)
    return np.minimum(total, 1).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class SceneDataset:
    views: tuple[ViewStream, ...]
    global_truth: np.ndarray

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValueError("dataset needs at least one view")
        length, dim = len(views[0]), views[0].dim
        ids = [v.view_id for v in views]
        if len(set(ids)) != len(ids):
            raise ValueError("view ids must be unique")
        for v in views:
            if len(v) != length:
                raise ValueError("all views must have the same length")
            if v.dim != dim:
                raise ValueError("all views must have the same feature dimension")
        truth = np.ascontiguousarray(self.global_truth, dtype=np.uint8)
        if truth.shape != (length,):
            raise ValueError("global_truth must have one entry per frame")
        truth.flags.writeable = False
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "global_truth", truth)

    @classmethod
    def from_views(cls, views: Sequence[ViewStream]) -> "SceneDataset":
        return cls(tuple(views), global_truth_of(views))

    @property
    def num_views(self) -> int:
        return len(self.views)

    @property
    def length(self) -> int:
        return len(self.views[0])

    @property
    def dim(self) -> int:
        return self.views[0].dim

    def __eq__(self, other):
        if not isinstance(other, SceneDataset):
            return NotImplemented
        return (
            len(self.views) == len(other.views)
            and all(a == b for a, b in zip(self.views, other.views))
            and np.array_equal(self.global_truth, other.global_truth)
        )


@dataclass(frozen=True)
class SynthConfig:
    num_views: int = 3
    length: int = 10_000
    dim: int = 64
    num_events: int = 120
    event_duration: tuple[int, int] = (5, 40)
    overlap: float = 0.9
    noise_std: float = 0.5
    seed: int = 0
    # scale of the fixed per-view offset vector (components ~ N(0, view_offset_std^2))
    view_offset_std: float = 0.5
    # amplitude of the activity signature added on important frames
    event_strength: float = 2.0
    # background drift: number of frames between independent background keyframes
    background_correlation: int = 60
    background_std: float = 0.6

    def validate(self) -> None:
        if self.num_views < 2:
            raise ConfigError("num_views", "must be >= 2")
        if self.length < 200:
            raise ConfigError("length", "must be >= 200")
        if self.dim < 1:
            raise ConfigError("dim", "must be >= 1")
        if self.num_events < 0:
            raise ConfigError("num_events", "must be >= 0")
        lo, hi = self.event_duration
        if lo < 1 or hi < lo or hi > self.length:
            raise ConfigError("event_duration", "must satisfy 1 <= min <= max <= length")
        if not 0.0 <= self.overlap <= 1.0:
            raise ConfigError("overlap", "must lie in [0, 1]")
        if self.noise_std < 0:
            raise ConfigError("noise_std", "must be >= 0")
        if self.view_offset_std < 0:
            raise ConfigError("view_offset_std", "must be >= 0")
        if self.background_correlation < 1:
            raise ConfigError("background_correlation", "must be >= 1")


def activity_direction(dim: int) -> np.ndarray:
    rng = np.random.default_rng([_ACTIVITY_SEED, dim])
    u = rng.standard_normal(dim)
    return u / np.linalg.norm(u)


def _background(rng: np.random.Generator, length: int, dim: int, corr: int, std: float) -> np.ndarray:
    # piecewise-linear interpolation between independent Gaussian keyframes
    n_keys = length // corr + 2
    keys = rng.standard_normal((n_keys, dim)) * std
    t = np.arange(length) / corr
    i0 = np.floor(t).astype(int)
    w = (t - i0)[:, None]
    return keys[i0] * (1.0 - w) + keys[i0 + 1] * w


def generate_scene(cfg: SynthConfig) -> SceneDataset:
    """Build an N-view scene whose important segments recur across views.

    Every event owns a base feature (shared activity direction plus an
    event-specific part) and a time span. Each view draws the event with
    probability ``cfg.overlap``; an event nobody draws goes to one random
    view. Frames carry the shared background, the view's fixed offset,
    the event feature where applicable, and i.i.d. Gaussian noise.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, length, dim = cfg.num_views, cfg.length, cfg.dim

    background = _background(rng, length, dim, cfg.background_correlation, cfg.background_std)
    offsets = rng.standard_normal((n, dim)) * cfg.view_offset_std
    u = activity_direction(dim)

    signal = np.zeros((n, length, dim))
    labels = np.zeros((n, length), dtype=np.uint8)
    lo, hi = cfg.event_duration
    for _ in range(cfg.num_events):
        dur = int(rng.integers(lo, hi + 1))
        start = int(rng.integers(0, length - dur + 1))
        specific = rng.standard_normal(dim)
        specific /= np.linalg.norm(specific)
        base = cfg.event_strength * np.sqrt(dim) * (u + 0.5 * specific) / np.sqrt(1.25)
        present = rng.random(n) < cfg.overlap
        if not present.any():
            present[int(rng.integers(0, n))] = True
        for v in np.flatnonzero(present):
            # overlapping events in one view: later one wins the signal
            signal[v, start : start + dur] = base
            labels[v, start : start + dur] = 1

    noise = rng.standard_normal((n, length, dim)) * cfg.noise_std
    feats = background[None] + offsets[:, None, :] + signal + noise
    views = [ViewStream(v, feats[v], labels[v]) for v in range(n)]
    return SceneDataset.from_views(views)


def identical_views(ds: SceneDataset, source: int = 0) -> SceneDataset:
    """Every view replaced by a copy of ``source`` (the all-same-data case)."""
    src = ds.views[source]
    views = [ViewStream(v.view_id, src.features, src.labels) for v in ds.views]
    return SceneDataset.from_views(views)


def apply_desync(ds: SceneDataset, view_id: int, offset_frames: int) -> SceneDataset:
    """Shift one view's content by ``offset_frames`` against its time tags.

    Positive offsets delay the view: time tag t shows original frame t - offset.
    Edge frames are repeated. ``global_truth`` is wall-clock and kept as is.
    """
    length = ds.length
    if abs(offset_frames) >= length:
        raise ValueError(f"|offset| must be < {length}, got {offset_frames}")
    views = []
    found = False
    for v in ds.views:
        if v.view_id != view_id:
            views.append(v)
            continue
        found = True
        src = np.clip(np.arange(length) - offset_frames, 0, length - 1)
        views.append(replace(v, features=v.features[src], labels=v.labels[src],
                             desync_offset=v.desync_offset + offset_frames))
    if not found:
        raise KeyError(f"no view with id {view_id}")
    return SceneDataset(tuple(views), ds.global_truth)


def dumps_dataset(ds: SceneDataset) -> bytes:
    n, length, dim = ds.num_views, ds.length, ds.dim
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, n, length, dim)]
    for v in ds.views:
        parts.append(struct.pack("<H", v.view_id))
        parts.append(v.labels.tobytes())
        parts.append(v.features.astype("<f4").tobytes())
    parts.append(ds.global_truth.tobytes())
    return b"".join(parts)


def loads_dataset(data: bytes) -> SceneDataset:
    buf = memoryview(data)
    pos = 0

    def take(nbytes: int) -> memoryview:
        nonlocal pos
        if pos + nbytes > len(buf):
            raise TruncatedFileError(pos, nbytes, len(buf) - pos)
        chunk = buf[pos : pos + nbytes]
        pos += nbytes
        return chunk

    if len(buf) >= 4 and bytes(buf[:4]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    magic, version, n, length, dim = _HEADER.unpack(take(_HEADER.size))
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {FORMAT_VERSION}")
    if n == 0 or length == 0 or dim == 0:
        raise DimensionMismatchError(f"empty dimensions N={n} L={length} D={dim}")

    views = []
    for _ in range(n):
        (view_id,) = struct.unpack("<H", take(2))
        labels = np.frombuffer(take(length), dtype=np.uint8).copy()
        feats = np.frombuffer(take(length * dim * 4), dtype="<f4").reshape(length, dim).copy()
        views.append(ViewStream(view_id, feats, labels))
    truth = np.frombuffer(take(length), dtype=np.uint8).copy()
    if pos != len(buf):
        raise DimensionMismatchError(
            f"{len(buf) - pos} trailing bytes after declared N={n} L={length} D={dim}"
        )
    return SceneDataset(tuple(views), truth)


def write_dataset(ds: SceneDataset, path) -> None:
    Path(path).write_bytes(dumps_dataset(ds))


def read_dataset(path) -> SceneDataset:
    return loads_dataset(Path(path).read_bytes())
