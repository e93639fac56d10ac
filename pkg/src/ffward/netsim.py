"""Wire codec, simulated lossy channel and communication accounting.

Every message crosses the channel as encoded bytes, so the byte counters are
exactly the codec's serialized sizes.
"""

from __future__ import annotations

import enum
import socket
import struct
import threading
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

HEADER = struct.Struct("<BHII")  # kind, sender, period, payload_len
HEADER_SIZE = HEADER.size  # 11


class Kind(enum.IntEnum):
    FRAME_BATCH = 1
    SCORE_VECTOR = 2
    STRATEGY_ORDER = 3


class CodecError(ValueError):
    pass


class ShortBufferError(CodecError):
    pass


class UnknownKindError(CodecError):
    pass


class LengthMismatchError(CodecError):
    pass


@dataclass(frozen=True, eq=False)
class FrameBatch:
    indices: np.ndarray  # (k,) uint32
    features: np.ndarray  # (k, D) float32

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.uint32).reshape(-1)
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim == 1 and feats.size == 0:
            feats = feats.reshape(0, 0)
        if feats.ndim != 2 or feats.shape[0] != idx.size:
            raise ValueError("one feature row per frame index required")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return self.indices.size

    def __eq__(self, other):
        if not isinstance(other, FrameBatch):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and (
            (len(self) == 0 and len(other) == 0) or np.array_equal(self.features, other.features)
        )


@dataclass(frozen=True)
class Message:
    sender: int
    period: int
    kind: Kind
    payload: object  # FrameBatch | tuple[float, ...] | tuple[int, ...]


def frame_batch_payload_size(count: int, dim: int) -> int:
    return 4 + count * (4 + 4 * dim)


def encoded_size(msg: Message) -> int:
    """Serialized length of ``msg`` without building the bytes."""
    kind = Kind(msg.kind)
    if kind is Kind.FRAME_BATCH:
        batch = msg.payload
        dim = batch.features.shape[1] if len(batch) else 0
        return HEADER_SIZE + frame_batch_payload_size(len(batch), dim)
    if kind is Kind.SCORE_VECTOR:
        return HEADER_SIZE + 2 + 4 * len(msg.payload)
    return HEADER_SIZE + 2 + len(msg.payload)


def _encode_payload(msg: Message) -> bytes:
    if msg.kind is Kind.FRAME_BATCH:
        batch: FrameBatch = msg.payload
        rows = np.zeros(len(batch), dtype=[("i", "<u4"), ("f", "<f4", (batch.features.shape[1],))])
        rows["i"] = batch.indices
        rows["f"] = batch.features
        return struct.pack("<I", len(batch)) + rows.tobytes()
    if msg.kind is Kind.SCORE_VECTOR:
        vals = np.asarray(msg.payload, dtype="<f4")
        return struct.pack("<H", vals.size) + vals.tobytes()
    if msg.kind is Kind.STRATEGY_ORDER:
        codes = np.asarray(msg.payload, dtype=np.uint8)
        return struct.pack("<H", codes.size) + codes.tobytes()
    raise UnknownKindError(f"unknown kind {msg.kind!r}")


def encode(msg: Message) -> bytes:
    kind = Kind(msg.kind)
    payload = _encode_payload(Message(msg.sender, msg.period, kind, msg.payload))
    return HEADER.pack(kind, msg.sender, msg.period, len(payload)) + payload


def _decode_payload(kind: Kind, payload: bytes):
    if kind is Kind.FRAME_BATCH:
        if len(payload) < 4:
            raise ShortBufferError("frame batch payload shorter than its count field")
        (count,) = struct.unpack_from("<I", payload)
        body = len(payload) - 4
        if count == 0:
            if body:
                raise LengthMismatchError("empty frame batch carries trailing bytes")
            return FrameBatch(np.zeros(0, np.uint32), np.zeros((0, 0), np.float32))
        if body % count or (body // count) < 4 or (body // count - 4) % 4:
            raise LengthMismatchError(f"payload of {body} bytes cannot hold {count} frames")
        dim = (body // count - 4) // 4
        rows = np.frombuffer(payload, dtype=[("i", "<u4"), ("f", "<f4", (dim,))], count=count, offset=4)
        return FrameBatch(rows["i"].copy(), rows["f"].reshape(count, dim).astype(np.float32))
    if kind is Kind.SCORE_VECTOR:
        if len(payload) < 2:
            raise ShortBufferError("score vector payload shorter than its count field")
        (n,) = struct.unpack_from("<H", payload)
        if len(payload) != 2 + 4 * n:
            raise LengthMismatchError(f"score vector of {n} entries needs {2 + 4 * n} bytes")
        return tuple(float(v) for v in np.frombuffer(payload, dtype="<f4", count=n, offset=2))
    if len(payload) < 2:
        raise ShortBufferError("strategy order payload shorter than its count field")
    (n,) = struct.unpack_from("<H", payload)
    if len(payload) != 2 + n:
        raise LengthMismatchError(f"strategy order of {n} entries needs {2 + n} bytes")
    return tuple(int(v) for v in payload[2:])


def decode(data: bytes) -> Message:
    if len(data) < HEADER_SIZE:
        raise ShortBufferError(f"{len(data)} bytes is shorter than the {HEADER_SIZE}-byte header")
    kind_code, sender, period, payload_len = HEADER.unpack_from(data)
    try:
        kind = Kind(kind_code)
    except ValueError:
        raise UnknownKindError(f"unknown message kind 0x{kind_code:02x}") from None
    if len(data) < HEADER_SIZE + payload_len:
        raise ShortBufferError(f"payload truncated: {len(data) - HEADER_SIZE} of {payload_len} bytes")
    if len(data) > HEADER_SIZE + payload_len:
        raise LengthMismatchError(f"{len(data) - HEADER_SIZE - payload_len} bytes beyond declared payload")
    payload = _decode_payload(kind, bytes(data[HEADER_SIZE:]))
    return Message(sender, period, kind, payload)


def score_message(sender: int, period: int, scores) -> Message:
    return Message(sender, period, Kind.SCORE_VECTOR, tuple(np.asarray(scores, dtype=np.float32).tolist()))


def strategy_message(sender: int, period: int, codes) -> Message:
    return Message(sender, period, Kind.STRATEGY_ORDER, tuple(int(c) for c in codes))


def frame_message(sender: int, period: int, indices, features) -> Message:
    return Message(sender, period, Kind.FRAME_BATCH, FrameBatch(indices, features))


# --------------------------------------------------------------------------- channel

P2P = "p2p"
CENTRAL = "central"
CONTROLLER = -1  # destination id of the central controller


@dataclass(frozen=True)
class ChannelConfig:
    loss: float = 0.0
    seed: int = 0
    topology: str = P2P

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("loss probability must lie in [0, 1]")
        if self.topology not in (P2P, CENTRAL):
            raise ValueError(f"topology must be {P2P!r} or {CENTRAL!r}")


@dataclass
class CommReport:
    bytes_p2p: int = 0
    bytes_central: int = 0
    bytes_delivered: int = 0
    sends: int = 0
    delivered: int = 0
    # kind name -> Counter{encoded size: number of attempted sends}
    histogram: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.bytes_p2p + self.bytes_central

    def merge(self, other: "CommReport") -> "CommReport":
        hist = {k: Counter(v) for k, v in self.histogram.items()}
        for k, v in other.histogram.items():
            hist.setdefault(k, Counter()).update(v)
        return CommReport(self.bytes_p2p + other.bytes_p2p, self.bytes_central + other.bytes_central,
                          self.bytes_delivered + other.bytes_delivered, self.sends + other.sends,
                          self.delivered + other.delivered, hist)


class Channel:
    """In-process lossy channel with period-barrier delivery.

    A send is dropped with probability ``loss``; the draw depends only on
    (seed, send ordinal). Delivered messages wait in the destination inbox
    until ``receive`` drains it in (sender, ordinal) order.
    """

    def __init__(self, config: ChannelConfig = ChannelConfig()):
        self.config = config
        self._ordinal = 0
        self._inbox: dict[int, list] = defaultdict(list)
        self._lock = threading.Lock()
        self._bytes = {P2P: 0, CENTRAL: 0}
        self._bytes_delivered = 0
        self._delivered = 0
        self._hist: dict[str, Counter] = {}

    def _dropped(self, ordinal: int) -> bool:
        p = self.config.loss
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return bool(np.random.default_rng([self.config.seed, ordinal]).random() < p)

    def _transport(self, data: bytes) -> bytes:
        return data

    def send(self, msg: Message, dest: int) -> bool:
        data = encode(msg)
        with self._lock:
            ordinal = self._ordinal
            self._ordinal += 1
            self._bytes[self.config.topology] += len(data)
            self._hist.setdefault(Kind(msg.kind).name, Counter())[len(data)] += 1
            if self._dropped(ordinal):
                return False
            self._bytes_delivered += len(data)
            self._delivered += 1
        received = decode(self._transport(data))
        with self._lock:
            self._inbox[dest].append((received.sender, ordinal, received))
        return True

    def receive(self, dest: int) -> list[Message]:
        with self._lock:
            items = sorted(self._inbox.pop(dest, []), key=lambda t: (t[0], t[1]))
        return [m for _, _, m in items]

    def comm_report(self) -> CommReport:
        with self._lock:
            return CommReport(
                bytes_p2p=self._bytes[P2P],
                bytes_central=self._bytes[CENTRAL],
                bytes_delivered=self._bytes_delivered,
                sends=self._ordinal,
                delivered=self._delivered,
                histogram={k: Counter(v) for k, v in self._hist.items()},
            )

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def comm_report(channel: Channel) -> CommReport:
    return channel.comm_report()


class SocketChannel(Channel):
    """Same semantics as ``Channel`` but every delivered frame travels over a local stream socket."""

    def __init__(self, config: ChannelConfig = ChannelConfig()):
        super().__init__(config)
        self._tx, self._rx = socket.socketpair()

    def _recv_exact(self, n: int) -> bytes:
        chunks = []
        while n:
            chunk = self._rx.recv(n)
            if not chunk:
                raise ConnectionError("socket closed mid-frame")
            chunks.append(chunk)
            n -= len(chunk)
        return b"".join(chunks)

    def _transport(self, data: bytes) -> bytes:
        # writer thread so frames larger than the socket buffer cannot deadlock
        writer = threading.Thread(target=self._tx.sendall, args=(data,))
        writer.start()
        header = self._recv_exact(HEADER_SIZE)
        payload_len = HEADER.unpack(header)[3]
        body = self._recv_exact(payload_len)
        writer.join()
        return header + body

    def close(self) -> None:
        self._tx.close()
        self._rx.close()


def make_channel(config: ChannelConfig, transport: str = "inproc") -> Channel:
    if transport == "inproc":
        return Channel(config)
    if transport == "socket":
        return SocketChannel(config)
    raise ValueError(f"unknown transport {transport!r}")
