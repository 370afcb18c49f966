"""Peer-to-peer state messages and the lossy transport between nodes.

Messages carry the sender's running odometry totals rather than per-interval
deltas: a receiver differences consecutive totals, so any dropped or
reordered message is covered by the next one that arrives. The fixed binary
encoding keeps every message well under the 200-byte budget (16 kbit/s at
10 Hz per link).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MESSAGE_SIZE_BUDGET = 200  # bytes per message at 10 Hz <= 16 kbit/s

_WIRE = struct.Struct("<HIdddd")  # source, sequence, timestamp, 3 totals


@dataclass(frozen=True)
class PeerMessage:
    """One odometry state update: cumulative reported displacement since start."""

    source: int
    sequence: int
    timestamp: float
    total_dx: float
    total_dy: float
    total_dz: float

    def encode(self) -> bytes:
        return _WIRE.pack(self.source, self.sequence, self.timestamp,
                          self.total_dx, self.total_dy, self.total_dz)

    @classmethod
    def decode(cls, raw: bytes) -> "PeerMessage":
        source, sequence, ts, dx, dy, dz = _WIRE.unpack(raw)
        return cls(source, sequence, ts, dx, dy, dz)

    @property
    def size_bytes(self) -> int:
        return _WIRE.size

    def totals(self) -> np.ndarray:
        return np.array([self.total_dx, self.total_dy, self.total_dz])


assert _WIRE.size <= MESSAGE_SIZE_BUDGET


@dataclass(frozen=True)
class TransportConfig:
    latency_mean: float = 0.1
    jitter_std: float = 0.02
    drop_prob: float = 0.0

    def __post_init__(self):
        if self.latency_mean < 0 or self.jitter_std < 0:
            raise ValueError("latency parameters must be >= 0")
        if not (0.0 <= self.drop_prob < 1.0):
            raise ValueError("drop_prob must be in [0, 1)")


def transport_deliver(msg: PeerMessage, cfg: TransportConfig, rng) -> float | None:
    """Delivery time for a message sent at msg.timestamp, or None if dropped.

    Per-link FIFO is not enforced: jitter can reorder messages.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if cfg.drop_prob > 0.0 and rng.uniform() < cfg.drop_prob:
        return None
    if cfg.latency_mean == 0.0 and cfg.jitter_std == 0.0:
        return msg.timestamp
    return msg.timestamp + max(0.0, rng.normal(cfg.latency_mean, cfg.jitter_std))
