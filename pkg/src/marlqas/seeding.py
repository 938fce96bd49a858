"""Seed splitting.

A master seed fans out into independent named streams through
``numpy.random.SeedSequence``: the stream name is hashed with CRC32 and used,
together with any integer keys, as the spawn key. The same (seed, name, keys)
always yields the same stream, independent of call order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(parts) -> tuple[int, ...]:
    out = []
    for p in parts:
        out.append(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & 0xFFFFFFFF)
    return tuple(out)


def stream(master: int, name: str, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master), spawn_key=_key((name,) + keys)))


def derive_seed(master: int, *keys) -> int:
    """A 63-bit integer seed for APIs that want a plain int."""
    ss = np.random.SeedSequence(int(master), spawn_key=_key(keys))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1, 1 << 31], dtype=np.uint64))
