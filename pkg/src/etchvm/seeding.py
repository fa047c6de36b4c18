"""Deterministic seed derivation.

One user-facing seed fans out into named, independent streams (split, init,
dropout, noise, ...). Names are hashed with CRC32 so the tree is stable
across Python processes, unlike ``hash()``.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, *path: str) -> int:
    """Return a 63-bit integer seed for the stream at ``path`` under ``root``."""
    key = tuple(zlib.crc32(p.encode("utf-8")) for p in path)
    ss = np.random.SeedSequence(entropy=int(root) & (2**64 - 1), spawn_key=key)
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def derive_rng(root: int, *path: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *path))
