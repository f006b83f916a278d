"""Deterministic random substreams.

Paths are simulated in fixed-size blocks. Block ``k`` of a job draws from a
PCG64 generator seeded by ``SeedSequence(seed, spawn_key=(*namespace, k))``,
so results depend only on the master seed, the job namespace and the path
index, never on how blocks are spread over workers.
"""

from __future__ import annotations

import zlib

import numpy as np

BLOCK_SIZE = 1024


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)) and part >= 0:
        return int(part)
    raise TypeError(f"stream key parts must be str or nonnegative int, got {part!r}")


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; strings are hashed stably."""
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    spawn_key = tuple(_key(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=spawn_key)))


def blocks(n_paths: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    """Split ``n_paths`` into ``(block_index, size)`` pairs of at most block_size."""
    out = []
    k = 0
    start = 0
    while start < n_paths:
        size = min(block_size, n_paths - start)
        out.append((k, size))
        start += size
        k += 1
    return out
