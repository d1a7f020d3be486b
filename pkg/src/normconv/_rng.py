"""Seeded random streams.

Replicates are grouped into fixed-size blocks; block ``k`` of stream ``tag``
always draws from ``SeedSequence(seed, spawn_key=(tag, k))``.  Results are
therefore identical however the blocks are scheduled.
"""
import zlib

import numpy as np

BLOCK = 1000


def _tag(name):
    return zlib.crc32(name.encode("utf-8"))


def generator(seed, stream="main", block=0):
    ss = np.random.SeedSequence(int(seed), spawn_key=(_tag(stream), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def blocks(count, seed, stream="main", block_size=BLOCK):
    """Yield ``(start, stop, rng)`` covering ``range(count)``."""
    for k, start in enumerate(range(0, int(count), block_size)):
        yield start, min(start + block_size, int(count)), generator(seed, stream, k)


def child_seed(seed, *keys):
    """A 63-bit seed derived from ``seed`` and integer ``keys``."""
    ss = np.random.SeedSequence([int(seed)] + [int(k) for k in keys])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
