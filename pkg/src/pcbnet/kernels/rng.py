"""Seeded random streams.

Generators are numpy ``PCG64`` bit generators keyed by
``SeedSequence(seed, spawn_key=(stream_id,))``.  Both algorithms are fully
specified by numpy and produce the same bits on every platform, so a
``(seed, stream_id)`` pair names one reproducible stream.
"""

import zlib

import numpy as np

# named streams used across the package; ints keep spawn keys stable
STREAMS = {
    "init": 1,
    "shuffle": 2,
    "split": 3,
    "folds": 4,
    "synth": 5,
}


def stream_key(stream_id):
    if isinstance(stream_id, str):
        return STREAMS.get(stream_id, zlib.crc32(stream_id.encode()) + 1024)
    return int(stream_id)


def seeded_rng(seed, stream_id=0):
    """Return a ``numpy.random.Generator`` for the ``(seed, stream_id)`` pair."""
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=(stream_key(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))
