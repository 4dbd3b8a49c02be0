"""Seeded random streams.

Every stream is a PCG64 generator keyed by ``SeedSequence(seed, spawn_key=key)``.
The first element of ``key`` names the consumer and the rest indexes it, so
sample ``i`` of a mask set always sees the same uniforms no matter how many
samples are drawn or in which order (or on which worker) they are drawn.
"""

import numpy as np

MASK_STREAM = 0
QKV_STREAM = 1
COLLISION_STREAM = 2
HASH_STREAM = 3
POWER_ITER_STREAM = 4


def child_rng(seed, *key):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
