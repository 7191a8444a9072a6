"""Counter-based random streams for reproducible parallel sampling.

Every draw is a pure function of (seed, iteration, sample, draw index), so
sampled batches are identical no matter how many worker threads evaluate
them. The generator is a splitmix64 mix of the counter feeding a Box-Muller
transform; each stream is keyed per sample.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / float(1 << 53)


@njit(cache=True, inline="always")
def mix64(x):
    x = (x + _GOLDEN) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline="always")
def stream_key(seed, iteration, sample):
    k = mix64(np.uint64(seed) ^ mix64(np.uint64(iteration)))
    return mix64(k ^ mix64(np.uint64(sample) + np.uint64(1)))


@njit(cache=True, inline="always")
def uniform(key, counter):
    """Uniform double in (0, 1), open at both ends."""
    word = mix64(key + (np.uint64(counter) + np.uint64(1)) * _GOLDEN)
    return (float(word >> np.uint64(11)) + 0.5) * _U53


@njit(cache=True, inline="always")
def normal_pair(key, counter):
    """Two independent standard normals from one counter slot."""
    u1 = uniform(key, np.uint64(2) * np.uint64(counter))
    u2 = uniform(key, np.uint64(2) * np.uint64(counter) + np.uint64(1))
    r = math.sqrt(-2.0 * math.log(u1))
    ang = 2.0 * math.pi * u2
    return r * math.cos(ang), r * math.sin(ang)
