"""Counter-based splittable randomness.

Every random quantity in this package is a pure function of a 64-bit key and
a counter (usually a vertex id or a replicate index).  Samples are therefore
independent of traversal order, chunking, and worker count, and any single
replicate can be regenerated in isolation.  The mixer is the splitmix64
finalizer, which has full avalanche and is the standard choice for stateless
keyed streams.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _finalize(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 scalars or arrays (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def hash_u64(key: int, counter) -> np.ndarray:
    """Hash (key, counter) pairs to uint64.  `counter` may be a scalar or array."""
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(key & _MASK64) + (c + np.uint64(1)) * _GOLDEN
    return _finalize(state)


def uniforms(key: int, counter) -> np.ndarray:
    """Uniform doubles in [0, 1), one per counter, reproducible by (key, counter)."""
    bits = hash_u64(key, counter)
    return (bits >> np.uint64(11)).astype(np.float64) * (2.0**-53)


def derive(key: int, *tags: int) -> int:
    """Derive an independent subkey from a key and integer tags.

    Used to split one user-facing seed into streams for distinct purposes
    (edge values, walk steps, replicate indices) without correlation.
    """
    k = np.uint64(key & _MASK64)
    for t in tags:
        with np.errstate(over="ignore"):
            k = _finalize((k ^ _finalize(np.uint64(t & _MASK64))) + _GOLDEN)
    return int(k)


def generator(key: int, *tags: int) -> np.random.Generator:
    """A numpy Generator seeded from (key, tags); for sequential sampling."""
    return np.random.Generator(np.random.PCG64(derive(key, *tags)))
