"""Counter-based random numbers keyed by (seed, stream, particle, counter).

Every draw is a pure function of its key, so a particle's random stream does
not depend on how particles are split between workers.  The mixing function
is the SplitMix64 finaliser; per-particle keys are derived by hashing the
seed, stream id and particle index, and successive draws advance a per-particle
counter.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_MASK64 = (1 << 64) - 1


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def particle_keys(seed, stream, index):
    """64-bit key for each particle index under (seed, stream)."""
    base = mix64(np.uint64(seed & _MASK64) ^ mix64(np.uint64((stream + 1) & _MASK64)))
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64(base ^ mix64(idx * _GOLDEN + _GOLDEN))


def uniforms(keys, counters):
    """Uniform doubles in [0, 1) for each (key, counter) pair (53-bit resolution)."""
    with np.errstate(over="ignore"):
        z = mix64(np.asarray(keys, dtype=np.uint64)
                  + (np.asarray(counters, dtype=np.uint64) + np.uint64(1)) * _GOLDEN)
    return (z >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniform_block(keys, counters, k):
    """``k`` consecutive uniforms per particle starting at ``counters``; shape (n, k)."""
    counters = np.asarray(counters, dtype=np.uint64)
    offs = np.arange(k, dtype=np.uint64)
    return uniforms(np.asarray(keys)[:, None], counters[:, None] + offs[None, :])


def exponentials(keys, counters, rate):
    """Exponential(rate) variates; rate 0 gives +inf."""
    u = uniforms(keys, counters)
    if rate <= 0:
        return np.full(u.shape, np.inf)
    return -np.log1p(-u) / rate
