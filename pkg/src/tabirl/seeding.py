"""Counter-based randomness.

Every random draw in the package is a pure function of an integer seed and a
counter, computed with the splitmix64 finalizer. This lets a batch of
episodes be sampled in one vectorized pass while each episode still depends
only on its own derived seed ``mix64(seed, k)``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MUL1 = 0xBF58476D1CE4E5B9
MUL2 = 0x94D049BB133111EB


def _splitmix_array(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MUL2)
    return z ^ (z >> np.uint64(31))


def _as_u64(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x.astype(np.uint64, copy=False)
    return np.asarray(np.uint64(int(x) & MASK64))


def splitmix64(x):
    """splitmix64 finalizer; accepts python ints or uint64 arrays."""
    out = _splitmix_array(np.atleast_1d(_as_u64(x)))
    if np.ndim(x) == 0 and not isinstance(x, np.ndarray):
        return int(out[0])
    return out


def mix64(a, b):
    """Derive a child seed from ``a`` and counter ``b``.

    ``mix64(a, b) = splitmix64((splitmix64(a) + b) mod 2**64)``. Either
    argument may be a uint64 array; python ints give a python int back.
    """
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0 and not isinstance(a, np.ndarray) and not isinstance(b, np.ndarray)
    ha = _splitmix_array(np.atleast_1d(_as_u64(a)))
    bb = np.atleast_1d(_as_u64(b))
    out = _splitmix_array(ha + bb)
    if scalar:
        return int(out[0])
    return out


def uniforms(seeds, counter: int) -> np.ndarray:
    """Uniform floats in [0, 1), one per seed, for the given counter slot."""
    bits = mix64(np.atleast_1d(_as_u64(seeds)), np.uint64(counter))
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of one index per row of ``probs`` (shape n x m)."""
    cdf = np.cumsum(probs, axis=-1)
    # dividing by the last entry makes it exactly 1.0, so u < 1 never overflows
    cdf = cdf / cdf[..., -1:]
    return (u[:, None] >= cdf).sum(axis=-1)
