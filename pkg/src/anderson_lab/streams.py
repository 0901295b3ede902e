"""Counter-based random streams.

Every draw is a pure function of ``(key, counter)`` built from the SplitMix64
finalizer, so a value never depends on how many other values were drawn before it
or on which worker drew it. All functions are vectorized over numpy arrays.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def mix64(z) -> np.ndarray:
    """SplitMix64 output function (a bijection on 64-bit words)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _as_u64(value) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype == np.uint64:
        return arr
    if arr.dtype.kind in "iu":
        return arr.astype(np.int64).view(np.uint64) if arr.dtype.kind == "i" else arr.astype(np.uint64)
    return np.asarray(int(value) & _MASK64, dtype=np.uint64)


def derive_seed(master: int, *path: int) -> int:
    """Child seed for the work item addressed by ``path`` under ``master``."""
    z = _as_u64(int(master) & _MASK64)
    with np.errstate(over="ignore"):
        for p in path:
            z = mix64(z + _GOLDEN * (_as_u64(int(p) & _MASK64) + np.uint64(1)))
    return int(z)


def raw_bits(key, counter, draw: int = 0) -> np.ndarray:
    """64 random bits for each ``(key, counter)`` pair (broadcasting)."""
    key = _as_u64(key)
    counter = _as_u64(counter)
    with np.errstate(over="ignore"):
        k = mix64(key ^ np.uint64(0x6A09E667F3BCC909))
        c = mix64(counter * _GOLDEN + np.uint64(draw) * np.uint64(0x3C6EF372FE94F82B))
        return mix64(k + c)


def uniform(key, counter, draw: int = 0) -> np.ndarray:
    """Doubles in ``[0, 1)`` with 53 random bits."""
    return (raw_bits(key, counter, draw) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def signs(key, counter, draw: int = 0) -> np.ndarray:
    """Fair +-1 values taken from the top bit."""
    top = (raw_bits(key, counter, draw) >> np.uint64(63)).astype(np.int8)
    return (1 - 2 * top).astype(np.float64)


def normal(key, counter) -> np.ndarray:
    """Standard normals by Box-Muller on two independent uniform draws."""
    u1 = uniform(key, counter, 0)
    u2 = uniform(key, counter, 1)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
