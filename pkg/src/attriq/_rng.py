"""Fixed-width integer RNG primitives.

The mock image renderer and the weight matrix of the deterministic embedding
backend both need byte-stable randomness across platforms and interpreter
versions, which numpy's Generator API does not promise across major releases.
splitmix64 and xoshiro256** (Blackman & Vigna) are implemented here directly
on 64-bit wrapping arithmetic.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def mix64(value: int) -> int:
    """One-shot splitmix64 finalizer, usable as a 64-bit hash."""
    return splitmix64(value & _MASK)[1]


def mix64_array(values: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` over a uint64 array."""
    with np.errstate(over="ignore"):
        x = (values.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15))
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


class Xoshiro256StarStar:
    """xoshiro256** with the reference splitmix64 seeding scheme."""

    def __init__(self, seed: int):
        state = seed & _MASK
        self._s = []
        for _ in range(4):
            state, word = splitmix64(state)
            self._s.append(word)

    @staticmethod
    def _rotl(x: int, k: int) -> int:
        return ((x << k) | (x >> (64 - k))) & _MASK

    def next_uint64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (self._rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = self._rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def next_double(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_uint64() >> 11) * (2.0**-53)
