"""Small deterministic PRNG for reproducible solver starting vectors.

xorshift64* with the usual multiplier. Self-contained so iteration counts are
bit-reproducible across numpy versions; numpy's own generators make no such
promise across releases.
"""

import numpy as np

_MASK = (1 << 64) - 1
_MULT = 2685821657736338717
_SEED_MIX = 0x9E3779B97F4A7C15


class XorShift:
    """xorshift64* stream; seed 0 is remapped so the state is never zero."""

    def __init__(self, seed: int):
        state = (int(seed) ^ _SEED_MIX) & _MASK
        if state == 0:
            state = _SEED_MIX
        self._state = state

    def next_u64(self) -> int:
        s = self._state
        s ^= (s >> 12)
        s ^= (s << 25) & _MASK
        s ^= (s >> 27)
        self._state = s
        return (s * _MULT) & _MASK

    def uniform(self, n: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
        """n floats in [low, high), from the top 53 bits of each output."""
        out = np.empty(n)
        scale = high - low
        for i in range(n):
            u = (self.next_u64() >> 11) * (2.0 ** -53)
            out[i] = low + scale * u
        return out
