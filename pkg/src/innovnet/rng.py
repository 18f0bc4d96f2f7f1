"""Seedable 64-bit generator shared by every stochastic stage.

SplitMix64 is used instead of `random` or numpy bit generators so that a
(seed, call sequence) pair reproduces the same draws bit-for-bit on any
platform or interpreter version. Bounded integers map the raw 64-bit word
with a modulo; for the spans used here (single digits to a few thousand)
the bias is below 2**-50 and irrelevant next to the uniformity tolerances
in the test suite.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash, used to key per-token and per-document streams."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


class SeededRng:
    """SplitMix64 stream: same seed, same sequence, forever."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def gauss(self) -> float:
        """Standard normal via Box-Muller; two uniforms per call."""
        u1 = self.random()
        while u1 == 0.0:
            u1 = self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def spawn(self, key: str | int) -> "SeededRng":
        """Independent substream for `key`; does not advance this stream.

        Streams for distinct keys are decorrelated by hashing the key into
        the seed, so per-document or per-year work can run in parallel
        without sharing state.
        """
        if isinstance(key, str):
            k = fnv1a64(key.encode("utf-8"))
        else:
            k = key & _MASK64
        return SeededRng(_mix(self._state ^ k))


def _mix(x: int) -> int:
    """One SplitMix64 output step, used to spread correlated seeds."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)
