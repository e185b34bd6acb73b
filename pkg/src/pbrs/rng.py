"""Portable seeded random streams.

The generator is SplitMix64: a 64-bit Weyl counter passed through a fixed
avalanche mix.  It is small enough to port verbatim to any language, so
seeded runs replay identically everywhere.  Named sub-streams are derived by
mixing the parent seed with an FNV-1a hash of the sub-stream name.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


class RngStream:
    """SplitMix64 stream.

    >>> a, b = RngStream(7), RngStream(7)
    >>> [a.next_u64() for _ in range(3)] == [b.next_u64() for _ in range(3)]
    True
    """

    __slots__ = ("seed", "_state")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._state = self.seed

    @property
    def counter(self) -> int:
        return self._state

    def spawn(self, *names: object) -> "RngStream":
        """Independent child stream keyed by ``names``; does not advance self."""
        key = self.seed
        for name in names:
            key = mix64((key ^ fnv1a64(str(name))) & MASK64)
        return RngStream(key)

    def next_u64(self) -> int:
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        return mix64(self._state)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        self._state = (self._state + GOLDEN_GAMMA) & MASK64
        return (mix64(self._state) >> 11) * _INV_2_53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def integers(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the top of the 64-bit range."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        limit = MASK64 - (MASK64 + 1) % n
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % n

    def choice_distinct(self, n: int, k: int) -> list[int]:
        """``k`` distinct indices from ``range(n)`` (Floyd's algorithm), in draw order."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        chosen: dict[int, None] = {}
        for j in range(n - k, n):
            t = self.integers(j + 1)
            chosen[j if t in chosen else t] = None
        return list(chosen)

    def normal(self) -> float:
        # Box-Muller; 1 - u keeps the log argument in (0, 1].
        u1 = 1.0 - self.random()
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed:#x}, counter={self._state:#x})"
