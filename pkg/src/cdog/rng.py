"""Portable seeded random streams.

All synthetic data is drawn from xoshiro256++ seeded through SplitMix64, with
Gaussian variates produced by Box-Muller on the high 53 bits of each draw.
The algorithms are fully specified here so datasets can be regenerated
bit-for-bit by any other implementation.
"""

from __future__ import annotations

import hashlib
import math

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; returns ``(new_state, output)``."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def derive_seed(*parts: object) -> int:
    """Hash an arbitrary tuple of values into a 64-bit seed.

    Floats are rendered with ``repr`` so that e.g. ``0.25`` and ``0.250`` agree.
    """
    text = "|".join(repr(float(p)) if isinstance(p, float) else str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Xoshiro256pp:
    """xoshiro256++ generator with uniform and Gaussian helpers."""

    def __init__(self, seed: int):
        sm = seed & _MASK64
        state = []
        for _ in range(4):
            sm, out = splitmix64_next(sm)
            state.append(out)
        self._s = state
        self._spare: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in ``[0, 1)`` from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def gauss(self, sigma: float = 1.0) -> float:
        """Zero-mean normal variate; Box-Muller pairs are consumed in order."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return sigma * z
        u1 = 1.0 - self.random()  # (0, 1], keeps log finite
        u2 = self.random()
        radius = math.sqrt(-2.0 * math.log(u1))
        angle = 2.0 * math.pi * u2
        self._spare = radius * math.sin(angle)
        return sigma * radius * math.cos(angle)

    def sample(self, population: list[int], k: int) -> list[int]:
        """Choose ``k`` distinct items by a partial Fisher-Yates shuffle."""
        pool = list(population)
        if not 0 <= k <= len(pool):
            raise ValueError("sample size out of range")
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
