"""Deterministic pseudo-random number generation.

Everything that needs randomness in this package (demo model weights,
augmentation parameter sampling) draws from this xorshift64* generator so
that outputs are bit-identical across platforms and Python versions.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D


class Xorshift64Star:
    """xorshift64* generator (Vigna 2014). State must be nonzero."""

    def __init__(self, seed: int):
        seed &= MASK64
        if seed == 0:
            # xorshift has a zero fixed point; remap like splitmix would.
            seed = 0x9E3779B97F4A7C15
        self.state = seed

    def next_u64(self) -> int:
        x = self.state
        x ^= (x >> 12)
        x ^= (x << 25) & MASK64
        x ^= (x >> 27)
        self.state = x
        return (x * _MULT) & MASK64

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 bits of mantissa."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive (rejection-free modulo)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError("empty range")
        return lo + self.next_u64() % span

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]


def mix64(*parts: int) -> int:
    """Combine integers into one 64-bit seed (splitmix64 finalizer chain).

    Used to derive independent per-item streams from a batch seed so work
    can be scheduled in any order without changing results.
    """
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h + (p & MASK64)) & MASK64
        h ^= h >> 30
        h = (h * 0xBF58476D1CE4E5B9) & MASK64
        h ^= h >> 27
        h = (h * 0x94D049BB133111EB) & MASK64
        h ^= h >> 31
    return h
