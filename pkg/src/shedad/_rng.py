"""Portable seeded generator used for random-day selection.

SplitMix64 (Steele, Lea & Flood 2014) keeps a single 64-bit state word, so a
selection can be reproduced bit for bit in any language:

    state  = (state + 0x9E3779B97F4A7C15) mod 2**64
    z      = state
    z      = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
    z      = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
    output = z ^ (z >> 31)

Bounded draws use rejection sampling (no modulo bias) and sampling without
replacement is a partial Fisher-Yates shuffle over the sorted candidates.
"""

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def bounded(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)``."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - bound) % bound
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % bound


def sample_without_replacement(items, r: int, seed: int) -> list:
    """Draw ``r`` distinct elements of ``items`` (taken in sorted order)."""
    pool = sorted(items)
    if r < 0 or r > len(pool):
        raise ValueError(f"cannot draw {r} items from {len(pool)}")
    rng = SplitMix64(seed)
    for i in range(r):
        j = i + rng.bounded(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:r]
