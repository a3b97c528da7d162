"""Portable 64-bit PRNG used wherever reproducibility must survive
platform and library-version changes (dataset splits, epoch shuffles,
toy-encoder weight tables).

The generator is SplitMix64 (Steele, Lea & Flood; the reference stream used
by the xoshiro family): state advances by the golden-ratio constant and the
output is a 3-round xor-multiply finalizer. Implemented here in plain
integer arithmetic so streams are bit-identical everywhere.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, *tags: int) -> int:
    """Derive a child seed from a base seed and integer tags.

    Used to give each epoch / repeat / table its own stream without the
    streams ever colliding: each tag folds in one SplitMix64 step.
    """
    state = seed & _MASK64
    for tag in tags:
        state = _finalize((state + ((tag + 1) * _GOLDEN)) & _MASK64)
    return state


class SplitMix64:
    """Deterministic uniform generator over 64-bit ints and [0, 1) doubles."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _finalize(self._state)

    def uniform(self) -> float:
        # 53 high bits -> double in [0, 1)
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def randbelow(self, n: int) -> int:
        """Uniform int in [0, n) via rejection sampling (no modulo bias)."""
        if n <= 0:
            raise ValueError(f"randbelow requires n >= 1, got {n}")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, iterating from the last index down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
