"""Counter-based random streams.

Every draw in the package is keyed by (master seed, stream index) through
Philox, so parallel and serial runs consume identical randomness and any
single sample can be regenerated in isolation.
"""

from __future__ import annotations

import numpy as np

# Philox-4x64 takes a 2-word key; word 0 is the master seed, word 1 the
# stream index (sample index, walk block, ...).
_MASK = (1 << 64) - 1


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, index)."""
    key = np.array([seed & _MASK, index & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def substream_seed(seed: int, index: int) -> int:
    """Stable 64-bit derived seed (for kernels with their own RNG)."""
    # splitmix64 over the combined words; cheap and well mixed.
    z = (seed ^ (index * 0x9E3779B97F4A7C15)) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


class SeedLineage:
    """Record of how randomness was derived, carried by results."""

    __slots__ = ("seed", "indices")

    def __init__(self, seed: int, indices: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.indices = tuple(int(i) for i in indices)

    def child(self, index: int) -> "SeedLineage":
        return SeedLineage(self.seed, self.indices + (index,))

    def generator(self) -> np.random.Generator:
        idx = 0
        for i in self.indices:
            idx = (idx * 0x100000001B3 + i + 1) & _MASK
        return stream(self.seed, idx)

    def as_dict(self) -> dict:
        return {"seed": self.seed, "indices": list(self.indices)}

    def __repr__(self):
        return f"SeedLineage(seed={self.seed}, indices={self.indices})"
