"""Deterministic counter-based random number generator.

A splitmix64 stream: the state advances by a fixed odd constant and each
output is a bijective mix of the counter, so scalar and vectorized draws
produce the same sequence on every platform.  Used for all randomness in
the package (weight init, data shuffling, scene sampling) so that runs
are reproducible bit-for-bit from a single integer seed.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * _MIX1 & _MASK64
    z = (z ^ (z >> 27)) * _MIX2 & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, salt: int) -> int:
    """Stable sub-stream seed for (seed, salt), e.g. one per training epoch."""
    return _mix64((seed + salt * _GAMMA) & _MASK64)


class Rng:
    """splitmix64 generator with save/restorable counter state."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._state = self.seed

    # -- state round-trip (checkpointing) --------------------------------

    def get_state(self) -> int:
        return self._state

    def set_state(self, state: int) -> None:
        self._state = state & _MASK64

    # -- draws ------------------------------------------------------------

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return _mix64(self._state)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        u = self.next_u64() >> 11  # 53 high bits -> [0, 1) double
        return low + (high - low) * (u * 2.0**-53)

    def uniform_array(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Vectorized draw; consumes exactly prod(shape) counter steps."""
        n = int(np.prod(shape)) if shape else 1
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        counters = np.uint64(self._state) + steps
        self._state = (self._state + _GAMMA * n) & _MASK64
        z = counters
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)

    def randint(self, n: int) -> int:
        """Integer in [0, n). Modulo bias is irrelevant at these scales."""
        if n <= 0:
            raise ValueError(f"randint needs n > 0, got {n}")
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        self.shuffle(items)
        return items
