"""Seeded randomness: one label stream per ORAM instance."""
from __future__ import annotations

import numpy as np


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


class LabelSource:
    """Uniform L-bit labels drawn in fixed-size batches.

    The stream only depends on the seed, not on how callers chunk their
    draws, so two instances built from the same seed see the same labels.
    """

    def __init__(self, seed, L: int, batch: int = 4096):
        self.L = L
        self._gen = np.random.Generator(np.random.PCG64(seed_sequence(seed)))
        self._batch = batch
        self._buf: list[int] = []
        self._i = 0
        self.drawn = 0

    def _refill(self) -> None:
        self._buf = self._gen.integers(0, 1 << self.L, size=self._batch, dtype=np.int64).tolist()
        self._i = 0

    def draw(self) -> int:
        if self._i == len(self._buf):
            self._refill()
        x = self._buf[self._i]
        self._i += 1
        self.drawn += 1
        return x

    def draw_many(self, n: int) -> np.ndarray:
        return np.fromiter((self.draw() for _ in range(n)), dtype=np.int64, count=n)


def garbage_key(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])
