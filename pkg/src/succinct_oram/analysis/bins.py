"""Balls-into-bins with one or two choices."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernel
from ..rng import seed_sequence


@dataclass
class BinsExperiment:
    bins: int
    balls: int
    choices: int
    seed: int
    loads: np.ndarray = field(repr=False)

    @property
    def max_load(self) -> int:
        return int(self.loads.max())

    @property
    def mean(self) -> float:
        return self.balls / self.bins

    @property
    def gap(self) -> float:
        return self.max_load - self.mean

    def summary(self) -> dict:
        return {"bins": self.bins, "balls": self.balls, "choices": self.choices,
                "seed": self.seed, "max_load": self.max_load, "gap": self.gap}


def run_bins(bins: int, balls: int, choices: int = 1, seed=0,
             backend: str | None = None) -> BinsExperiment:
    """Throw ``balls`` balls; with two choices each goes to the lesser
    loaded of two uniform bins, ties to the first draw."""
    if bins < 1 or balls < 1:
        raise ValueError("bins and balls must be >= 1")
    if choices not in (1, 2):
        raise ValueError("choices must be 1 or 2")
    rng = np.random.Generator(np.random.PCG64(seed_sequence(seed)))
    if choices == 1:
        loads = np.bincount(rng.integers(0, bins, size=balls), minlength=bins)
    else:
        draws = rng.integers(0, bins, size=(balls, 2), dtype=np.int64)
        loads = kernel.two_choice_loads(np.ascontiguousarray(draws[:, 0]),
                                        np.ascontiguousarray(draws[:, 1]), bins, backend)
    return BinsExperiment(bins, balls, choices, seed if isinstance(seed, int) else -1,
                          np.asarray(loads, dtype=np.int64))


def one_choice_threshold(bins: int, balls: int, g: float) -> float:
    """mean + g*sqrt(mean*lg bins): the leaf-capacity shape for one choice."""
    L = math.log2(bins)
    return balls / bins + g * math.sqrt(balls * L / bins)


def two_choice_gap_threshold(bins: int, slack: float = 5.0) -> float:
    return math.log2(math.log2(bins)) + slack if bins > 2 else slack
