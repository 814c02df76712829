"""Logical access sequences."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

KINDS = ("scan", "uniform", "single", "trace")


@dataclass
class Workload:
    """``kind`` is scan (0..N-1 repeated), uniform, single (one address
    hammered) or trace (addresses read from ``path``)."""
    kind: str = "uniform"
    length: int | None = None
    seed: int = 0
    address: int = 0
    path: str | None = None
    write_fraction: float = 0.0

    def __post_init__(self):
        aliases = {"uniform-random": "uniform", "random": "uniform",
                   "single-address": "single", "hammer": "single",
                   "custom": "trace", "custom-trace-file": "trace"}
        self.kind = aliases.get(self.kind, self.kind)
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.kind == "trace" and not self.path:
            raise ValueError("trace workload needs a path")
        if self.length is not None and self.length < 0:
            raise ValueError("length must be >= 0")
        if not 0.0 <= self.write_fraction <= 1.0:
            raise ValueError("write_fraction must be in [0, 1]")

    def addresses(self, N: int) -> np.ndarray:
        if self.kind == "trace":
            addrs = read_trace_file(self.path)
            if self.length is not None:
                addrs = addrs[: self.length]
        else:
            n = N if self.length is None else self.length
            if self.kind == "scan":
                addrs = np.arange(n, dtype=np.int64) % N
            elif self.kind == "single":
                if not 0 <= self.address < N:
                    raise ValueError(f"address {self.address} out of range")
                addrs = np.full(n, self.address, dtype=np.int64)
            else:
                addrs = np.random.default_rng(self.seed).integers(0, N, size=n, dtype=np.int64)
        if len(addrs) and (addrs.min() < 0 or addrs.max() >= N):
            raise ValueError("workload address out of range")
        return addrs

    def ops(self, n: int) -> np.ndarray:
        """Boolean write mask, independent of the addresses."""
        if self.write_fraction == 0:
            return np.zeros(n, dtype=bool)
        return np.random.default_rng([self.seed, 1]).random(n) < self.write_fraction


def read_trace_file(path: str) -> np.ndarray:
    """One address per line, or CSV with an ``addr`` column."""
    with open(path, newline="") as fh:
        first = fh.readline()
        fh.seek(0)
        if "addr" in first:
            return np.array([int(r["addr"]) for r in csv.DictReader(fh)], dtype=np.int64)
        return np.array([int(line.split(",")[-1]) for line in fh if line.strip()], dtype=np.int64)
