"""Statistical check that the server's view does not depend on the workload.

For two logical workloads of equal length, many seeded runs collect the
leaves read by ReadPath, the eviction leaves and the per-access physical
trace lengths. Read leaves must look uniform and equally distributed for
both workloads; eviction leaves and trace lengths must match exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..meta import bit_reversal
from ..params import TreeParams
from ..succinct import SuccinctOram


@dataclass
class RunView:
    read_leaves: np.ndarray
    evict_leaves: np.ndarray
    trace_lengths: np.ndarray
    table_accesses: np.ndarray


def observe(params: TreeParams, workload, seed, tables: str = "memory",
            backend: str | None = None) -> RunView:
    """Run one workload and keep only what the server sees per access."""
    oram = SuccinctOram(params, tables=tables, seed=seed, record_trace=False,
                        backend=backend, log_leaves=True)
    oram.init()
    store = oram.store
    lengths = np.empty(len(workload), dtype=np.int64)
    tabs = np.empty(len(workload), dtype=np.int64)
    for k, a in enumerate(workload):
        before, t_before = store.transfers, oram.table_accesses()
        oram.read(int(a))
        lengths[k] = store.transfers - before
        tabs[k] = oram.table_accesses() - t_before
    return RunView(np.asarray(oram.log.read_leaves, dtype=np.int64),
                   np.asarray(oram.log.evict_leaves, dtype=np.int64), lengths, tabs)


@dataclass
class SecurityReport:
    config: dict
    samples: int
    alpha: float
    n_tests: int
    p_uniform_a: float
    p_uniform_b: float
    p_two_sample: float
    trace_lengths_equal: bool
    evictions_equal: bool
    table_accesses_equal: bool
    trace_length: int
    extra: dict = field(default_factory=dict)

    @property
    def threshold(self) -> float:
        return self.alpha / self.n_tests

    @property
    def checks(self) -> dict:
        t = self.threshold
        return {"trace_lengths_equal": self.trace_lengths_equal,
                "evictions_equal": self.evictions_equal,
                "table_accesses_equal": self.table_accesses_equal,
                "uniform_a": self.p_uniform_a > t,
                "uniform_b": self.p_uniform_b > t,
                "two_sample": self.p_two_sample > t}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"experiment": "security", "config": self.config, "seeds": self.samples,
                "statistics": {"alpha": self.alpha, "bonferroni_tests": self.n_tests,
                               "threshold": self.threshold,
                               "p_uniform_a": self.p_uniform_a,
                               "p_uniform_b": self.p_uniform_b,
                               "p_two_sample": self.p_two_sample,
                               "trace_length_per_access": self.trace_length, **self.extra},
                "pass": self.checks, "passed": self.passed}


def uniformity_p(hist: np.ndarray) -> float:
    return float(stats.chisquare(hist).pvalue)


def two_sample_p(hist_a: np.ndarray, hist_b: np.ndarray) -> float:
    table = np.vstack([hist_a, hist_b])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2 or np.array_equal(hist_a, hist_b):
        return 1.0
    return float(stats.chi2_contingency(table, correction=False).pvalue)


def security_test(params: TreeParams, workload_a, workload_b, samples: int = 200,
                  tables: str = "memory", alpha: float = 0.01, seed0: int = 0,
                  backend: str | None = None) -> SecurityReport:
    """Compare the server view of two equal-length workloads over ``samples`` seeds.

    Seed ``seed0 + s`` drives both workloads' run ``s``. Read-leaf
    histograms are pooled over all runs.
    """
    workload_a, workload_b = list(workload_a), list(workload_b)
    if len(workload_a) != len(workload_b):
        raise ValueError("workloads must have equal length")
    n = len(workload_a)
    bins = params.leaves
    hist_a = np.zeros(bins, dtype=np.int64)
    hist_b = np.zeros(bins, dtype=np.int64)
    expected_evict = np.array([bit_reversal(g % bins, params.L) for g in range(n)], dtype=np.int64)
    lengths = None
    lengths_equal = evict_equal = tabs_equal = True
    tab_ref = None
    for s in range(samples):
        for wl, hist in ((workload_a, hist_a), (workload_b, hist_b)):
            v = observe(params, wl, seed0 + s, tables, backend)
            hist += np.bincount(v.read_leaves, minlength=bins)
            if lengths is None:
                lengths = v.trace_lengths
            lengths_equal &= bool(np.array_equal(v.trace_lengths, lengths))
            evict_equal &= bool(np.array_equal(v.evict_leaves, expected_evict))
            if tab_ref is None:
                tab_ref = v.table_accesses
            tabs_equal &= bool(np.array_equal(v.table_accesses, tab_ref))
    constant = lengths is not None and len(lengths) > 0 and bool(np.all(lengths == lengths[0]))
    config = {"N": params.N, "B": params.B, "Z": params.Z, "L": params.L, "M": params.M,
              "construction": params.construction.value, "tables": tables, "length": n}
    return SecurityReport(
        config, samples, alpha, 3,
        uniformity_p(hist_a) if n else 1.0, uniformity_p(hist_b) if n else 1.0,
        two_sample_p(hist_a, hist_b),
        lengths_equal and (constant or n == 0), evict_equal, tabs_equal,
        int(lengths[0]) if n else 0,
        {"read_leaf_samples": int(hist_a.sum())})
