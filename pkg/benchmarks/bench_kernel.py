#!/usr/bin/env python3
"""Compiled vs pure-Python kernel: accesses per second on each construction.

Both backends run the same seeded workload; the benchmark also checks that
they return the same values and leave the server in the same state, so a
speedup never comes from doing different work.

    python benchmarks/bench_kernel.py --N 2^12 --accesses 2000
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from succinct_oram import kernel
from succinct_oram.cli import _int
from succinct_oram.params import derive_params_t1, derive_params_t2
from succinct_oram.path_oram import PathOram, initial_payloads
from succinct_oram.succinct import SuccinctOram


@dataclass
class Timing:
    case: str
    backend: str
    accesses: int
    seconds: float

    @property
    def us_per_access(self) -> float:
        return 1e6 * self.seconds / max(self.accesses, 1)


def make(case: str, N: int, B: int, backend: str):
    if case == "path":
        return PathOram(N, B, 4, seed=1, record_trace=False, backend=backend)
    if case == "path-recursive":
        return PathOram(N, B, 4, position_map="recursive", seed=1, record_trace=False,
                        backend=backend)
    if case.startswith("t1"):
        p = derive_params_t1(N, 16, 4, B)
    else:
        p = derive_params_t2(N, 16, 1, B)
    tables = "outsourced" if case.endswith("-out") else "memory"
    return SuccinctOram(p, tables=tables, seed=1, record_trace=False, backend=backend)


def drive(oram, addrs, writes, vals):
    out = []
    for a, w, v in zip(addrs, writes, vals):
        out.append(oram.write(a, v) if w else oram.read(a))
    return out


def bench_case(case, N, B, n, backends, repeat):
    rng = np.random.default_rng(7)
    addrs = rng.integers(0, N, n).tolist()
    writes = (rng.random(n) < 0.5).tolist()
    vals = [rng.integers(0, 256, B // 8, dtype=np.uint8).tobytes() for _ in range(n)]
    timings, outputs, cells = [], {}, {}
    for be in backends:
        best = float("inf")
        for _ in range(repeat):
            o = make(case, N, B, be)
            o.init(initial_payloads(N, B, 1))
            t0 = time.perf_counter()
            res = drive(o, addrs, writes, vals)
            best = min(best, time.perf_counter() - t0)
        outputs[be], cells[be] = res, o.store.cells.copy()
        timings.append(Timing(case, be, n, best))
    ref = backends[0]
    same = all(outputs[b] == outputs[ref] and np.array_equal(cells[b], cells[ref])
               for b in backends[1:])
    return timings, same


def bench_bins(bins, balls, backends, repeat):
    rng = np.random.default_rng(3)
    a = rng.integers(0, bins, balls, dtype=np.int64)
    b = rng.integers(0, bins, balls, dtype=np.int64)
    out, loads = [], {}
    for be in backends:
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            loads[be] = kernel.two_choice_loads(a, b, bins, be)
            best = min(best, time.perf_counter() - t0)
        out.append(Timing("two-choice-bins", be, balls, best))
    same = all(np.array_equal(loads[x], loads[backends[0]]) for x in backends[1:])
    return out, same


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=_int, default=1 << 12)
    ap.add_argument("--B", type=_int, default=256)
    ap.add_argument("--accesses", type=_int, default=2000)
    ap.add_argument("--repeat", type=int, default=3, help="best of this many runs")
    ap.add_argument("--cases", default="path,path-recursive,t1,t1-out,t2,t2-out")
    ap.add_argument("--json", action="store_true", help="one JSON record per timing")
    args = ap.parse_args(argv)

    backends = sorted(kernel.BACKENDS)
    if len(backends) < 2:
        print("compiled kernel not built; timing the fallback only", file=sys.stderr)
    rows, mismatched = [], []
    for case in args.cases.split(","):
        t, same = bench_case(case, args.N, args.B, args.accesses, backends, args.repeat)
        rows += t
        if not same:
            mismatched.append(case)
    t, same = bench_bins(1 << 14, 1 << 20, backends, args.repeat)
    rows += t
    if not same:
        mismatched.append("two-choice-bins")

    if args.json:
        for r in rows:
            print(json.dumps({**asdict(r), "us_per_op": r.us_per_access}))
    else:
        by_case: dict[str, dict[str, Timing]] = {}
        for r in rows:
            by_case.setdefault(r.case, {})[r.backend] = r
        print(f"{'case':<16} " + " ".join(f"{b + ' us/op':>14}" for b in backends) + f" {'speedup':>8}")
        for case, d in by_case.items():
            cols = " ".join(f"{d[b].us_per_access:>14.2f}" for b in backends)
            sp = (d["python"].seconds / d["cython"].seconds) if len(d) > 1 else float("nan")
            print(f"{case:<16} {cols} {sp:>7.1f}x")
    if mismatched:
        print("backends disagree on: " + ", ".join(mismatched), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
