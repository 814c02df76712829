"""Experiment orchestration: build an instance from a config, drive a
workload, check invariants and summarise the run."""
from __future__ import annotations

import json
import re
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .accounting import REFERENCE_ROWS, rescale, space_report
from .params import (Construction, ParamError, TreeParams, bandwidth_blocks,
                     derive_params_t1, derive_params_t2, path_oram_params)
from .path_oram import PathOram, initial_payloads
from .succinct import SuccinctOram
from .tree import IntegrityError
from .workloads import Workload

NO_GUARANTEE = "no security guarantee"


@dataclass
class RunConfig:
    construction: str = "t1"
    N: int = 1 << 14
    B: int = 1024
    Z: int | None = None
    L: int | None = None
    M: str | int | None = None
    f: float | None = None
    g: float | None = None
    eps: float | None = None
    tables: str = "memory"
    position_map: str = "memory"
    sub_Z: int = 5
    workload: str = "uniform"
    length: int | None = None
    address: int = 0
    trace_file: str | None = None
    write_fraction: float = 0.0
    seed: int = 0
    reps: int = 1
    stash_bound: int | None = None
    verify: bool = True
    audit_every: int = 0
    trajectory: bool = False
    backend: str | None = None


@dataclass
class Resolved:
    params: TreeParams
    aggressive: bool = False
    analog: dict | None = None


_ANALOG = re.compile(r"^(\d+)?-?analog$")


def resolve_params(cfg: RunConfig) -> Resolved:
    """TreeParams for ``cfg``: explicit (Z, L, M), derived from (f, g|eps),
    or an ``<M>-analog`` of an aggressive reference row."""
    c = Construction.parse(cfg.construction)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if c is Construction.PATH:
            p = path_oram_params(cfg.N, cfg.B, cfg.Z or 5, cfg.L)
            agg = any(r.setting == "aggressive" and r.construction is c and r.Z == p.Z
                      and r.L == p.L for r in REFERENCE_ROWS)
            return Resolved(p, agg)
        m = cfg.M
        if isinstance(m, str) and _ANALOG.match(m):
            want = _ANALOG.match(m).group(1)
            rows = [r for r in REFERENCE_ROWS if r.setting == "aggressive" and r.construction is c
                    and (want is None or r.M == int(want))]
            if not rows:
                raise ParamError(f"M: no aggressive {c.value} row with M={want}")
            a = rescale(rows[0].params(), cfg.N, cfg.B)
            for name in ("Z", "L"):
                given = getattr(cfg, name)
                if given is not None and given != getattr(a.params, name):
                    raise ParamError(f"{name}: {given} disagrees with the analog's "
                                     f"{name}={getattr(a.params, name)}")
            return Resolved(a.params, True, a.mapping())
        if m is not None:
            try:
                m = int(m)
            except ValueError:
                raise ParamError(f"M: expected an integer or '<M>-analog', got {m!r}") from None
            if cfg.L is None:
                raise ParamError("L: required when M is given")
            p = TreeParams.manual(cfg.N, cfg.B, cfg.Z or (3 if c is Construction.T1 else 4),
                                  cfg.L, m, c.value)
            agg = any(r.setting == "aggressive" and r.construction is c
                      and (r.Z, r.L, r.M) == (p.Z, p.L, p.M) for r in REFERENCE_ROWS)
            return Resolved(p, agg)
        if cfg.f is None:
            raise ParamError("f: give either (L, M) or f with g (t1) / eps (t2)")
        if c is Construction.T1:
            if cfg.g is None:
                raise ParamError("g: required to derive t1 parameters")
            return Resolved(derive_params_t1(cfg.N, cfg.f, cfg.g, cfg.B, cfg.Z))
        if cfg.eps is None:
            raise ParamError("eps: required to derive t2 parameters")
        return Resolved(derive_params_t2(cfg.N, cfg.f, cfg.eps, cfg.B, cfg.Z))


def build(cfg: RunConfig, params: TreeParams, seed):
    if params.construction is Construction.PATH:
        return PathOram(params.N, params.B, params.Z, params.L, position_map=cfg.position_map,
                        seed=seed, record_trace=False, backend=cfg.backend)
    return SuccinctOram(params, tables=cfg.tables, seed=seed, record_trace=False,
                        sub_oram={"Z": cfg.sub_Z, "position_map": cfg.position_map},
                        backend=cfg.backend)


@dataclass
class ExperimentResult:
    config: dict
    seed: int
    rep: int
    accesses: int
    max_stash: int
    final_stash: int
    init_overflow: int
    bandwidth_per_access: int | None
    bandwidth_constant: bool
    space: dict
    stash_after_scan: list[int] = field(default_factory=list)
    stash_trajectory: list[int] | None = None
    stash_bound_exceeded: bool = False
    problems: list[str] = field(default_factory=list)
    label: str | None = None
    analog: dict | None = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.problems and self.bandwidth_constant and not self.stash_bound_exceeded

    def record(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            del d["wall_time"]
        if d["stash_trajectory"] is None:
            del d["stash_trajectory"]
        d["ok"] = self.ok
        return d


def run_experiment(cfg: RunConfig, rep: int = 0, resolved: Resolved | None = None) -> ExperimentResult:
    """One repetition with seed ``cfg.seed + rep``."""
    res = resolved or resolve_params(cfg)
    p = res.params
    seed = cfg.seed + rep
    wl = Workload(cfg.workload, cfg.length, seed, cfg.address, cfg.trace_file, cfg.write_fraction)
    addrs = wl.addresses(p.N)
    writes = wl.ops(len(addrs))
    t0 = time.perf_counter()
    oram = build(cfg, p, seed)
    payloads = initial_payloads(p.N, p.B, seed) if cfg.verify else None
    overflow = oram.init(payloads)
    ref = [bytes(r) for r in payloads] if cfg.verify else None
    bw_expected = bandwidth_blocks(p)
    bw_ok = True
    problems: list[str] = []
    traj = [] if cfg.trajectory else None
    after_scan = []
    core = oram.core
    rng = np.random.default_rng([seed, 2])
    nbytes = p.block_bytes
    try:
        for k, (a, w) in enumerate(zip(addrs.tolist(), writes.tolist())):
            before = core.data_reads + core.data_writes
            if w:
                v = rng.integers(0, 256, nbytes, dtype=np.uint8).tobytes()
                old = oram.write(a, v)
            else:
                old = oram.read(a)
            if core.data_reads + core.data_writes - before != bw_expected:
                bw_ok = False
            if ref is not None:
                if old != ref[a]:
                    problems.append(f"access {k}: address {a} returned a stale value")
                    break
                if w:
                    ref[a] = v
            s = core.stash_size()
            if traj is not None:
                traj.append(s)
            if wl.kind == "scan" and (k + 1) % p.N == 0:
                after_scan.append(s)
            if cfg.audit_every and (k + 1) % cfg.audit_every == 0:
                problems += oram.audit()
                if problems:
                    break
    except IntegrityError as e:
        problems.append(str(e))
    if not problems:
        problems += oram.audit()
    wall = time.perf_counter() - t0
    space = space_report(p, "table2").to_dict()
    space["full"] = space_report(p, "full", tables=cfg.tables if p.construction is not Construction.PATH
                                 else ("outsourced" if cfg.position_map == "recursive" else "memory"),
                                 sub_Z=cfg.sub_Z).to_dict()
    return ExperimentResult(
        config=config_echo(cfg, p), seed=seed, rep=rep, accesses=len(addrs),
        max_stash=oram.max_stash, final_stash=oram.stash_size, init_overflow=overflow,
        bandwidth_per_access=bw_expected if len(addrs) else None, bandwidth_constant=bw_ok,
        space=space, stash_after_scan=after_scan, stash_trajectory=traj,
        stash_bound_exceeded=cfg.stash_bound is not None and oram.max_stash > cfg.stash_bound,
        problems=problems[:20], label=NO_GUARANTEE if res.aggressive else None,
        analog=res.analog, wall_time=wall)


def config_echo(cfg: RunConfig, p: TreeParams) -> dict:
    d = {k: v for k, v in asdict(cfg).items() if v is not None}
    d.update(resolved={"N": p.N, "B": p.B, "Z": p.Z, "L": p.L, "M": p.M,
                       "construction": p.construction.value})
    return d


def _job(args):
    cfg, rep, res = args
    return run_experiment(cfg, rep, res)


def run_reps(cfg: RunConfig, jobs: int = 1):
    """Yield results in repetition order; ``jobs > 1`` uses worker processes."""
    res = resolve_params(cfg)
    work = [(cfg, r, res) for r in range(cfg.reps)]
    if jobs <= 1:
        for w in work:
            yield _job(w)
    else:
        with ProcessPoolExecutor(jobs) as ex:
            yield from ex.map(_job, work)


def dry_run(cfg: RunConfig) -> dict:
    res = resolve_params(cfg)
    p = res.params
    t2 = space_report(p, "table2")
    out = {"config": config_echo(cfg, p), "bandwidth_per_access": bandwidth_blocks(p),
           "extra_space_over_N": t2.extra_blocks_over_N,
           "extra_space_exact": str(t2.extra_fraction),
           "space": t2.to_dict()}
    if res.aggressive:
        out["label"] = NO_GUARANTEE
    if res.analog:
        out["analog"] = res.analog
    return out


def summarise(results) -> str:
    rows = [f"{'rep':>4} {'seed':>6} {'accesses':>9} {'max stash':>10} {'final':>6} "
            f"{'bw/acc':>7} {'time s':>8}  status"]
    for r in results:
        rows.append(f"{r.rep:>4} {r.seed:>6} {r.accesses:>9} {r.max_stash:>10} {r.final_stash:>6} "
                    f"{r.bandwidth_per_access or 0:>7} {r.wall_time:>8.2f}  "
                    f"{'ok' if r.ok else 'FAIL'}{' [' + r.label + ']' if r.label else ''}")
    return "\n".join(rows)


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, default=_default)


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)
