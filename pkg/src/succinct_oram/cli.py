"""Command-line entry point.

Exit codes: 0 pass, 1 invariant or check failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
import warnings

from . import kernel
from .accounting import format_table2, table2
from .harness import RunConfig, dry_run, dumps, run_reps, summarise
from .params import ParamError, derive_params_t1, derive_params_t2, TreeParams, Construction
from .store import default_output_dir

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


def read_config(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as e:
        raise ConfigError(f"config: {e}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _int(s: str) -> int:
    """Integers, also written as powers like 2^16."""
    s = str(s).strip()
    if "^" in s:
        b, e = s.split("^", 1)
        return int(b) ** int(e)
    if "**" in s:
        b, e = s.split("**", 1)
        return int(b) ** int(e)
    return int(s)


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _output(args, command: str):
    """File handle for records: --out, else $SUCCINCT_ORAM_OUT/<command>.jsonl, else stdout."""
    path = args.out
    if path is None and os.environ.get("SUCCINCT_ORAM_OUT"):
        d = default_output_dir()
        os.makedirs(d, exist_ok=True)
        path = os.path.join(d, f"{command}.jsonl")
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w"), True


def _emit(args, command: str, records) -> None:
    fh, close = _output(args, command)
    try:
        for r in records:
            fh.write(dumps(r) + "\n")
        fh.flush()
    finally:
        if close:
            fh.close()


# -- subcommands --------------------------------------------------------

def cmd_run(args) -> int:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in fields and v is not None})
    if args.dry_run_accounting:
        _emit(args, "run", [dry_run(cfg)])
        return EXIT_OK
    results, ok = [], True
    fh, close = _output(args, "run")
    try:
        for res in run_reps(cfg, args.jobs):
            fh.write(dumps(res.record(args.timing)) + "\n")
            fh.flush()
            results.append(res)
            ok &= res.ok
    finally:
        if close:
            fh.close()
    if args.summary:
        out = sys.stdout if close else sys.stderr
        print(summarise(results), file=out)
        if results and results[0].analog:
            print("analog mapping: " + json.dumps(results[0].analog), file=out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_table2(args) -> int:
    t0 = time.perf_counter()
    lines = table2(args.N, args.B, args.tol)
    if args.json:
        _emit(args, "table2", [ln.to_dict() for ln in lines])
    else:
        print(format_table2(lines))
        print(f"({time.perf_counter() - t0:.3f}s)")
    return EXIT_OK if all(ln.ok for ln in lines) else EXIT_FAIL


def _tree_params(args) -> TreeParams:
    c = Construction.parse(args.construction)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if args.L is not None and args.M is not None:
            return TreeParams.manual(args.N, args.B, args.Z or (3 if c is Construction.T1 else 4),
                                     args.L, args.M, c.value)
        if c is Construction.T1:
            return derive_params_t1(args.N, args.f, args.g, args.B, args.Z)
        if c is Construction.T2:
            return derive_params_t2(args.N, args.f, args.eps, args.B, args.Z)
    raise ParamError("construction: only t1 and t2 are supported here")


def cmd_security(args) -> int:
    from .analysis.security import security_test
    from .workloads import Workload
    p = _tree_params(args)
    a = Workload(args.workload_a, args.len, address=args.address).addresses(p.N)
    b = Workload(args.workload_b, args.len, address=args.address).addresses(p.N)
    rep = security_test(p, a, b, args.samples, tables=args.tables, alpha=args.alpha,
                        seed0=args.seed, backend=args.backend)
    _emit(args, "security", [rep.to_dict()])
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_bins(args) -> int:
    from .analysis.bins import one_choice_threshold, run_bins, two_choice_gap_threshold
    exps = [run_bins(args.bins, args.balls, args.choices, args.seed + s, args.backend)
            for s in range(args.seeds)]
    if args.choices == 1:
        thr = one_choice_threshold(args.bins, args.balls, args.g)
        passed = [e.max_load <= thr for e in exps]
        stat = {"threshold_max_load": thr}
    else:
        thr = two_choice_gap_threshold(args.bins, args.slack)
        passed = [e.gap <= thr for e in exps]
        stat = {"threshold_gap": thr}
    gaps = [e.gap for e in exps]
    report = {"experiment": "bins", "config": {"bins": args.bins, "balls": args.balls,
                                               "choices": args.choices},
              "seeds": [args.seed + s for s in range(args.seeds)],
              "statistics": {**stat, "gaps": gaps, "max_loads": [e.max_load for e in exps],
                             "max_gap": max(gaps), "mean_gap": sum(gaps) / len(gaps)},
              "pass": all(passed)}
    _emit(args, "bins", [report])
    return EXIT_OK if all(passed) else EXIT_FAIL


def cmd_oracle(args) -> int:
    from .analysis.infinite import run_oracle_pair
    from .workloads import Workload
    p = _tree_params(args)
    addrs = Workload(args.workload, args.len, address=args.address).addresses(p.N)
    verdicts = []
    for s in range(args.seeds):
        v, _, _ = run_oracle_pair(p, addrs, args.seed + s, desync=args.desync,
                                  backend=args.backend)
        verdicts.append(v)
    n_ok = sum(v.ok for v in verdicts)
    report = {"experiment": "oracle",
              "config": {"N": p.N, "Z": p.Z, "L": p.L, "M": p.M,
                         "construction": p.construction.value, "workload": args.workload,
                         "desync": args.desync},
              "seeds": [args.seed + s for s in range(args.seeds)],
              "statistics": {"equivalent": n_ok, "runs": len(verdicts),
                             "equal_states": sum(v.equal for v in verdicts),
                             "g_errors": sum(bool(v.errors) for v in verdicts),
                             "underfull_runs": sum(v.underfull > 0 for v in verdicts)},
              "runs": [v.to_dict() for v in verdicts],
              "pass": n_ok == len(verdicts)}
    _emit(args, "oracle", [report])
    print(f"{n_ok}/{len(verdicts)} equivalent", file=sys.stderr)
    # with desynchronised tapes the expected outcome is a failure
    expect_ok = args.desync == 0
    return EXIT_OK if (n_ok == len(verdicts)) == expect_ok else EXIT_FAIL


# -- parser -------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--out", help="output file for JSON records ('-' for stdout)")
    p.add_argument("--backend", choices=sorted(kernel.BACKENDS), help="kernel backend")
    p.add_argument("--seed", type=int, default=0)


def _tree_args(p: argparse.ArgumentParser, N: int) -> None:
    p.add_argument("--construction", default="t1", help="t1 or t2")
    p.add_argument("--N", type=_int, default=N)
    p.add_argument("--B", type=_int, default=1024)
    p.add_argument("--Z", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--f", type=float, default=16)
    p.add_argument("--g", type=float, default=4)
    p.add_argument("--eps", type=float, default=1)
    p.add_argument("--tables", choices=("memory", "outsourced"), default="memory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="succinct-oram",
                                 description="Tree ORAM simulator and experiment harness")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="drive a workload and record stash/bandwidth per repetition")
    _common(r)
    r.add_argument("--construction", default="t1", help="path, t1 or t2")
    r.add_argument("--N", type=_int)
    r.add_argument("--B", type=_int)
    r.add_argument("--Z", type=int)
    r.add_argument("--L", type=int)
    r.add_argument("--M", help="leaf capacity, or '<M>-analog' to rescale an aggressive row")
    r.add_argument("--f", type=float)
    r.add_argument("--g", type=float)
    r.add_argument("--eps", type=float)
    r.add_argument("--tables", choices=("memory", "outsourced"))
    r.add_argument("--position-map", dest="position_map", choices=("memory", "recursive"))
    r.add_argument("--sub-Z", dest="sub_Z", type=int)
    r.add_argument("--workload", help="scan, uniform, single or trace")
    r.add_argument("--length", type=_int, help="accesses (default N)")
    r.add_argument("--address", type=int, help="address for the single workload")
    r.add_argument("--trace-file", dest="trace_file")
    r.add_argument("--write-fraction", dest="write_fraction", type=float)
    r.add_argument("--reps", type=int)
    r.add_argument("--stash-bound", dest="stash_bound", type=int)
    r.add_argument("--verify", type=_bool, help="check values against a reference map")
    r.add_argument("--audit-every", dest="audit_every", type=int)
    r.add_argument("--trajectory", action="store_const", const=True,
                   help="include the per-access stash size")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--timing", action="store_true", help="include wall time in records")
    r.add_argument("--summary", action="store_true", help="print a table of results")
    r.add_argument("--dry-run-accounting", dest="dry_run_accounting", action="store_true",
                   help="report space and bandwidth without running accesses")
    r.set_defaults(func=cmd_run, seed=None)

    t = sub.add_parser("table2", help="closed-form extra space and bandwidth vs the reference rows")
    t.add_argument("--N", type=_int, default=1 << 20)
    t.add_argument("--B", type=_int, default=1024)
    t.add_argument("--tol", type=float, default=0.01)
    t.add_argument("--json", action="store_true")
    t.add_argument("--out")
    t.add_argument("--config")
    t.set_defaults(func=cmd_table2)

    s = sub.add_parser("security", help="statistical test of workload independence")
    _common(s)
    _tree_args(s, 1 << 14)
    s.add_argument("--len", type=_int, default=10000)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--workload-a", dest="workload_a", default="scan")
    s.add_argument("--workload-b", dest="workload_b", default="single")
    s.add_argument("--address", type=int, default=0)
    s.set_defaults(func=cmd_security)

    b = sub.add_parser("bins", help="balls-into-bins load experiment")
    _common(b)
    b.add_argument("--bins", type=_int, default=1 << 14)
    b.add_argument("--balls", type=_int, default=1 << 20)
    b.add_argument("--choices", type=int, choices=(1, 2), default=2)
    b.add_argument("--seeds", type=int, default=20)
    b.add_argument("--g", type=float, default=4)
    b.add_argument("--slack", type=float, default=5)
    b.set_defaults(func=cmd_bins)

    o = sub.add_parser("oracle", help="bounded vs unbounded-bucket equivalence")
    _common(o)
    _tree_args(o, 1 << 10)
    o.add_argument("--workload", default="scan")
    o.add_argument("--len", type=_int)
    o.add_argument("--address", type=int, default=0)
    o.add_argument("--seeds", type=int, default=100)
    o.add_argument("--desync", type=int, default=0, help="shift the unbounded label tape")
    o.set_defaults(func=cmd_oracle)
    return ap


def _apply_config(parser, sub_parser_name: str, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        conf = read_config(args.config)
        sp = parser._subparsers._group_actions[0].choices[sub_parser_name]
        known = {a.dest: a for a in sp._actions}
        defaults = {}
        for k, v in conf.items():
            if k not in known or k in ("config", "help"):
                raise ConfigError(f"config: unknown key {k!r}")
            act = known[k]
            try:
                if act.type is not None:
                    v = act.type(v)
                elif act.const is not None:
                    v = _bool(v)
            except (ValueError, argparse.ArgumentTypeError) as e:
                raise ConfigError(f"config: {k}: {e}") from None
            if act.choices is not None and v not in act.choices:
                raise ConfigError(f"config: {k}: {v!r} not in {sorted(act.choices)}")
            defaults[k] = v
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        pre = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        args = _apply_config(parser, pre.command, argv)
        return args.func(args)
    except (ConfigError, ParamError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
