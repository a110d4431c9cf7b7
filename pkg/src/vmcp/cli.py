"""``vmcp`` command line: gen, solve, compare, profile.

Exit codes: 0 success, 2 time limit reached, 3 infeasible, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .bench import (
    ALGORITHMS, FORMULATIONS, RunRecord, append_records, compare_formulations, instance_id,
    performance_profile, read_records, run_algorithm, write_profile,
)
from .generator import GenParams, adjust_vm_count, generate
from .model import Instance

EXIT_OK, EXIT_TIME_LIMIT, EXIT_INFEASIBLE, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("expected a value in [0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vmcp", description="VM consolidation: instance generation and exact solvers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate instances")
    g.add_argument("--servers", type=int, required=True)
    g.add_argument("--alpha", type=float, required=True)
    g.add_argument("--seed", type=int, default=0, help="first seed (VMCP_SEED overrides)")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--beta", type=_fraction)
    g.add_argument("--eta", type=_fraction)
    g.add_argument("--lambda", dest="lam", type=_fraction)
    g.add_argument("--theta", type=_fraction)
    g.add_argument("--total-vms", type=int, help="add/remove VMs until the placement holds this many")
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="solve instances and append CSV rows")
    s.add_argument("--algo", choices=ALGORITHMS, default="cns")
    s.add_argument("--inst", type=Path, nargs="+", required=True)
    s.add_argument("--time-limit", type=float, default=7200.0)
    s.add_argument("--gap", type=float, default=0.0)
    s.add_argument("--backend", choices=("highs", "native"), default="highs",
                   help="MILP engine for bb and for cut-and-solve sparse problems")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", type=Path, help="CSV file to append to (default: stdout)")
    s.add_argument("--trace", type=Path, help="write per-level cut-and-solve traces here")

    c = sub.add_parser("compare", help="formulation sizes (and optionally optima)")
    c.add_argument("--inst", type=Path, required=True)
    c.add_argument("--formulations", default="proposed,speitkamp,mazumdar")
    c.add_argument("--stats-only", action="store_true")
    c.add_argument("--time-limit", type=float, default=60.0)
    c.add_argument("--backend", choices=("highs", "native"), default="highs")

    f = sub.add_parser("profile", help="performance-profile series from run CSVs")
    f.add_argument("--runs", type=Path, nargs="+", required=True)
    f.add_argument("--out", type=Path, help="CSV output (default: stdout)")
    return p


def cmd_gen(args) -> int:
    seed = int(os.environ.get("VMCP_SEED", args.seed))
    if args.count < 0 or args.servers < 0:
        raise UsageError("--count and --servers must be nonnegative")
    args.out.mkdir(parents=True, exist_ok=True)
    for j in range(args.count):
        try:
            params = GenParams(args.servers, args.alpha, seed + j, args.beta, args.eta, args.lam, args.theta)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        inst = generate(params)
        if args.total_vms is not None:
            inst = adjust_vm_count(inst, args.total_vms, seed + j)
        tag = "ext" if params.extended else "basic"
        name = f"vmcp_{tag}_K{args.servers}_a{args.alpha:g}_s{seed + j}"
        inst.metadata["id"] = name
        inst.save(args.out / f"{name}.json")
    return EXIT_OK


def _solve_one(job):
    path, algo, time_limit, gap, backend = job
    inst = Instance.load(path)
    rec, res = run_algorithm(inst, algo, time_limit=time_limit, gap=gap, backend=backend,
                             inst_id=instance_id(inst, path))
    trace = getattr(res, "trace", None) if algo != "bb" else None
    return rec, trace


def cmd_solve(args) -> int:
    for p in args.inst:
        if not p.is_file():
            raise UsageError(f"cannot read instance {p}")
    jobs = [(str(p), args.algo, args.time_limit, args.gap, args.backend) for p in args.inst]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_solve_one, jobs))
    else:
        results = [_solve_one(j) for j in jobs]
    results.sort(key=lambda t: t[0].instance_id)
    records = [r for r, _ in results]
    if args.out is None:
        w = csv.writer(sys.stdout)
        w.writerow(RunRecord.header())
        for r in records:
            w.writerow(r.row())
    else:
        append_records(args.out, records)
    if args.trace is not None:
        with args.trace.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["instance_id", "level", "lb", "ub", "set_size", "set_kind", "cuts_added",
                        "sparse_status", "elapsed"])
            for rec, trace in results:
                for t in trace or []:
                    w.writerow([rec.instance_id, t.level, repr(t.lb), repr(t.ub), t.set_size, t.set_kind,
                                t.cuts_added, t.sparse_status or "", repr(t.elapsed)])
    statuses = {r.status for r in records}
    if "Infeasible" in statuses:
        return EXIT_INFEASIBLE
    if "TimeLimit" in statuses:
        return EXIT_TIME_LIMIT
    return EXIT_OK


def cmd_compare(args) -> int:
    if not args.inst.is_file():
        raise UsageError(f"cannot read instance {args.inst}")
    names = [n.strip() for n in args.formulations.split(",") if n.strip()]
    bad = [n for n in names if n not in FORMULATIONS]
    if bad:
        raise UsageError(f"unknown formulation(s): {', '.join(bad)}")
    rows = compare_formulations(Instance.load(args.inst), names, stats_only=args.stats_only,
                                time_limit=args.time_limit, backend=args.backend)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]) if rows else ["formulation"])
    w.writeheader()
    w.writerows(rows)
    return EXIT_OK


def cmd_profile(args) -> int:
    for p in args.runs:
        if not p.is_file():
            raise UsageError(f"cannot read {p}")
    records = read_records(args.runs)
    if not records:
        raise UsageError("no run records in input")
    prof = performance_profile(records)
    if args.out is not None:
        write_profile(args.out, prof)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["algorithm", "time", "percent_solved"])
        for algo, series in prof.items():
            for t, pct in series:
                w.writerow([algo, repr(t), repr(pct)])
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "compare": cmd_compare, "profile": cmd_profile}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"vmcp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
