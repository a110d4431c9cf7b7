"""Benchmark records, CSV persistence and performance profiles."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from .cns import SolverOptions, SolveStatus, solve_cns
from .formulation import build_mazumdar, build_model, build_speitkamp, model_statistics
from .lp import solve_lp
from .milp import MilpStatus, solve_milp
from .model import Instance

SCHEMA_VERSION = 1
ALGORITHMS = ("cns", "cns-noprime", "bb")
FORMULATIONS = {
    "proposed": build_model,
    "speitkamp": build_speitkamp,
    "mazumdar": build_mazumdar,
}


@dataclass
class RunRecord:
    schema_version: int
    instance_id: str
    params: str
    algorithm: str
    status: str
    objective: float
    bound: float
    cpu_seconds: float
    wall_seconds: float
    levels: int = 0
    cuts: int = 0
    nodes: int = 0
    sparse_solves: int = 0

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list[str]:
        return [repr(v) if isinstance(v, float) else str(v) for v in asdict(self).values()]

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "RunRecord":
        kw = {}
        for f in fields(cls):
            raw = row[f.name]
            kw[f.name] = int(raw) if f.type in ("int", int) else float(raw) if f.type in ("float", float) else raw
        return cls(**kw)


def instance_id(inst: Instance, path: str | Path | None = None) -> str:
    if "id" in inst.metadata:
        return str(inst.metadata["id"])
    return Path(path).stem if path is not None else "instance"


def run_algorithm(
    inst: Instance, algorithm: str, *, time_limit: float = 7200.0, gap: float = 0.0,
    backend: str = "highs", inst_id: str = "instance",
) -> tuple[RunRecord, object]:
    """Run one solver on one instance; returns the record and the raw result."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    params = json.dumps(inst.metadata.get("params", {}), sort_keys=True)
    cpu0, wall0 = time.process_time(), time.perf_counter()
    levels = cuts = nodes = sparse = 0
    if algorithm in ("cns", "cns-noprime"):
        opts = SolverOptions(time_limit=time_limit, gap=gap, use_cuts=algorithm == "cns", mip_backend=backend)
        res = solve_cns(inst, opts)
        status, obj, bound = res.status.value, res.objective, res.bound
        levels, cuts, nodes, sparse = res.levels, res.num_cuts, res.nodes, res.sparse_solves
    else:
        mip, _ = build_model(inst)
        if time_limit <= 0:
            lp = solve_lp(mip)
            res = lp
            if lp.optimal:
                status, obj, bound = SolveStatus.TIME_LIMIT.value, math.inf, lp.objective
            else:
                status, obj, bound = SolveStatus.INFEASIBLE.value, math.inf, math.inf
        else:
            res = solve_milp(mip, time_limit=time_limit, gap=gap, backend=backend)
            status = {MilpStatus.OPTIMAL: "Optimal", MilpStatus.INFEASIBLE: "Infeasible",
                      MilpStatus.TIME_LIMIT: "TimeLimit"}[res.status]
            obj, bound, nodes = res.objective, res.best_bound, res.nodes
    rec = RunRecord(
        SCHEMA_VERSION, inst_id, params, algorithm, status, float(obj), float(bound),
        time.process_time() - cpu0, time.perf_counter() - wall0, levels, cuts, nodes, sparse,
    )
    return rec, res


def append_records(path: str | Path, records: Iterable[RunRecord]) -> None:
    """Append rows, writing the header only for a new file.

    An existing file must carry the same header (schema version included).
    """
    path = Path(path)
    header = RunRecord.header()
    new = not path.exists() or path.stat().st_size == 0
    if not new:
        with path.open(newline="") as fh:
            existing = next(csv.reader(fh), None)
        if existing != header:
            raise ValueError(f"{path} has a different CSV schema")
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(header)
        for r in records:
            w.writerow(r.row())


def read_records(paths: Sequence[str | Path]) -> list[RunRecord]:
    out: list[RunRecord] = []
    for p in paths:
        with Path(p).open(newline="") as fh:
            for row in csv.DictReader(fh):
                if int(row["schema_version"]) != SCHEMA_VERSION:
                    raise ValueError(f"{p}: unsupported schema version {row['schema_version']}")
                out.append(RunRecord.from_row(row))
    return out


def performance_profile(records: Sequence[RunRecord]) -> dict[str, list[tuple[float, float]]]:
    """Per algorithm, the step points ``(t, percent of instances solved within t)``.

    An instance counts as solved when its status is Optimal or Infeasible
    (both are proofs).  The series start at ``(0, 0)``.
    """
    if not records:
        raise ValueError("no records")
    by_algo: dict[str, dict[str, RunRecord]] = {}
    for r in records:
        by_algo.setdefault(r.algorithm, {})[r.instance_id] = r
    out = {}
    for algo in sorted(by_algo):
        runs = by_algo[algo]
        total = len(runs)
        times = sorted(r.cpu_seconds for r in runs.values() if r.status in ("Optimal", "Infeasible"))
        series = [(0.0, 0.0)]
        for j, t in enumerate(times, start=1):
            pct = 100.0 * j / total
            if series[-1][0] == t:
                series[-1] = (t, pct)
            else:
                series.append((t, pct))
        out[algo] = series
    return out


def write_profile(path, profile: dict[str, list[tuple[float, float]]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "time", "percent_solved"])
        for algo, series in profile.items():
            for t, p in series:
                w.writerow([algo, repr(t), repr(p)])


def compare_formulations(
    inst: Instance, names: Sequence[str], *, stats_only: bool = True, time_limit: float = 60.0,
    backend: str = "highs",
) -> list[dict]:
    rows = []
    for name in names:
        if name not in FORMULATIONS:
            raise ValueError(f"unknown formulation {name!r}")
        mip, _ = FORMULATIONS[name](inst)
        cons, nvars, nint = model_statistics(mip)
        row = {"formulation": name, "constraints": cons, "variables": nvars, "integer_variables": nint}
        if not stats_only:
            t0 = time.process_time()
            res = solve_milp(mip, time_limit=time_limit, backend=backend)
            row.update(status=res.status.value, objective=res.objective, cpu_seconds=time.process_time() - t0)
        rows.append(row)
    return rows
