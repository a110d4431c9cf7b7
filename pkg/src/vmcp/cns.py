"""Cut-and-solve for consolidation instances.

Each level ``q`` has a dense problem: the compact model plus piercing rows
``sum_{k in S_t} y_k >= 1`` for every earlier level ``t``.  Its LP bound,
optionally tightened by knapsack-hull cuts, is compared with the incumbent.
If the search must go on, a piercing set ``S`` is chosen from reduced costs;
the sparse problem (dense problem with ``y_k = 0`` for ``k in S``) is solved
exactly by branch and bound, and ``S`` is cut away from the next dense
problem.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .formulation import GE, IndexMap, MixedIntegerProgram, Row, build_model, vector_to_solution
from .knapsack import KnapsackSet
from .lp import LpContext, LpSolution, LpStatus
from .milp import INT_TOL, MilpResult, MilpStatus, solve_milp
from .model import Instance, Solution
from .separation import CutPool, ValidInequality, separate_conv_Xy, separate_conv_Y


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT = "TimeLimit"


@dataclass
class SolverOptions:
    epsilon: float = 1e-4
    cut_improvement_stop: float = 5e-4
    time_limit: float = 7200.0
    gap: float = 0.0
    use_cuts: bool = True
    sparse_time_limit: float | None = None
    max_cut_rounds: int = 100
    record_cuts: bool = False
    # MILP backend for sparse problems and the fallback: "highs" or "native"
    mip_backend: str = "highs"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.cut_improvement_stop < 0 or self.gap < 0 or self.time_limit < 0:
            raise ValueError("thresholds must be nonnegative")


class PiercingKind(enum.Enum):
    REDUCED_COST = "S2"
    ZERO_VALUE = "S1"
    FALLBACK = "fallback"


@dataclass
class LevelRecord:
    level: int
    lb: float
    ub: float
    plain_lb: float
    set_size: int
    set_kind: str
    cuts_added: int
    sparse_status: str | None
    sparse_objective: float | None
    sparse_nodes: int
    min_reduced_cost: float | None
    elapsed: float
    s1_size: int = 0
    s2_subset_s1: bool = True
    piercing: tuple[int, ...] = ()


@dataclass
class NodeState:
    level: int = 0
    piercing: list[tuple[int, ...]] = field(default_factory=list)
    pool: CutPool = field(default_factory=CutPool)
    lb: float = -math.inf


@dataclass
class SolveResult:
    status: SolveStatus
    solution: Solution | None
    objective: float
    bound: float
    levels: int
    trace: list[LevelRecord] = field(default_factory=list)
    root_plain_bound: float = math.nan
    root_bound: float = math.nan
    cuts: list[ValidInequality] = field(default_factory=list, repr=False)
    num_cuts: int = 0
    nodes: int = 0
    sparse_solves: int = 0
    elapsed: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class _Separator:
    """Knapsack sets of one model, built once and queried every round."""

    def __init__(self, inst: Instance, mip: MixedIntegerProgram, cols: IndexMap):
        self.inst = inst
        u, s = inst.demand, inst.capacity
        ns, nr = inst.num_servers, inst.num_resources
        X = cols.block("x")
        XN = cols.block("xnew") if cols.has_block("xnew") else None
        self.Y = cols.block("y")
        ub = np.floor(mip.ub + INT_TOL)
        self.xsets: list[tuple[int, KnapsackSet, np.ndarray]] = []
        for k in range(ns):
            for r in range(nr):
                keys = [X[:, k]] + ([XN[:, k]] if XN is not None else [])
                keys = np.concatenate(keys)
                w = np.concatenate([u[:, r]] * (2 if XN is not None else 1))
                keep = (w > 0) & (ub[keys] > 0)
                if not keep.any():
                    continue
                kset = KnapsackSet(w[keep], int(s[k, r]), np.minimum(ub[keys[keep]], 10**9).astype(np.int64))
                self.xsets.append((k, kset, keys[keep]))
        total = inst.d + inst.d_new
        self.required = [int(total @ u[:, r]) for r in range(nr)]
        self.caps = [s[:, r] for r in range(nr)]

    def cuts(self, x: np.ndarray) -> list[ValidInequality]:
        out: list[ValidInequality] = []
        for k, kset, keys in self.xsets:
            yk = x[self.Y[k]]
            cut = separate_conv_Xy(kset, x[keys], yk, keys, int(self.Y[k]))
            if cut is not None:
                out.append(cut)
        yv = np.clip(x[self.Y], 0.0, 1.0)
        for r in range(len(self.caps)):
            out.extend(separate_conv_Y(self.caps[r], self.required[r], yv, [int(j) for j in self.Y]))
        return out


def select_piercing_set(lp: LpSolution, y_cols: np.ndarray, opts: SolverOptions) -> tuple[list[int], PiercingKind]:
    """Servers whose activation would raise the bound by at least ``epsilon``;
    failing that, servers off in the LP; failing that, the fallback signal."""
    rc = lp.reduced_costs[y_cols]
    s2 = [int(k) for k in np.flatnonzero(rc >= opts.epsilon)]
    if s2:
        return s2, PiercingKind.REDUCED_COST
    s1 = [int(k) for k in np.flatnonzero(lp.primal[y_cols] <= INT_TOL)]
    if s1:
        return s1, PiercingKind.ZERO_VALUE
    return [], PiercingKind.FALLBACK


def strengthen_relaxation(
    ctx: LpContext, lp: LpSolution, sep: _Separator, node: NodeState, opts: SolverOptions,
    deadline: float = math.inf, recorded: list | None = None,
) -> tuple[LpSolution, int]:
    """Add violated knapsack-hull cuts until none is found or the bound stalls."""
    if not opts.use_cuts or not lp.optimal:
        return lp, 0
    added = 0
    for _ in range(opts.max_cut_rounds):
        if time.perf_counter() >= deadline:
            break
        new = [c for c in sep.cuts(lp.primal) if node.pool.add(c)]
        if not new:
            break
        if recorded is not None:
            recorded.extend(new)
        ctx.add_rows([c.to_row() for c in new])
        added += len(new)
        nxt = ctx.solve()
        if not nxt.optimal:
            # cuts are valid, so an infeasible LP here means an infeasible node
            return nxt, added
        improvement = (nxt.objective - lp.objective) / max(1.0, abs(lp.objective))
        lp = nxt
        if improvement < opts.cut_improvement_stop:
            break
    return lp, added


def solve_sparse(
    mip: MixedIntegerProgram, cols: IndexMap, S, opts: SolverOptions, cutoff: float,
    time_limit: float | None,
) -> MilpResult:
    """Branch and bound on ``mip`` (the current dense problem) with every
    server of ``S`` switched off."""
    if len(S) == 0:
        raise ValueError("piercing set must be nonempty")
    S = np.asarray(sorted(S), dtype=np.int64)
    fix = [cols.block("y")[S]]
    for name in ("x", "z", "xnew"):
        if cols.has_block(name):
            fix.append(cols.block(name)[:, S].ravel())
    fix = np.concatenate(fix)
    sub = mip.with_bounds(fix, 0.0, 0.0)
    return solve_milp(sub, time_limit=time_limit, gap=opts.gap, cutoff=cutoff, backend=opts.mip_backend)


def _integral(x: np.ndarray) -> bool:
    return bool(np.all(np.abs(x - np.round(x)) <= INT_TOL))


def _stop_tol(ub: float, gap: float) -> float:
    return max(gap * (1.0 + abs(ub)), 1e-9 * max(1.0, abs(ub)))


def solve_cns(inst: Instance, opts: SolverOptions | None = None) -> SolveResult:
    opts = opts or SolverOptions()
    start = time.perf_counter()
    deadline = start + opts.time_limit
    mip, cols = build_model(inst)
    Y = cols.block("y")
    ctx = LpContext(mip)
    sep = _Separator(inst, mip, cols) if opts.use_cuts else None
    node = NodeState()
    recorded: list[ValidInequality] | None = [] if opts.record_cuts else None

    best_x: np.ndarray | None = None
    ub = math.inf
    nodes = 0
    sparse_solves = 0
    trace: list[LevelRecord] = []

    def result(status: SolveStatus, bound: float) -> SolveResult:
        sol = vector_to_solution(cols, best_x) if best_x is not None else None
        return SolveResult(
            status, sol, ub, bound, len(trace), trace,
            trace[0].plain_lb if trace else math.nan,
            trace[0].lb if trace else math.nan,
            recorded or [], len(node.pool), nodes, sparse_solves, time.perf_counter() - start,
        )

    if opts.time_limit <= 0:
        lp = ctx.solve()
        if lp.status is LpStatus.INFEASIBLE:
            return result(SolveStatus.INFEASIBLE, math.inf)
        return result(SolveStatus.TIME_LIMIT, lp.objective if lp.optimal else -math.inf)

    prev_lb = -math.inf
    while True:
        ctx.set_time_limit(max(deadline - time.perf_counter(), 0.0))
        lp = ctx.solve()
        if lp.status is LpStatus.INFEASIBLE:
            # the dense region is empty: the incumbent (if any) is optimal
            if best_x is None:
                return result(SolveStatus.INFEASIBLE, math.inf)
            return result(SolveStatus.OPTIMAL, ub)
        if not lp.optimal:
            if time.perf_counter() >= deadline:
                return result(SolveStatus.TIME_LIMIT, max(prev_lb, -math.inf))
            raise RuntimeError(f"dense LP failed: {lp.status}")
        plain = lp.objective
        lp, added = strengthen_relaxation(ctx, lp, sep, node, opts, deadline, recorded) if sep else (lp, 0)
        if lp.status is LpStatus.INFEASIBLE:
            if best_x is None:
                return result(SolveStatus.INFEASIBLE, math.inf)
            return result(SolveStatus.OPTIMAL, ub)
        lb = lp.objective
        node.lb = lb
        rec = LevelRecord(node.level, lb, ub, plain, 0, "", added, None, None, 0, None,
                          time.perf_counter() - start)
        trace.append(rec)
        prev_lb = max(prev_lb, lb)

        if best_x is not None and lb >= ub - _stop_tol(ub, opts.gap):
            rec.set_kind = "bound"
            return result(SolveStatus.OPTIMAL, min(lb, ub))
        x = lp.primal
        if _integral(x):
            cand = np.round(x)
            obj = mip.objective(cand)
            if obj < ub:
                best_x, ub = cand, obj
            rec.ub, rec.set_kind = ub, "integral"
            return result(SolveStatus.OPTIMAL, min(lb, ub))
        if time.perf_counter() >= deadline:
            return result(SolveStatus.TIME_LIMIT, lb)

        S, kind = select_piercing_set(lp, Y, opts)
        s1 = [int(k) for k in np.flatnonzero(lp.primal[Y] <= INT_TOL)]
        rec.set_size, rec.set_kind, rec.piercing = len(S), kind.value, tuple(S)
        rec.s1_size = len(s1)
        if kind is PiercingKind.REDUCED_COST:
            rec.min_reduced_cost = float(lp.reduced_costs[Y][S].min())
            rec.s2_subset_s1 = set(S) <= set(s1)
        current = ctx.current_program()
        remaining = deadline - time.perf_counter()

        if kind is PiercingKind.FALLBACK:
            res = solve_milp(current, time_limit=remaining, gap=opts.gap, cutoff=ub, backend=opts.mip_backend)
            nodes += res.nodes
            rec.sparse_status, rec.sparse_nodes = res.status.value, res.nodes
            if res.incumbent is not None and res.objective < ub:
                best_x, ub = res.incumbent, res.objective
                rec.sparse_objective = res.objective
            rec.ub = ub
            if res.status is MilpStatus.TIME_LIMIT:
                return result(SolveStatus.TIME_LIMIT, min(res.best_bound, ub))
            if best_x is None:
                return result(SolveStatus.INFEASIBLE, math.inf)
            return result(SolveStatus.OPTIMAL, ub)

        limit = remaining if opts.sparse_time_limit is None else min(remaining, opts.sparse_time_limit)
        res = solve_sparse(current, cols, S, opts, ub, limit)
        sparse_solves += 1
        nodes += res.nodes
        rec.sparse_status, rec.sparse_nodes = res.status.value, res.nodes
        if res.incumbent is not None and res.objective < ub:
            best_x, ub = res.incumbent, res.objective
            rec.sparse_objective = res.objective
        rec.ub = ub
        if res.status is MilpStatus.TIME_LIMIT:
            # the sparse region is not settled, so the dense bound alone is not global
            return result(SolveStatus.TIME_LIMIT, min(lb, res.best_bound, ub))

        ctx.add_rows([Row(Y[S], np.ones(len(S)), GE, 1.0)])
        node.piercing.append(tuple(S))
        node.level += 1


__all__ = [
    "SolveStatus", "SolverOptions", "PiercingKind", "LevelRecord", "NodeState", "SolveResult",
    "select_piercing_set", "strengthen_relaxation", "solve_sparse", "solve_cns",
]
