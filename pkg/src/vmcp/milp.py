"""Branch-and-bound MILP solver over :mod:`vmcp.lp`, and an enumeration oracle.

Node selection is best-bound (ties broken toward deeper nodes, then creation
order); branching picks the most fractional integer column, lowest index on
ties.  The only primal heuristic is rounding the LP solution.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .formulation import MixedIntegerProgram
from .lp import LpContext, LpStatus

INT_TOL = 1e-6


class MilpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIME_LIMIT = "TimeLimit"


@dataclass
class MilpResult:
    status: MilpStatus
    incumbent: np.ndarray | None
    objective: float
    best_bound: float
    nodes: int = 0
    # (nodes processed, global lower bound, incumbent objective) after each node
    trace: list[tuple[int, float, float]] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is MilpStatus.OPTIMAL


class EnumerationCapExceeded(ValueError):
    pass


def _prune_tol(value: float, gap: float) -> float:
    if not math.isfinite(value):
        return 0.0
    return max(gap * abs(value), 1e-9 * max(1.0, abs(value)))


def solve_milp(
    mip: MixedIntegerProgram,
    time_limit: float | None = None,
    gap: float = 0.0,
    *,
    cutoff: float = math.inf,
    node_limit: int | None = None,
    backend: str = "native",
) -> MilpResult:
    """Solve ``mip`` to proven optimality (relative ``gap``).

    ``cutoff`` is a known upper bound: nodes whose bound cannot beat it are
    pruned, and if no solution better than the cutoff exists the result is
    ``Infeasible``.  ``TimeLimit`` results carry the best incumbent and bound.

    ``backend="highs"`` hands the program to the HiGHS branch-and-cut solver
    under the same contract (no per-node trace); the default is the
    branch and bound implemented here.
    """
    if backend == "highs":
        return _solve_highs(mip, time_limit, gap, cutoff, node_limit)
    if backend != "native":
        raise ValueError(f"unknown backend {backend!r}")
    start = time.perf_counter()
    deadline = math.inf if time_limit is None else start + time_limit
    int_cols = np.flatnonzero(mip.integer)

    if time_limit is not None and time_limit <= 0:
        return MilpResult(MilpStatus.TIME_LIMIT, None, math.inf, -math.inf, 0)

    ctx = LpContext(mip)
    root_lb, root_ub = mip.lb.copy(), mip.ub.copy()
    # Integer columns may carry fractional bounds; round them inwards.
    root_lb[int_cols] = np.ceil(root_lb[int_cols] - INT_TOL)
    root_ub[int_cols] = np.floor(root_ub[int_cols] + INT_TOL)
    if np.any(root_lb > root_ub):
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, math.inf, 0)
    ctx.set_bounds(int_cols, root_lb[int_cols], root_ub[int_cols])

    best_x: np.ndarray | None = None
    best_obj = math.inf
    nodes = 0
    trace: list[tuple[int, float, float]] = []
    counter = itertools.count()
    # heap of (parent bound, -depth, seq, bound changes)
    heap: list[tuple[float, int, int, tuple[tuple[int, float, float], ...]]] = [
        (-math.inf, 0, next(counter), ())
    ]
    applied: dict[int, tuple[float, float]] = {}
    global_lb = -math.inf
    timed_out = False

    def limit() -> float:
        return min(best_obj, cutoff)

    while heap:
        bound, negdepth, _, changes = heap[0]
        lim = limit()
        if bound >= lim - _prune_tol(lim, gap):
            break  # every open node is dominated
        if time.perf_counter() >= deadline or (node_limit is not None and nodes >= node_limit):
            timed_out = True
            break
        heapq.heappop(heap)

        # Reset columns touched by the previous node, then apply this node's.
        target = dict((j, (lo, hi)) for j, lo, hi in changes)
        reset = [j for j in applied if j not in target]
        if reset:
            ctx.set_bounds(reset, root_lb[reset], root_ub[reset])
        upd = [j for j in target if applied.get(j) != target[j]]
        if upd:
            ctx.set_bounds(upd, [target[j][0] for j in upd], [target[j][1] for j in upd])
        applied = target
        if math.isfinite(deadline):
            ctx.set_time_limit(max(deadline - time.perf_counter(), 0.0))

        lp = ctx.solve()
        nodes += 1
        if lp.status is LpStatus.INFEASIBLE:
            pass
        elif lp.status is LpStatus.UNBOUNDED:
            if nodes == 1 and best_x is None:
                raise ValueError("LP relaxation is unbounded")
        elif lp.status is not LpStatus.OPTIMAL:
            if time.perf_counter() >= deadline:
                heapq.heappush(heap, (bound, negdepth, next(counter), changes))
                timed_out = True
                break
            raise RuntimeError(f"LP failure at node {nodes}: {lp.status}")
        else:
            obj = lp.objective
            lim = limit()
            if obj < lim - _prune_tol(lim, gap):
                x = lp.primal
                frac = np.abs(x[int_cols] - np.round(x[int_cols]))
                if frac.size == 0 or frac.max() <= INT_TOL:
                    cand = x.copy()
                    cand[int_cols] = np.round(cand[int_cols])
                    best_x, best_obj = cand, mip.objective(cand)
                else:
                    rounded = _round(mip, x, int_cols)
                    if rounded is not None:
                        r_obj = mip.objective(rounded)
                        if r_obj < limit():
                            best_x, best_obj = rounded, r_obj
                    # most fractional (distance to nearest integer), lowest index on ties
                    dist = np.minimum(x[int_cols] - np.floor(x[int_cols]), np.ceil(x[int_cols]) - x[int_cols])
                    j = int(int_cols[int(np.argmax(dist))])
                    val = x[j]
                    lo_j, hi_j = target.get(j, (root_lb[j], root_ub[j]))
                    down = tuple(c for c in changes if c[0] != j) + ((j, lo_j, math.floor(val)),)
                    up = tuple(c for c in changes if c[0] != j) + ((j, math.ceil(val), hi_j),)
                    depth = -negdepth + 1
                    heapq.heappush(heap, (obj, -depth, next(counter), down))
                    heapq.heappush(heap, (obj, -depth, next(counter), up))
        open_lb = heap[0][0] if heap else math.inf
        global_lb = max(global_lb, min(open_lb, best_obj))
        trace.append((nodes, global_lb, best_obj))

    open_lb = heap[0][0] if heap else math.inf
    if timed_out:
        lb = min(open_lb, best_obj)
        lb = max(lb, global_lb) if math.isfinite(global_lb) else lb
        return MilpResult(MilpStatus.TIME_LIMIT, best_x, best_obj, lb, nodes, trace)
    if best_x is None:
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, min(open_lb, cutoff), nodes, trace)
    return MilpResult(MilpStatus.OPTIMAL, best_x, best_obj, min(open_lb, best_obj), nodes, trace)


def _round(mip: MixedIntegerProgram, x: np.ndarray, int_cols: np.ndarray) -> np.ndarray | None:
    """Nearest-integer rounding of the LP point, kept only if it is feasible."""
    cand = x.copy()
    cand[int_cols] = np.round(cand[int_cols])
    if mip.is_feasible(cand, tol=INT_TOL):
        return cand
    # Rounding up is the natural direction for covering-type rows (e.g. y in VMCP).
    cand[int_cols] = np.ceil(x[int_cols] - INT_TOL)
    if mip.is_feasible(cand, tol=INT_TOL):
        return cand
    return None


def brute_force_optimum(mip: MixedIntegerProgram, enumeration_cap: int = 1_000_000) -> MilpResult:
    """Exact optimum by enumerating every integer point in the bound box.

    All columns must be integer with finite bounds; the number of points
    (product of range sizes) must not exceed ``enumeration_cap``.
    """
    if not np.all(mip.integer):
        raise ValueError("brute force needs an all-integer program")
    lb = np.ceil(mip.lb - INT_TOL)
    ub = np.floor(mip.ub + INT_TOL)
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("brute force needs finite bounds")
    sizes = np.maximum(ub - lb + 1, 0).astype(np.int64)
    total = 1
    for s in sizes:
        total *= int(s)
        if total > enumeration_cap:
            raise EnumerationCapExceeded(f"more than {enumeration_cap} lattice points")
    if total == 0:
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, math.inf, 0)
    lo, hi = mip.row_bounds()
    A = mip.A.tocsr()
    best_x, best_obj = None, math.inf
    chunk = 1 << 16
    n = mip.num_cols
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        pts = np.empty((len(idx), n))
        rem = idx
        for j in range(n - 1, -1, -1):
            pts[:, j] = lb[j] + rem % sizes[j]
            rem = rem // sizes[j]
        act = (A @ pts.T).T if mip.num_rows else np.zeros((len(idx), 0))
        ok = np.all((act >= lo - 1e-9) & (act <= hi + 1e-9), axis=1)
        if not ok.any():
            continue
        objs = pts[ok] @ mip.c + mip.constant
        t = int(np.argmin(objs))
        if objs[t] < best_obj - 1e-12:
            best_obj, best_x = float(objs[t]), pts[ok][t].copy()
    if best_x is None:
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, math.inf, total)
    return MilpResult(MilpStatus.OPTIMAL, best_x, best_obj, best_obj, total)


def _solve_highs(mip: MixedIntegerProgram, time_limit, gap, cutoff, node_limit) -> MilpResult:
    import highspy

    inf = highspy.kHighsInf
    h = highspy.Highs()
    for key, val in (("output_flag", False), ("threads", 1), ("random_seed", 0),
                     ("mip_rel_gap", float(gap)), ("mip_abs_gap", 1e-9),
                     ("mip_feasibility_tolerance", 1e-9), ("primal_feasibility_tolerance", 1e-9)):
        h.setOptionValue(key, val)
    if time_limit is not None:
        h.setOptionValue("time_limit", max(float(time_limit), 0.0))
    if node_limit is not None:
        h.setOptionValue("mip_max_nodes", int(node_limit))
    if math.isfinite(cutoff):
        h.setOptionValue("objective_bound", float(cutoff))
    lp = highspy.HighsLp()
    lp.num_col_, lp.num_row_ = mip.num_cols, mip.num_rows
    lp.col_cost_ = mip.c.astype(float)
    lp.offset_ = float(mip.constant)
    lp.col_lower_ = np.where(np.isfinite(mip.lb), mip.lb, -inf)
    lp.col_upper_ = np.where(np.isfinite(mip.ub), mip.ub, inf)
    lo, hi = mip.row_bounds()
    lp.row_lower_ = np.where(np.isfinite(lo), lo, -inf)
    lp.row_upper_ = np.where(np.isfinite(hi), hi, inf)
    A = mip.A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                       for f in mip.integer]
    h.passModel(lp)
    h.run()
    status = h.getModelStatus()
    info = h.getInfo()
    nodes = int(info.mip_node_count)
    x = None
    obj = math.inf
    if info.primal_solution_status == 2:  # feasible point available
        x = np.array(h.getSolution().col_value, dtype=float)
        x[mip.integer] = np.round(x[mip.integer])
        obj = mip.objective(x)
        if obj >= cutoff or not mip.is_feasible(x, tol=INT_TOL):
            x, obj = None, math.inf
    S = highspy.HighsModelStatus
    if status == S.kOptimal:
        if x is None:
            return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, cutoff, nodes)
        return MilpResult(MilpStatus.OPTIMAL, x, obj, min(obj, float(info.mip_dual_bound)), nodes)
    if status in (S.kInfeasible, S.kObjectiveBound):
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, cutoff, nodes)
    if status in (S.kTimeLimit, S.kSolutionLimit, S.kIterationLimit, S.kInterrupt):
        bound = float(info.mip_dual_bound)
        return MilpResult(MilpStatus.TIME_LIMIT, x, obj, bound if math.isfinite(bound) else -math.inf, nodes)
    if status == S.kUnbounded or status == S.kUnboundedOrInfeasible:
        raise ValueError("LP relaxation is unbounded")
    raise RuntimeError(f"HiGHS MIP failed: {h.modelStatusToString(status)}")
