"""Linear programming kernel.

A thin layer over the HiGHS dual simplex (``highspy``).  :class:`LpContext`
keeps one solver instance alive so that bound changes and appended rows are
re-solved from the previous basis; :func:`solve_lp` and
:func:`resolve_with_new_rows` are the stateless entry points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import highspy
import numpy as np

from .formulation import GE, LE, MixedIntegerProgram, Row

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
_INF = highspy.kHighsInf


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


class BasisStatus(enum.Enum):
    LOWER = "lower"
    BASIC = "basic"
    UPPER = "upper"
    ZERO = "zero"  # free nonbasic
    NONBASIC = "nonbasic"


_FROM_HIGHS = {
    highspy.HighsBasisStatus.kLower: BasisStatus.LOWER,
    highspy.HighsBasisStatus.kBasic: BasisStatus.BASIC,
    highspy.HighsBasisStatus.kUpper: BasisStatus.UPPER,
    highspy.HighsBasisStatus.kZero: BasisStatus.ZERO,
    highspy.HighsBasisStatus.kNonbasic: BasisStatus.NONBASIC,
}
_TO_HIGHS = {v: k for k, v in _FROM_HIGHS.items()}


@dataclass
class LpSolution:
    status: LpStatus
    primal: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    col_basis: list[BasisStatus] | None = None
    row_basis: list[BasisStatus] | None = None
    iterations: int = 0
    ray: np.ndarray | None = None
    activity: np.ndarray | None = None
    # what was solved, for warm-started re-solves
    mip: MixedIntegerProgram | None = field(default=None, repr=False)
    extra_rows: tuple[Row, ...] = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def dual_objective(self, lp: MixedIntegerProgram) -> float:
        """Objective of the dual solution implied by ``duals``/``reduced_costs``.

        Each row contributes ``dual * (active side of its bounds)``; each column
        contributes ``reduced_cost * (bound it sits at)``.
        """
        lo, hi = lp.row_bounds()
        y = self.duals
        row_term = np.where(y > 0, np.where(np.isfinite(lo), lo, 0.0), np.where(np.isfinite(hi), hi, 0.0)) * y
        d = self.reduced_costs
        col_term = np.where(d > 0, np.where(np.isfinite(lp.lb), lp.lb, 0.0),
                            np.where(np.isfinite(lp.ub), lp.ub, 0.0)) * d
        return float(row_term.sum() + col_term.sum()) + lp.constant


class LpContext:
    """A live HiGHS model supporting incremental rows and bound changes."""

    def __init__(self, mip: MixedIntegerProgram, *, time_limit: float | None = None):
        self.mip = mip
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("solver", "simplex")
        h.setOptionValue("primal_feasibility_tolerance", FEAS_TOL)
        h.setOptionValue("dual_feasibility_tolerance", OPT_TOL)
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("threads", 1)
        if time_limit is not None:
            h.setOptionValue("time_limit", max(float(time_limit), 0.0))
        n = mip.num_cols
        lb = np.where(np.isfinite(mip.lb), mip.lb, -_INF)
        ub = np.where(np.isfinite(mip.ub), mip.ub, _INF)
        h.addVars(n, lb, ub)
        if n:
            h.changeColsCost(n, np.arange(n, dtype=np.int32), mip.c.astype(float))
        if mip.num_rows:
            lo, hi = mip.row_bounds()
            A = mip.A.tocsr()
            h.addRows(
                mip.num_rows,
                np.where(np.isfinite(lo), lo, -_INF),
                np.where(np.isfinite(hi), hi, _INF),
                A.nnz,
                A.indptr.astype(np.int32),
                A.indices.astype(np.int32),
                A.data.astype(float),
            )
        self.h = h
        self.constant = mip.constant
        self.lb = mip.lb.astype(float).copy()
        self.ub = mip.ub.astype(float).copy()
        self.extra_rows: list[Row] = []

    @property
    def num_rows(self) -> int:
        return self.h.getNumRow()

    @property
    def num_cols(self) -> int:
        return self.h.getNumCol()

    def add_rows(self, rows: Sequence[Row]) -> None:
        if not rows:
            return
        lo = np.array([-_INF if r.sense == LE else r.rhs for r in rows], dtype=float)
        hi = np.array([_INF if r.sense == GE else r.rhs for r in rows], dtype=float)
        starts = np.cumsum([0] + [len(r.indices) for r in rows[:-1]]).astype(np.int32)
        idx = np.concatenate([np.asarray(r.indices) for r in rows]).astype(np.int32)
        val = np.concatenate([np.asarray(r.values, dtype=float) for r in rows])
        self.h.addRows(len(rows), lo, hi, len(idx), starts, idx, val)
        self.extra_rows.extend(rows)

    def set_bounds(self, cols, lb, ub) -> None:
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        if cols.size == 0:
            return
        lb = np.broadcast_to(np.asarray(lb, dtype=float), cols.shape)
        ub = np.broadcast_to(np.asarray(ub, dtype=float), cols.shape)
        self.lb[cols] = lb
        self.ub[cols] = ub
        self.h.changeColsBounds(
            len(cols), cols.astype(np.int32),
            np.where(np.isfinite(lb), lb, -_INF), np.where(np.isfinite(ub), ub, _INF),
        )

    def set_time_limit(self, seconds: float | None) -> None:
        self.h.setOptionValue("time_limit", _INF if seconds is None else max(float(seconds), 0.0))

    def set_basis(self, col_basis: Sequence[BasisStatus], row_basis: Sequence[BasisStatus]) -> None:
        b = highspy.HighsBasis()
        b.col_status = [_TO_HIGHS[s] for s in col_basis]
        rb = list(row_basis) + [BasisStatus.BASIC] * (self.num_rows - len(row_basis))
        b.row_status = [_TO_HIGHS[s] for s in rb]
        b.valid = True
        self.h.setBasis(b)

    def solve(self) -> LpSolution:
        h = self.h
        h.run()
        status = h.getModelStatus()
        info = h.getInfo()
        iters = int(info.simplex_iteration_count)
        if status not in (highspy.HighsModelStatus.kOptimal, highspy.HighsModelStatus.kInfeasible,
                          highspy.HighsModelStatus.kUnbounded, highspy.HighsModelStatus.kTimeLimit):
            # Rare with presolve off (ambiguous infeasible/unbounded, or a
            # numerical breakdown of the warm basis); retry from a cold start.
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kInfeasible:
            ray = None
            has, vals = _maybe_ray(h.getDualRay)
            if has:
                ray = vals
            return LpSolution(LpStatus.INFEASIBLE, iterations=iters, ray=ray)
        if status == highspy.HighsModelStatus.kUnbounded:
            has, vals = _maybe_ray(h.getPrimalRay)
            return LpSolution(LpStatus.UNBOUNDED, iterations=iters, ray=vals if has else None)
        if status != highspy.HighsModelStatus.kOptimal:
            return LpSolution(LpStatus.NUMERICAL_FAILURE, iterations=iters)
        sol = h.getSolution()
        basis = h.getBasis()
        primal = np.array(sol.col_value, dtype=float)
        out = LpSolution(
            LpStatus.OPTIMAL,
            primal=primal,
            objective=float(info.objective_function_value) + 0.0,
            duals=np.array(sol.row_dual, dtype=float),
            reduced_costs=np.array(sol.col_dual, dtype=float),
            col_basis=[_FROM_HIGHS[s] for s in basis.col_status],
            row_basis=[_FROM_HIGHS[s] for s in basis.row_status],
            iterations=iters,
            activity=np.array(sol.row_value, dtype=float),
            mip=self.mip,
            extra_rows=tuple(self.extra_rows),
        )
        # HiGHS reports the objective without our constant offset.
        out.objective += self.constant
        return out

    def current_program(self) -> MixedIntegerProgram:
        """The program this context currently represents (rows and bounds included)."""
        base = self.mip.with_rows(self.extra_rows)
        return base.with_bounds(np.arange(self.num_cols), self.lb, self.ub)


def _maybe_ray(fn):
    try:
        res = fn()
    except Exception:  # pragma: no cover - depends on highspy build
        return False, None
    if isinstance(res, tuple) and len(res) >= 2:
        has, vals = res[-2], res[-1]
        return bool(has), np.array(vals, dtype=float) if has else None
    return False, None


def solve_lp(mip: MixedIntegerProgram, integrality_relaxed: bool = True) -> LpSolution:
    """Solve the continuous relaxation of ``mip``."""
    if not integrality_relaxed and np.any(mip.integer):
        raise ValueError("program has integer columns; relax them or use solve_milp")
    return LpContext(mip).solve()


def resolve_with_new_rows(prev: LpSolution, new_rows: Sequence[Row]) -> LpSolution:
    """Re-solve ``prev``'s program with extra rows, warm-started from its basis."""
    if prev.mip is None or not prev.optimal:
        raise ValueError("resolve_with_new_rows needs an optimal previous solution")
    ctx = LpContext(prev.mip)
    ctx.add_rows(list(prev.extra_rows) + list(new_rows))
    ctx.set_basis(prev.col_basis, prev.row_basis)
    return ctx.solve()


__all__ = [
    "LpStatus", "BasisStatus", "LpSolution", "LpContext", "solve_lp", "resolve_with_new_rows",
    "FEAS_TOL", "OPT_TOL",
]
