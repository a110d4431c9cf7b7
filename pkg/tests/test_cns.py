import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmcp.cns import (
    PiercingKind, SolverOptions, SolveStatus, select_piercing_set, solve_cns, solve_sparse,
)
from vmcp.formulation import GE, Row, build_extended, build_proposed
from vmcp.generator import GenParams, generate_extended
from vmcp.lp import LpSolution, LpStatus
from vmcp.milp import MilpStatus, brute_force_optimum, solve_milp
from vmcp.model import Extensions, check_feasibility, evaluate_objective, exhaustive_optimum, make_instance

from conftest import tiny_instance, tiny_params
from oracles import check_certificate


def three_identical(load=(5, 5, 4)):
    return make_instance([[1]], [[10], [10], [10]], [list(load)], [10.0, 10.0, 10.0], [[1.0, 1.0, 1.0]])


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(epsilon=0)
    with pytest.raises(ValueError):
        SolverOptions(cut_improvement_stop=-1)


def test_integral_root_returns_at_level_zero():
    inst = make_instance([[1]], [[10]], [[10]], [10.0], [[1.0]])
    for use_cuts in (True, False):
        res = solve_cns(inst, SolverOptions(use_cuts=use_cuts))
        assert res.optimal and res.levels == 1 and res.sparse_solves == 0
        assert res.trace[0].set_kind == "integral"
        assert res.objective == pytest.approx(20.0)


def test_cuts_close_single_server_gap():
    # plain LP has y = 0.4; the covering cut forces y = 1
    inst = make_instance([[1]], [[10]], [[4]], [10.0], [[1.0]])
    res = solve_cns(inst)
    assert res.root_plain_bound == pytest.approx(8.0)
    assert res.root_bound == pytest.approx(14.0)
    assert res.optimal and res.sparse_solves == 0


def test_infeasible_when_demand_exceeds_capacity():
    inst = make_instance([[1]], [[10], [10]], [[6, 6]], [1.0, 1.0], [[1.0, 1.0]])
    inst = inst.with_extensions(Extensions((9,), 10, (30, 30), (frozenset(),)))
    assert inst.d_new.sum() + inst.d.sum() > 20
    for use_cuts in (True, False):
        res = solve_cns(inst, SolverOptions(use_cuts=use_cuts))
        assert res.status is SolveStatus.INFEASIBLE and res.solution is None


def test_three_identical_servers_bound_improves():
    inst = three_identical()
    res = solve_cns(inst)
    plain = solve_cns(inst, SolverOptions(use_cuts=False))
    assert res.root_bound > res.root_plain_bound + 1e-6
    assert plain.root_bound == pytest.approx(res.root_plain_bound)
    assert res.objective == pytest.approx(plain.objective) == pytest.approx(exhaustive_optimum(inst)[0])
    assert any(c.kind in ("y", "y-fix") for c in solve_cns(inst, SolverOptions(record_cuts=True)).cuts)


def fake_lp(y, rc):
    return LpSolution(LpStatus.OPTIMAL, primal=np.asarray(y, float), reduced_costs=np.asarray(rc, float))


def test_select_piercing_set_examples():
    opts = SolverOptions()
    cols = np.arange(3)
    assert select_piercing_set(fake_lp([0, 0.5, 0], [0.2, 0, 5e-5]), cols, opts) == ([0], PiercingKind.REDUCED_COST)
    assert select_piercing_set(fake_lp([0.2, 0.5, 0.0], [0, 0, 0]), cols, opts) == ([2], PiercingKind.ZERO_VALUE)
    assert select_piercing_set(fake_lp([0.2, 0.5, 0.7], [0, 0, 0]), cols, opts) == ([], PiercingKind.FALLBACK)


def test_sparse_all_servers_is_infeasible():
    inst = three_identical()
    mip, cols = build_proposed(inst)
    res = solve_sparse(mip, cols, [0, 1, 2], SolverOptions(), math.inf, None)
    assert res.status is MilpStatus.INFEASIBLE
    with pytest.raises(ValueError):
        solve_sparse(mip, cols, [], SolverOptions(), math.inf, None)


@pytest.mark.parametrize("S", [[0], [1], [2], [0, 1]])
@pytest.mark.parametrize("backend", ["native", "highs"])
def test_sparse_matches_enumeration(S, backend):
    inst = make_instance([[2], [3]], [[7], [6], [9]], [[1, 1, 1], [1, 0, 1]], [5.0, 4.0, 6.0],
                         [[1.0, 2.0, 1.5], [2.0, 1.0, 3.0]])
    mip, cols = build_proposed(inst)
    res = solve_sparse(mip, cols, S, SolverOptions(mip_backend=backend), math.inf, None)
    # enumeration oracle: z only needs to reach x, so bound it by the x bound
    box = mip.ub.copy()
    box[cols.block("z")] = mip.ub[cols.block("x")]
    for k in S:
        box[cols.block("y")[k]] = 0
        box[cols.block("x")[:, k]] = 0
        box[cols.block("z")[:, k]] = 0
    ref = brute_force_optimum(mip.with_bounds(np.arange(mip.num_cols), ub=box))
    assert res.status is ref.status
    if ref.optimal:
        assert res.objective == pytest.approx(ref.objective, abs=1e-9)


def assert_matches_oracles(inst, opts=None):
    res = solve_cns(inst, opts)
    ref, _ = exhaustive_optimum(inst)
    if math.isinf(ref):
        assert res.status is SolveStatus.INFEASIBLE
        return res
    assert res.optimal
    assert res.objective == pytest.approx(ref, rel=1e-6, abs=1e-9)
    assert check_feasibility(inst, res.solution).ok
    assert evaluate_objective(inst, res.solution) == pytest.approx(res.objective, rel=1e-9)
    return res


@pytest.mark.parametrize("idx", range(20))
def test_matches_exhaustive(idx):
    assert_matches_oracles(tiny_instance(idx))


@pytest.mark.parametrize("idx", range(10))
def test_without_cuts_and_native_backend(idx):
    inst = tiny_instance(100 + idx)
    assert_matches_oracles(inst, SolverOptions(use_cuts=False))
    assert_matches_oracles(inst, SolverOptions(mip_backend="native"))


@pytest.mark.parametrize("idx", range(12))
def test_extended_matches_milp(idx):
    base = tiny_params(idx)
    p = GenParams(base.num_servers, base.alpha, seed=idx, beta=0.2, eta=0.5, lam=0.9, theta=0.15,
                  vm_type_ids=base.vm_type_ids, server_type_ids=base.server_type_ids)
    inst = generate_extended(p)
    ref = solve_milp(build_extended(inst)[0])
    res = solve_cns(inst)
    if ref.status is MilpStatus.INFEASIBLE:
        assert res.status is SolveStatus.INFEASIBLE
        return
    assert res.optimal
    assert res.objective == pytest.approx(ref.objective, rel=1e-6)
    assert check_feasibility(inst, res.solution).ok


def feasible_y_patterns(mip, cols):
    """Every y in {0,1}^K for which the program has an integer completion."""
    Y = cols.block("y")
    out = set()
    for pattern in itertools.product((0, 1), repeat=len(Y)):
        p = np.array(pattern, float)
        if np.any(p < mip.lb[Y]) or np.any(p > mip.ub[Y]):
            continue
        if solve_milp(mip.with_bounds(Y, lb=p, ub=p)).optimal:
            out.add(pattern)
    return out


@pytest.mark.parametrize("idx", [0, 1, 2, 5, 8])
def test_partition_of_dense_regions(idx):
    inst = tiny_instance(idx)
    res = solve_cns(inst, SolverOptions(use_cuts=False))
    mip, cols = build_proposed(inst)
    Y = cols.block("y")
    dense = mip
    seen = 0
    for rec in res.trace:
        if not rec.piercing:
            continue
        S = list(rec.piercing)
        sparse = dense.with_bounds(Y[S], ub=np.zeros(len(S)))
        nxt = dense.with_rows([Row(Y[S], np.ones(len(S)), GE, 1.0)])
        f_dense, f_sparse, f_next = (feasible_y_patterns(m, cols) for m in (dense, sparse, nxt))
        assert f_sparse | f_next == f_dense
        assert not (f_sparse & f_next)
        dense = nxt
        seen += 1
    assert seen == sum(1 for r in res.trace if r.piercing)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 500), st.booleans())
def test_monotone_trace(idx, use_cuts):
    res = solve_cns(tiny_instance(idx), SolverOptions(use_cuts=use_cuts))
    lbs = [r.lb for r in res.trace]
    ubs = [r.ub for r in res.trace]
    assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a for a, b in zip(ubs, ubs[1:]))
    for a, b in zip(res.trace, res.trace[1:]):
        if a.set_kind == "S2":
            assert a.s2_subset_s1
            assert b.plain_lb - a.lb >= -1e-9
            assert b.lb - a.lb >= min(a.min_reduced_cost, SolverOptions().epsilon) - 1e-7


def test_recorded_cuts_have_certificates():
    cuts = []
    for idx in range(6):
        cuts += solve_cns(tiny_instance(idx), SolverOptions(record_cuts=True)).cuts
    assert cuts
    for c in cuts:
        assert check_certificate(c.certificate) in (None, "skip")


def test_zero_time_limit_reports_root_bound():
    inst = tiny_instance(1)
    res = solve_cns(inst, SolverOptions(time_limit=0))
    assert res.status is SolveStatus.TIME_LIMIT and res.solution is None
    assert res.bound <= exhaustive_optimum(inst)[0] + 1e-9


def test_deterministic():
    inst = tiny_instance(4)
    a, b = solve_cns(inst), solve_cns(inst)
    assert a.objective == b.objective and a.levels == b.levels
    assert [r.piercing for r in a.trace] == [r.piercing for r in b.trace]
