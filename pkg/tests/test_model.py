import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmcp.formulation import build_extended, build_proposed, solution_to_vector
from vmcp.generator import vm_catalog, server_catalog
from vmcp.model import (
    Extensions, Instance, Solution, check_feasibility, evaluate_objective, exhaustive_optimum,
    make_instance, upper_bound_v, validate_instance,
)

from conftest import tiny_instance


def one_server(n=1, c_run=100.0, c_alloc=10.0, c_mig=10.0):
    return make_instance([[1]], [[10]], [[n]], [c_run], [[c_alloc]], [[c_mig]])


def test_validate_well_formed(toy):
    assert validate_instance(toy).ok


def test_validate_reports_capacity_overflow():
    inst = make_instance([[2, 1]], [[4, 8]], [[5]], [1.0], [[1.0]], resource_names=["CPU", "RAM"])
    rep = validate_instance(inst)
    assert not rep.ok
    assert any("current placement exceeds CPU capacity of server 0" in m for m in rep)


def test_validate_reports_negative_cost():
    inst = make_instance([[1]], [[4]], [[1]], [1.0], [[-1.0]])
    assert any("negative cost" in m for m in validate_instance(inst))


def test_validate_dimension_mismatch():
    inst = make_instance([[1]], [[4]], [[1, 0]], [1.0], [[1.0]])
    assert not validate_instance(inst).ok


def test_upper_bound_v_catalog_examples():
    vm1, vm5 = vm_catalog()[0], vm_catalog()[4]
    s1 = server_catalog()[0]
    inst = make_instance([vm1.demand, vm5.demand], [s1.capacity], [[3], [0]], [1.0], [[1.0], [1.0]])
    assert upper_bound_v(inst, 0, 0) == 3  # min(3, min(4, 8, 100))
    assert upper_bound_v(inst, 1, 0) == 0  # 4 // 8
    assert upper_bound_v(inst).shape == (2, 1)


def test_upper_bound_v_zero_demand_type():
    inst = make_instance([[1]], [[4]], [[0]], [1.0], [[1.0]])
    assert upper_bound_v(inst, 0, 0) == 0


def test_upper_bound_skips_zero_resource():
    inst = make_instance([[0, 2]], [[0, 5]], [[2]], [1.0], [[1.0]])
    assert upper_bound_v(inst, 0, 0) == 2


def test_evaluate_objective_examples():
    inst = one_server()
    assert evaluate_objective(inst, Solution([[1]], [1], [[0]])) == 110.0
    assert evaluate_objective(inst, Solution([[1]], [1], [[1]])) == 120.0
    empty = make_instance(np.zeros((1, 1), int), [[1]], [[0]], [0.0], [[0.0]])
    assert evaluate_objective(empty, Solution([[0]], [0], [[0]])) == 0.0


def test_evaluate_objective_dimension_mismatch():
    with pytest.raises(ValueError):
        evaluate_objective(one_server(), Solution([[1, 0]], [1], [[0]]))


def test_check_feasibility_examples():
    inst = one_server()
    rep = check_feasibility(inst, Solution([[1]], [0], [[0]]))
    assert any("capacity violation at server 0" in m for m in rep)
    assert check_feasibility(inst, Solution([[1]], [1], [[0]])).ok


def test_check_feasibility_budget():
    inst = make_instance([[1]], [[10], [10]], [[1, 0]], [1.0, 1.0], [[1.0, 1.0]])
    inst = inst.with_extensions(Extensions((0,), 0, (5, 5), (frozenset(),)))
    rep = check_feasibility(inst, Solution([[0, 1]], [0, 1], [[0, 1]], [[0, 0]]))
    assert any("migration budget" in m for m in rep)


def test_check_feasibility_exact_migration_flag():
    inst = one_server(n=1)
    sol = Solution([[1]], [1], [[1]])  # z larger than (x - n)^+
    assert not check_feasibility(inst, sol).ok
    assert check_feasibility(inst, sol, exact_migration=False).ok


def test_json_round_trip(toy, tmp_path):
    ext = Extensions((1, 0), 2, (3, 4), (frozenset({1}), frozenset()))
    inst = toy.with_extensions(ext)
    inst.metadata["note"] = "x"
    path = tmp_path / "i.json"
    inst.save(path)
    back = Instance.load(path)
    assert back.to_json() == inst.to_json()
    assert back.extensions == ext
    assert np.array_equal(back.placement, inst.placement)


def test_exhaustive_optimum_hand_instance(toy):
    # Everything fits on server 1 (load (4, 5) of (6, 6)): run cost 12 plus the
    # migrations of one type-0 VM (2.0) and one type-1 VM (2.5); keeping both
    # servers on costs 22, and server 0 alone lacks RAM.
    best, sol = exhaustive_optimum(toy)
    assert best == pytest.approx(toy.fixed_cost + 16.5)
    assert sol.y.tolist() == [0, 1]
    assert check_feasibility(toy, sol).ok
    assert evaluate_objective(toy, sol) == pytest.approx(best)


def test_exhaustive_optimum_single_server():
    inst = make_instance([[3]], [[4]], [[1]], [1.0], [[1.0]])
    assert exhaustive_optimum(inst)[0] == 1.0 + 1.0
    empty = make_instance([[3]], [[2]], [[0]], [1.0], [[1.0]])
    assert exhaustive_optimum(empty)[0] == 0.0  # nothing to place


@st.composite
def instance_and_solution(draw):
    inst = tiny_instance(draw(st.integers(0, 400)))
    nt, ns = inst.num_types, inst.num_servers
    x = np.array(draw(st.lists(st.integers(0, 4), min_size=nt * ns, max_size=nt * ns))).reshape(nt, ns)
    y = np.array(draw(st.lists(st.integers(0, 1), min_size=ns, max_size=ns)))
    z = np.maximum(x - inst.placement, 0) + np.array(
        draw(st.lists(st.integers(0, 1), min_size=nt * ns, max_size=nt * ns))).reshape(nt, ns)
    if draw(st.booleans()):
        # use a feasible-looking starting point: the current placement
        x, y, z = inst.placement.copy(), (inst.placement.sum(0) > 0).astype(int), np.zeros((nt, ns), int)
    return inst, Solution(x, y, z)


@settings(max_examples=150, deadline=None)
@given(instance_and_solution())
def test_feasibility_matches_mip_rows(pair):
    inst, sol = pair
    mip, cols = build_proposed(inst)
    vec = solution_to_vector(inst, cols, sol)
    assert check_feasibility(inst, sol, exact_migration=False).ok == mip.is_feasible(vec)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 400))
def test_accepted_solutions_cost_at_least_fixed(idx):
    inst = tiny_instance(idx)
    best, sol = exhaustive_optimum(inst)
    if sol is not None:
        assert check_feasibility(inst, sol).ok
        assert math.isfinite(evaluate_objective(inst, sol))
        assert evaluate_objective(inst, sol) >= inst.fixed_cost


def test_current_placement_is_feasible_solution():
    inst = tiny_instance(3)
    y = (inst.placement.sum(0) > 0).astype(int)
    sol = Solution(inst.placement, y, np.zeros_like(inst.placement))
    assert check_feasibility(inst, sol).ok
