from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmcp.cns import SolveStatus, solve_cns
from vmcp.generator import (
    GenParams, adjust_vm_count, generate, generate_basic, generate_extended, instance_loads,
    max_single_type, server_catalog, vm_catalog,
)
from vmcp.model import validate_instance


def test_catalog_examples():
    assert vm_catalog()[2].demand == (4, 8, 300)
    s7, s1 = server_catalog()[6], server_catalog()[0]
    assert (*s7.capacity, s7.p_max) == (16, 32, 4000, 300)
    assert (*s1.capacity, s1.p_max) == (4, 8, 1000, 180)
    assert len(vm_catalog()) == 5 and len(server_catalog()) == 10


def test_cost_example():
    inst = generate_basic(GenParams(1, 0.2, seed=0))  # server 0 has type 1
    assert inst.cost_run[0] == pytest.approx(108.0)
    assert inst.cost_alloc[1, 0] == pytest.approx(36.0)
    assert np.array_equal(inst.cost_mig, inst.cost_alloc)


def test_cost_formulas_full_catalog():
    inst = generate_basic(GenParams(10, 0.3, seed=2))
    for k, sp in enumerate(server_catalog()):
        p_max = Fraction(sp.p_max)
        assert inst.cost_run[k] == float(Fraction(6, 10) * p_max)
        for i, vm in enumerate(vm_catalog()):
            exact = (p_max - Fraction(6, 10) * p_max) * Fraction(vm.cpu, sp.cpu)
            assert inst.cost_alloc[i, k] == float(exact)
            assert inst.cost_mig[i, k] == float(exact)


def test_round_robin_server_types():
    inst = generate_basic(GenParams(23, 0.2, seed=1))
    types = inst.metadata["server_types"]
    assert types == [k % 10 + 1 for k in range(23)]
    assert [types.count(t) for t in range(1, 11)] == [3, 3, 3] + [2] * 7


def test_lambda_example():
    inst = generate_extended(GenParams(1, 0.2, seed=0, lam=0.85))
    assert max_single_type(inst)[0] == 4
    assert inst.extensions.m == (3,)


def test_beta_zero_keeps_basic_placement():
    p = GenParams(12, 0.3, seed=5, beta=0.0, eta=0.4)
    ext, basic = generate_extended(p), generate_basic(p)
    assert np.array_equal(ext.placement, basic.placement)
    assert sum(ext.extensions.d_new) == 0
    assert ext.extensions.ell == int(Fraction("0.4") * int(basic.placement.sum()))


def test_budget_uses_post_reclassification_count():
    inst = generate_extended(GenParams(40, 0.3, seed=3, beta=0.4, eta=0.35))
    assert sum(inst.extensions.d_new) > 0
    assert inst.extensions.ell == (35 * int(inst.placement.sum())) // 100
    assert inst.metadata["num_vms"] == int(inst.placement.sum())


def test_theta_one_forbids_everything_and_is_infeasible():
    inst = generate_extended(GenParams(4, 0.2, seed=0, theta=1.0))
    assert all(f == frozenset(range(4)) for f in inst.extensions.forbidden)
    assert solve_cns(inst).status is SolveStatus.INFEASIBLE


def test_defaults_leave_side_constraints_loose():
    inst = generate_extended(GenParams(6, 0.2, seed=0, eta=None, theta=None, beta=None, lam=None))
    e = inst.extensions
    assert e.ell == int(inst.placement.sum())
    assert tuple(max_single_type(inst)) == e.m
    assert all(not f for f in e.forbidden)


def test_params_validation():
    for bad in ({"alpha": 0.0}, {"alpha": 1.5}, {"alpha": 0.2, "beta": 1.2}, {"alpha": 0.2, "theta": -0.1}):
        with pytest.raises(ValueError):
            GenParams(3, **bad)
    with pytest.raises(ValueError):
        GenParams(-1, 0.2)


@pytest.mark.parametrize("params", [
    GenParams(30, 0.2, seed=1), GenParams(25, 0.9, seed=4),
    GenParams(20, 0.5, seed=7, beta=0.35, eta=0.3, lam=0.8, theta=0.05),
])
def test_byte_identical(params):
    assert generate(params).to_json() == generate(params).to_json()


def test_seed_changes_instance():
    assert generate_basic(GenParams(20, 0.2, seed=1)).to_json() != generate_basic(GenParams(20, 0.2, seed=2)).to_json()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.sampled_from([0.05, 0.2, 0.4, 0.6, 0.8, 0.95, 1.0]), st.integers(0, 2**32))
def test_load_postcondition(ns, alpha, seed):
    inst = generate_basic(GenParams(ns, alpha, seed=seed))
    assert validate_instance(inst).ok
    used = inst.placement.T @ inst.demand
    assert np.all(used <= inst.capacity)
    loads = instance_loads(inst)
    assert np.allclose(loads, inst.metadata["sigma"])
    sat = set(inst.metadata["saturated"])
    for k in range(ns):
        if k in sat:
            room = inst.capacity[k] - used[k]
            assert not np.any(np.all(inst.demand <= room, axis=1))
        else:
            assert loads[k] > alpha


def test_adjust_vm_count():
    inst = generate_basic(GenParams(250, 0.2, seed=42))
    up = adjust_vm_count(inst, 959, 42)
    down = adjust_vm_count(inst, 800, 42)
    assert up.total_vms() == 959 and down.total_vms() == 800
    assert validate_instance(up).ok and validate_instance(down).ok
    assert np.all(down.placement <= inst.placement)
    assert np.all(up.placement >= inst.placement)
    with pytest.raises(ValueError):
        adjust_vm_count(generate_basic(GenParams(1, 0.2)), 10**6)
