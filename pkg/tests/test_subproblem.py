"""Worst-case recourse subproblem: methods, certificates, and the oracle."""

import numpy as np
import pytest

from coastplan.casesuite import random_small_instance
from coastplan.instance import PlanningDecision
from coastplan.opmodel import Realization, build_operations_block, \
    loss_cost_coefficients
from coastplan.milp import MixedIntegerProgram, solve_lp
from coastplan.subproblem import (InfeasiblePlan, oracle_subproblem_bruteforce,
                                  relevant_entries, scenario_groups,
                                  solve_subproblem)
from coastplan.uncertainty import AmbiguitySet, worst_case_probabilities

DEMO_PLAN = PlanningDecision(z=(1, 1, 0, 1, 1, 0, 0, 1), y=(0, 1))


def test_methods_agree_on_demo6(demo6):
    amb = AmbiguitySet.from_instance(demo6)
    vals = {}
    for method in ("corners", "dual", "kkt"):
        res = solve_subproblem(DEMO_PLAN, demo6, amb, method=method,
                               k_seg=4, facets=8)
        vals[method] = res.value
        assert res.method == method
    assert vals["dual"] == pytest.approx(vals["corners"], rel=1e-6)
    assert vals["kkt"] == pytest.approx(vals["corners"], rel=1e-6)


def test_matches_bruteforce_oracle(demo6):
    amb = AmbiguitySet.from_instance(demo6)
    res = solve_subproblem(DEMO_PLAN, demo6, amb, k_seg=4, facets=8)
    ref, u_ref, pi_ref = oracle_subproblem_bruteforce(DEMO_PLAN, demo6, amb,
                                                      k_seg=4, facets=8)
    assert res.value == pytest.approx(ref, rel=1e-8)
    assert tuple(res.u) == tuple(u_ref)
    assert np.allclose(res.pi, pi_ref, atol=1e-9)


def test_certificate_replays(demo6):
    """Re-solving the inner LPs at the returned corner and reweighting with
    the returned probabilities reproduces the reported value."""
    amb = AmbiguitySet.from_instance(demo6)
    res = solve_subproblem(DEMO_PLAN, demo6, amb, k_seg=4, facets=8)
    real = Realization.from_u(demo6, res.entries, res.u)
    costs = np.empty(demo6.n_scenarios)
    for s in range(demo6.n_scenarios):
        prog = MixedIntegerProgram("min")
        block = build_operations_block(
            prog, demo6, s, real, z_fixed=DEMO_PLAN.z, y_fixed=DEMO_PLAN.y,
            k_seg=4, facets=8)
        for j, c in loss_cost_coefficients(demo6, block).items():
            prog.add_obj(j, c)
        sol = solve_lp(prog, backend="auto")
        assert sol.ok
        costs[s] = sol.objective
    assert np.allclose(costs, res.scenario_costs, atol=1e-7)
    pi, value = worst_case_probabilities(costs, amb)
    assert value == pytest.approx(res.value, abs=1e-6)


def test_scenario_grouping_depends_on_built_stations(demo6):
    # demo6's two scenarios differ only through station EV profiles, so
    # with no stations built they collapse into one recourse group.
    no_station = PlanningDecision(z=DEMO_PLAN.z, y=(0, 0))
    assert scenario_groups(demo6, no_station) == [[0, 1]]
    assert scenario_groups(demo6, DEMO_PLAN) == [[0], [1]]


def test_irrelevant_pv_entries_dropped(demo6):
    # The PV deviation at an unbuilt station cannot affect recourse.
    no_station = PlanningDecision(z=DEMO_PLAN.z, y=(0, 0))
    kinds = [(e.kind, e.index) for e in
             relevant_entries(demo6, no_station, "pses")]
    assert ("pv", 1) not in kinds
    kinds_built = [(e.kind, e.index) for e in
                   relevant_entries(demo6, DEMO_PLAN, "pses")]
    assert ("pv", 1) in kinds_built


def test_infeasible_plan_raises(demo6):
    bad = PlanningDecision(z=(1, 1, 1, 1, 1, 0, 0, 0), y=(0, 1))
    amb = AmbiguitySet.from_instance(demo6)
    with pytest.raises(InfeasiblePlan):
        solve_subproblem(bad, demo6, amb, k_seg=4, facets=8,
                         station_type="conventional")


def test_value_dominates_nominal_realization(demo6):
    amb = AmbiguitySet.from_instance(demo6)
    res = solve_subproblem(DEMO_PLAN, demo6, amb, k_seg=4, facets=8)
    nominal = float(np.asarray(demo6.pi0) @ res.scenario_costs)
    assert res.value >= nominal - 1e-9


def test_random_instances_match_oracle():
    rng = np.random.default_rng(21)
    from coastplan.casesuite import _first_tree_plan
    for _ in range(5):
        inst = random_small_instance(rng, n_scenarios=3)
        plan = _first_tree_plan(inst)
        amb = AmbiguitySet.from_instance(inst)
        res = solve_subproblem(plan, inst, amb, k_seg=4, facets=8)
        ref, _, _ = oracle_subproblem_bruteforce(plan, inst, amb,
                                                 k_seg=4, facets=8)
        assert res.value == pytest.approx(ref, rel=1e-5, abs=1e-8)
