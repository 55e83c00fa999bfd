"""Planning loop: convergence, bounds, and agreement with the exact variant."""

import math

import numpy as np
import pytest

from coastplan.casesuite import random_small_instance, terminal_assignment
from coastplan.iccg import (IccgParams, IterationCapExceeded, ccg_solve,
                            iccg_solve)
from coastplan.instance import PlanningDecision
from coastplan.topology import is_radial


def test_params_validation():
    with pytest.raises(ValueError):
        IccgParams(epsilon=0.0)
    with pytest.raises(ValueError):
        IccgParams(epsilon=0.01, epsilon_tilde=0.5)
    IccgParams(epsilon=0.01, epsilon_tilde=0.005)   # boundary-legal


def test_demo6_converges_and_bounds_are_ordered(demo6):
    out = iccg_solve(demo6, k_seg=4, facets=8)
    assert out.converged
    assert is_radial(demo6, out.plan.z)
    assert out.bound <= out.value + 1e-9
    assert out.gap < IccgParams().epsilon
    # Monotone non-decreasing certified lower bounds along the trace.
    lbs = [tr.lb for tr in out.trace]
    assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:])) or len(lbs) == 1


def test_demo6_iccg_matches_ccg(demo6):
    a = iccg_solve(demo6, k_seg=4, facets=8)
    b = ccg_solve(demo6, k_seg=4, facets=8)
    assert a.value == pytest.approx(b.value, rel=0.01)
    assert a.plan.z == b.plan.z
    assert a.plan.y == b.plan.y


def test_fixed_stations_are_respected(demo6):
    out = iccg_solve(demo6, k_seg=4, facets=8,
                     fixed_stations={0: 0, 1: 1})
    assert out.plan.y == (0, 1)
    out2 = iccg_solve(demo6, k_seg=4, facets=8,
                      fixed_stations=terminal_assignment(demo6))
    assert out2.plan.y == tuple(1 if p.terminal else 0 for p in demo6.pses)


def test_iteration_cap_carries_incumbent(demo6):
    params = IccgParams(max_iterations=1)
    with pytest.raises(IterationCapExceeded) as exc:
        ccg_solve(demo6, params=params, k_seg=4, facets=8)
    out = exc.value.outcome
    assert not out.converged
    assert math.isfinite(out.value)
    assert out.iterations == 1


def test_trace_phases_and_worst_case_consistency(demo6):
    out = iccg_solve(demo6, k_seg=4, facets=8)
    assert out.trace[-1].phase == "final"
    # Reported value = first-stage cost + certified worst case.
    assert out.value == pytest.approx(out.investment + out.worst_case.value,
                                      abs=1e-8)


def test_random_instances_agree_with_exact():
    rng = np.random.default_rng(17)
    for _ in range(3):
        inst = random_small_instance(rng, max_nodes=6, max_intervals=4)
        a = iccg_solve(inst, k_seg=2, facets=4)
        b = ccg_solve(inst, k_seg=2, facets=4)
        assert a.value == pytest.approx(b.value, rel=0.01)
