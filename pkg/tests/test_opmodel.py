"""Operational constraint blocks: flows, losses, storage, stations."""

import math

import numpy as np
import pytest

from coastplan.casesuite import ess_exactness_check, random_small_instance
from coastplan.instance import PlanningDecision
from coastplan.milp import MixedIntegerProgram, solve_lp
from coastplan.opmodel import (LossSurrogate, Realization,
                               build_operations_block, loss_cost_coefficients,
                               operation_cost_surrogate, operation_cost_true)


def solve_nominal(inst, z, y, scenario=0, k_seg=4, facets=8,
                  station_type="pses"):
    prog = MixedIntegerProgram("min")
    block = build_operations_block(
        prog, inst, scenario, Realization.nominal(inst),
        z_fixed=z, y_fixed=y, k_seg=k_seg, facets=facets,
        station_type=station_type)
    for j, c in loss_cost_coefficients(inst, block).items():
        prog.add_obj(j, c)
    sol = solve_lp(prog, backend="auto")
    assert sol.ok, sol.status
    return prog, block, sol


def test_loss_surrogate_under_approximates():
    sur = LossSurrogate(k_seg=4)
    smax = 5.0
    for x in np.linspace(-smax, smax, 101):
        assert sur.value(float(x), smax) <= x * x + 1e-12
    # Tight at the tangent points, max gap per the tangent construction.
    for pt in sur.tangent_points(smax):
        assert sur.value(pt, smax) == pytest.approx(pt * pt, abs=1e-12)
    assert sur.max_gap(smax) == pytest.approx((smax / 4) ** 2 / 4)


def test_flow_balance_on_demo6(demo6):
    z = (1, 1, 1, 1, 1, 0, 0, 0)
    y = (0, 0)
    prog, block, sol = solve_nominal(demo6, z, y)
    # Lossless balance: substation output equals total load per interval.
    for t in range(demo6.t_count):
        sub = sum(float(sol.x[block.p_sub[(v, t)]])
                  for v in demo6.substation_nodes)
        load = float(demo6.p_load_mw[:, t].sum())
        assert sub == pytest.approx(load, abs=1e-7)


def test_voltage_within_bounds_and_drop_equality(demo6):
    z = (1, 1, 1, 1, 1, 0, 0, 0)
    prog, block, sol = solve_nominal(demo6, z, (0, 0))
    vmin2, vmax2 = demo6.vmin_pu ** 2, demo6.vmax_pu ** 2
    for (v, t), j in block.vsq.items():
        assert vmin2 - 1e-9 <= sol.x[j] <= vmax2 + 1e-9
    # On built lines the big-M drop relation must be an equality.
    for k in range(5):
        ln = demo6.lines[k]
        for t in range(demo6.t_count):
            drop = 2 * (ln.r_ohm * float(sol.x[block.p_flow[(k, t)]])
                        + ln.x_ohm * float(sol.x[block.q_flow[(k, t)]])) \
                / demo6.v_base_kv ** 2
            lhs = float(sol.x[block.vsq[(ln.from_node, t)]]) \
                - float(sol.x[block.vsq[(ln.to_node, t)]])
            assert lhs == pytest.approx(drop, abs=1e-6)


def test_unbuilt_station_is_inert(demo6):
    z = (1, 1, 1, 1, 1, 0, 0, 0)
    prog, block, sol = solve_nominal(demo6, z, (0, 0))
    for key, j in block.p_pv.items():
        assert sol.x[j] == pytest.approx(0.0, abs=1e-9)
    for key, j in block.p_ch.items():
        assert sol.x[j] == pytest.approx(0.0, abs=1e-9)
    for key, j in block.p_dch.items():
        assert sol.x[j] == pytest.approx(0.0, abs=1e-9)


def test_ess_recursion_value(demo6):
    # One charging hour at efficiency mu_ch from the initial level.
    z = (1, 1, 1, 1, 1, 0, 0, 0)
    prog, block, sol = solve_nominal(demo6, z, (0, 1))
    e = demo6.pses[1].ess
    dt = demo6.dt_hours
    for t in range(demo6.t_count):
        prev = e.e_initial_mwh if t == 0 else float(
            sol.x[block.e_ess[(1, t - 1)]])
        got = float(sol.x[block.e_ess[(1, t)]])
        ch = float(sol.x[block.p_ch[(1, t)]])
        dch = float(sol.x[block.p_dch[(1, t)]])
        assert got == pytest.approx(
            prev + e.mu_ch * ch * dt - dch * dt / e.mu_dch, abs=1e-7)


def test_conventional_station_has_no_pv_or_storage(demo6):
    # A tree with tie lines: the EV load at node 5 needs the short feed.
    z = (1, 1, 0, 1, 0, 0, 1, 1)
    prog, block, sol = solve_nominal(demo6, z, (0, 1),
                                     station_type="conventional")
    assert not block.p_pv
    assert not block.p_ch
    # EV demand still lands on the balance: substation serves load + EV.
    t = 0
    sub = sum(float(sol.x[block.p_sub[(v, t)]])
              for v in demo6.substation_nodes)
    load = float(demo6.p_load_mw[:, t].sum())
    ev = float(demo6.pses[1].ev_mw[0, t])
    assert sub == pytest.approx(load + ev, abs=1e-7)


def test_surrogate_below_true_cost(demo6):
    z = (1, 1, 1, 1, 1, 0, 0, 0)
    prog, block, sol = solve_nominal(demo6, z, (0, 1))
    sur = operation_cost_surrogate(demo6, block, sol.x)
    true = operation_cost_true(demo6, block, sol.x)
    assert sur <= true + 1e-9


def test_box_realization_shifts_balance(demo6):
    # Raising node 3's demand at t=1 raises the substation output by the
    # same amount (lossless balance).
    z = (1, 1, 1, 1, 1, 0, 0, 0)
    from coastplan.opmodel import box_entries
    entries = box_entries(demo6)
    up = [e for e in entries if e.kind == "dp"]
    assert up, "demo instance declares a demand deviation"
    u = tuple(1 if e.kind == "dp" else 0 for e in entries)
    real = Realization.from_u(demo6, entries, u)
    prog, block, sol = solve_nominal(demo6, z, (0, 0))
    prog2 = MixedIntegerProgram("min")
    block2 = build_operations_block(
        prog2, demo6, 0, real, z_fixed=z, y_fixed=(0, 0), k_seg=4, facets=8)
    for j, c in loss_cost_coefficients(demo6, block2).items():
        prog2.add_obj(j, c)
    sol2 = solve_lp(prog2, backend="auto")
    assert sol2.ok
    t = 1
    sub1 = sum(float(sol.x[block.p_sub[(v, t)]])
               for v in demo6.substation_nodes)
    sub2 = sum(float(sol2.x[block2.p_sub[(v, t)]])
               for v in demo6.substation_nodes)
    assert sub2 - sub1 == pytest.approx(float(demo6.dp_up_mw[3, t]), abs=1e-7)


def test_relaxed_storage_matches_binary():
    rng = np.random.default_rng(11)
    inst = random_small_instance(rng, tight_station_feed=True)
    gap, overlap = ess_exactness_check(inst)
    assert gap < 1e-6
    assert overlap < 1e-6
