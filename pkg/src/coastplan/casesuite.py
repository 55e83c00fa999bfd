"""Cross-module validation: the four-case comparison and property sweeps.

The case matrix reproduces the qualitative orderings of the study design:

  A: conventional charging stations, exact column-and-constraint generation
  B: conventional charging stations, inexact variant
  C: integrated PV-storage-EV stations, inexact variant (full co-planning)
  D: like C but stations pre-assigned to the terminal (feeder-end) candidates

Expected orderings: total(C) <= total(A) ~ total(B), total(C) <= total(D),
loss(D) > loss(C), voltage std(C) <= voltage std(D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import carbon as carbonmod
from .iccg import IccgParams, IterationCapExceeded, ccg_solve, iccg_solve
from .instance import (NetworkInstance, PlanningDecision, instance_from_dict,
                       load_instance)
from .milp import MixedIntegerProgram, solve_lp, solve_mip
from .opmodel import (Realization, build_operations_block,
                      loss_cost_coefficients)
from .report import build_report
from .subproblem import oracle_subproblem_bruteforce, solve_subproblem
from .topology import (build_radiality_constraints,
                       enumerate_radial_topologies)
from .uncertainty import (AmbiguitySet, ambiguity_lp_value,
                          worst_case_probabilities)


@dataclass(frozen=True)
class CaseConfig:
    label: str                  # A | B | C | D
    station_type: str           # "conventional" | "pses"
    algorithm: str              # "ccg" | "iccg"
    fixed_to_terminal: bool = False


CASES = (
    CaseConfig("A", "conventional", "ccg"),
    CaseConfig("B", "conventional", "iccg"),
    CaseConfig("C", "pses", "iccg"),
    CaseConfig("D", "pses", "iccg", fixed_to_terminal=True),
)


def terminal_assignment(inst: NetworkInstance) -> dict[int, int]:
    """Fix every candidate: terminal ones built, the rest not."""
    return {p: (1 if spec.terminal else 0)
            for p, spec in enumerate(inst.pses)}


def run_case(inst: NetworkInstance, case: CaseConfig, *,
             params: IccgParams | None = None,
             k_seg: int = 2, facets: int = 4) -> dict:
    solver = ccg_solve if case.algorithm == "ccg" else iccg_solve
    fixed = terminal_assignment(inst) if case.fixed_to_terminal else None
    try:
        outcome = solver(inst, params=params, station_type=case.station_type,
                         fixed_stations=fixed, k_seg=k_seg, facets=facets)
    except IterationCapExceeded as exc:
        outcome = exc.outcome
    rep = build_report(outcome, inst, mode=case.algorithm,
                       station_type=case.station_type,
                       k_seg=k_seg, facets=facets)
    volt = rep.voltage_pu
    return {
        "label": case.label,
        "plan": {"z": list(outcome.plan.z), "y": list(outcome.plan.y)},
        "total": rep.total,
        "breakdown": dict(rep.breakdown),
        "converged": outcome.converged,
        "iterations": outcome.iterations,
        "nodes": rep.nodes,
        "voltage_std": float(np.std(volt)),
        "voltage_range": float(volt.max() - volt.min()),
    }


def run_case_matrix(instance, *, params: IccgParams | None = None,
                    k_seg: int = 2, facets: int = 4,
                    assert_orderings: bool = True) -> dict:
    inst = (instance if isinstance(instance, NetworkInstance)
            else load_instance(instance))
    params = params or IccgParams()
    results = {c.label: run_case(inst, c, params=params,
                                 k_seg=k_seg, facets=facets)
               for c in CASES}
    eps = params.epsilon
    checks = {
        "A_equals_B": abs(results["A"]["total"] - results["B"]["total"])
        <= eps * abs(results["A"]["total"]) + 1e-9,
        "C_leq_A": results["C"]["total"]
        <= results["A"]["total"] * (1 + eps) + 1e-9,
        "C_leq_D": results["C"]["total"]
        <= results["D"]["total"] * (1 + eps) + 1e-9,
        "loss_D_gt_C": results["D"]["breakdown"]["network_loss"]
        > results["C"]["breakdown"]["network_loss"],
        "vstd_C_leq_D": results["C"]["voltage_std"]
        <= results["D"]["voltage_std"] + 1e-9,
    }
    out = {"cases": results, "checks": checks,
           "node_ratio_B_over_A": (results["B"]["nodes"]
                                   / max(results["A"]["nodes"], 1))}
    if assert_orderings:
        failed = [k for k, ok in checks.items() if not ok]
        if failed:
            raise AssertionError(f"case-matrix orderings violated: {failed}")
    return out


# -- randomized small instances -----------------------------------------------


def random_small_instance(rng: np.random.Generator, *,
                          max_nodes: int = 8, max_intervals: int = 6,
                          n_scenarios: int = 2,
                          tight_station_feed: bool = False) -> NetworkInstance:
    """Small feasible instance on a random tree plus a few extra candidates."""
    n = int(rng.integers(4, max_nodes + 1))
    t_count = int(rng.integers(2, max_intervals + 1))
    nodes = [{"id": 0, "is_substation": True,
              "p_load_mw": 0.0, "q_load_mvar": 0.0}]
    for v in range(1, n):
        p = [round(float(rng.uniform(0.1, 0.5)), 4) for _ in range(t_count)]
        nodes.append({"id": v, "p_load_mw": p,
                      "q_load_mvar": [round(x * 0.4, 4) for x in p]})
    lines = []
    parents = {}
    for v in range(1, n):
        parent = int(rng.integers(0, v))
        parents[v] = parent
        lines.append({"from": parent, "to": v, "r_ohm": 0.1, "x_ohm": 0.07,
                      "smax_mva": 6.0, "length_km": 1.0,
                      "cost_per_km": 15.0, "salt_coeff": 0.05})
    n_extra = int(rng.integers(0, 3))
    existing = {(min(l["from"], l["to"]), max(l["from"], l["to"]))
                for l in lines}
    tries = 0
    while n_extra > 0 and tries < 20:
        tries += 1
        a, b = sorted(rng.integers(0, n, size=2).tolist())
        if a == b or (a, b) in existing:
            continue
        existing.add((a, b))
        lines.append({"from": a, "to": b, "r_ohm": 0.12, "x_ohm": 0.08,
                      "smax_mva": 6.0, "length_km": 1.2,
                      "cost_per_km": 15.0, "salt_coeff": 0.05})
        n_extra -= 1
    leaves = sorted(set(range(1, n)) - set(parents.values()))
    stn = int(leaves[-1]) if tight_station_feed else int(rng.integers(1, n))
    ev = [[round(float(rng.uniform(0.05, 0.3)), 4) for _ in range(t_count)]
          for _ in range(n_scenarios)]
    mu_ch = round(float(rng.uniform(0.85, 0.98)), 3)
    mu_dch = round(float(rng.uniform(0.85, 0.98)), 3)
    e_max = 3.0
    if tight_station_feed:
        # Cap the leaf's single feeding line just below the station's peak
        # pull so roughly 0.25 MW must come out of the storage: the binding
        # flow makes the charge/discharge split matter in the objective.
        peak = t_count // 2
        ev = [[(1.0 if t == peak else 0.05) for t in range(t_count)]
              for _ in range(n_scenarios)]
        dt = 24.0 / t_count
        e_max = round(1.0 + 0.6 * dt / mu_dch + 0.5, 3)
        p_pk = nodes[stn]["p_load_mw"][peak] + 1.0
        q_pk = nodes[stn]["q_load_mvar"][peak]
        for l in lines:
            if stn in (l["from"], l["to"]):
                l["smax_mva"] = round(1.06 * math.hypot(p_pk - 0.25, q_pk), 4)
    pses = [{
        "node": stn, "cost": 60.0, "salt_coeff": 0.05,
        "subsidy_per_year": 1.0,
        "pv_cap_mw": round(float(rng.uniform(0.0, 0.4)), 4),
        "pv_dev_down_mw": 0.0,
        "ev_mw": ev,
        "ess": {"p_ch_max_mw": 0.6, "p_dch_max_mw": 0.6,
                "e_min_mwh": 0.1, "e_max_mwh": e_max,
                "mu_ch": mu_ch, "mu_dch": mu_dch, "e_initial_mwh": 1.0},
    }]
    pi_raw = rng.uniform(0.2, 1.0, size=n_scenarios)
    pi0 = (pi_raw / pi_raw.sum()).round(6)
    pi0[-1] = round(1.0 - float(pi0[:-1].sum()), 6)
    dev_node = int(rng.integers(1, n))
    dev_t = int(rng.integers(0, t_count))
    nodes[dev_node]["dp_up_mw"] = [
        round(float(rng.uniform(0.05, 0.2)), 4) if t == dev_t else 0.0
        for t in range(t_count)]
    data = {
        "name": f"random-{n}n-{t_count}t",
        "horizon": {"intervals": t_count, "hours_per_year": 8760},
        "finance": {"discount_rate": 0.05, "line_lifetime_years": 20,
                    "pses_lifetime_years": 10},
        "voltage": {"vmin_pu": 0.93, "vmax_pu": 1.07, "v_base_kv": 12.66},
        "nodes": nodes,
        "lines": lines,
        "areas": [{"name": "all", "nodes": list(range(1, n)),
                   "carbon_price_per_t": 0.004, "pses_min": 0,
                   "pses_max": len(pses)}],
        "pses": pses,
        "units": {"thermal": {"cap_mw": 30.0, "price_per_mwh": 0.04,
                              "intensity_t_per_mwh": 0.85},
                  "tidal": {"cap_mw": 1.0, "price_per_mwh": 0.03,
                            "intensity_t_per_mwh": 0.0}},
        "tariffs": {"tou_price_per_mwh":
                    [round(float(rng.uniform(0.03, 0.11)), 4)
                     for _ in range(t_count)]},
        "substation": {"p_max_mw": 30.0, "q_max_mvar": 20.0},
        "uncertainty": {"alpha1": 0.95, "alpha_inf": 0.95, "sigma2": 0.1,
                        "pi0": [float(v) for v in pi0]},
        "conventional_station_cost": 40.0,
        "per_interval_intensity": False,
    }
    return instance_from_dict(data)


def _first_tree_plan(inst: NetworkInstance, build_all=True) -> PlanningDecision:
    z = next(iter(enumerate_radial_topologies(inst)))
    y = tuple(1 if build_all else 0 for _ in inst.pses)
    return PlanningDecision(z=z, y=y)


# -- individual property checks ------------------------------------------------


def ess_exactness_check(inst: NetworkInstance, seed: int = 0,
                        scenario: int = 0) -> tuple[float, float]:
    """Relaxed-vs-binary storage gap and the worst gamma overlap.

    The overlap is measured on a lexicographic refinement of the relaxed
    optimum: with the loss objective pinned at its optimal value, total
    charge + discharge is minimized. Dissipating energy through simultaneous
    charge and discharge is cost-neutral when storage throughput is unpriced,
    so untreated LP optima can be degenerate; the claim is that an
    overlap-free optimum always exists, not that every solver vertex is one.
    """
    plan = _first_tree_plan(inst)
    objs = {}
    overlap = 0.0
    for binary in (False, True):
        prog = MixedIntegerProgram("min")
        block = build_operations_block(
            prog, inst, scenario, Realization.nominal(inst),
            z_fixed=plan.z, y_fixed=plan.y, k_seg=4, facets=8,
            binary_gamma=binary)
        coefs = loss_cost_coefficients(inst, block)
        for j, c in coefs.items():
            prog.add_obj(j, c)
        sol = (solve_mip(prog, backend="auto") if binary
               else solve_lp(prog, backend="auto"))
        if not sol.ok:
            raise RuntimeError(f"ESS check LP/MILP is {sol.status.value}")
        objs[binary] = float(sol.objective)
        if binary:
            continue
        prog2 = MixedIntegerProgram("min")
        block2 = build_operations_block(
            prog2, inst, scenario, Realization.nominal(inst),
            z_fixed=plan.z, y_fixed=plan.y, k_seg=4, facets=8)
        coefs2 = loss_cost_coefficients(inst, block2)
        prog2.add_constr(dict(coefs2), "<=", objs[False] + 1e-9)
        for jch in block2.p_ch.values():
            prog2.add_obj(jch, 1.0)
        for jdch in block2.p_dch.values():
            prog2.add_obj(jdch, 1.0)
        for g in (*block2.gamma_ch.values(), *block2.gamma_dch.values()):
            prog2.add_obj(g, 1e-6)
        sol2 = solve_lp(prog2, backend="auto")
        if not sol2.ok:
            raise RuntimeError(f"ESS refinement LP is {sol2.status.value}")
        for key, jch in block2.p_ch.items():
            prod = float(sol2.x[jch]) * float(sol2.x[block2.p_dch[key]])
            overlap = max(overlap, prod)
        for key, jch in block2.gamma_ch.items():
            prod = float(sol2.x[jch]) * float(sol2.x[block2.gamma_dch[key]])
            overlap = max(overlap, prod)
    return abs(objs[True] - objs[False]), overlap


def topology_set_check(inst: NetworkInstance, cap: int = 2000) -> bool:
    """MILP-feasible radial set equals brute-force enumeration (set equality
    via exhaustive no-good enumeration of the MILP)."""
    brute = set(enumerate_radial_topologies(inst))
    found = set()
    prog = MixedIntegerProgram("min")
    topo = build_radiality_constraints(prog, inst)
    z = [int(j) for j in topo["z"]]
    while len(found) <= cap:
        sol = solve_mip(prog, backend="auto")
        if not sol.ok:
            break
        zz = tuple(int(round(sol.x[j])) for j in z)
        if zz in found:
            raise AssertionError("no-good cut failed to exclude a topology")
        found.add(zz)
        ones = [j for j in z if round(sol.x[j])]
        zeros = [j for j in z if not round(sol.x[j])]
        coefs = {j: 1.0 for j in ones}
        coefs.update({j: -1.0 for j in zeros})
        prog.add_constr(coefs, "<=", float(len(ones) - 1))
    return found == brute


def cef_conservation_check(inst: NetworkInstance, scenario: int = 0,
                           tol: float = 1e-6) -> float:
    """Worst per-interval carbon mass imbalance at the nominal operation."""
    plan = _first_tree_plan(inst)
    prog = MixedIntegerProgram("min")
    block = build_operations_block(
        prog, inst, scenario, Realization.nominal(inst),
        z_fixed=plan.z, y_fixed=plan.y, k_seg=4, facets=8)
    for j, c in loss_cost_coefficients(inst, block).items():
        prog.add_obj(j, c)
    sol = solve_lp(prog, backend="auto")
    if not sol.ok:
        raise RuntimeError(f"CEF check LP is {sol.status.value}")
    op = carbonmod.operating_point_from_solution(inst, plan, block, sol.x)
    loads, reverse = carbonmod.node_loads(op)
    dispatch = carbonmod.optimize_procurement(loads, inst)
    cef = carbonmod.compute_cef(op, dispatch, inst)
    worst = 0.0
    for t in range(inst.t_count):
        consumed = float(np.sum(cef.e_nodal[:, t] * cef.loads_mw[:, t]))
        injected = float(sum(dispatch.e_gen[t] * op.p_sub_mw[v, t]
                             for v in inst.substation_nodes))
        worst = max(worst, abs(consumed - injected))
    return worst


# -- the aggregated suites ------------------------------------------------------


def run_property_suites(seed: int = 0, n_instances: int = 10) -> dict:
    rng = np.random.default_rng(seed)
    suites: dict[str, dict] = {}

    worst = 0.0
    for _ in range(n_instances):
        inst = random_small_instance(rng, tight_station_feed=True)
        gap, overlap = ess_exactness_check(inst)
        worst = max(worst, gap, overlap)
    suites["ess_exactness"] = {"passed": worst < 1e-6, "n": n_instances,
                               "max_err": worst}

    ok = True
    for _ in range(max(n_instances // 2, 3)):
        inst = random_small_instance(rng, max_nodes=6)
        ok = ok and topology_set_check(inst)
    suites["topology_set_equality"] = {"passed": ok,
                                       "n": max(n_instances // 2, 3),
                                       "max_err": 0.0 if ok else 1.0}

    worst = 0.0
    for _ in range(max(n_instances // 2, 3)):
        inst = random_small_instance(rng)
        plan = _first_tree_plan(inst)
        amb = AmbiguitySet.from_instance(inst)
        fast = solve_subproblem(plan, inst, amb, method="dual",
                                k_seg=4, facets=8)
        slow, _, _ = oracle_subproblem_bruteforce(plan, inst, amb,
                                                  k_seg=4, facets=8)
        worst = max(worst, abs(fast.value - slow) / max(abs(slow), 1.0))
    suites["subproblem_oracle"] = {"passed": worst < 1e-5,
                                   "n": max(n_instances // 2, 3),
                                   "max_err": worst}

    worst = 0.0
    for _ in range(50 * n_instances):
        n_s = int(rng.integers(2, 8))
        pi_raw = rng.uniform(0.05, 1.0, size=n_s)
        amb = AmbiguitySet(tuple(pi_raw / pi_raw.sum()),
                           float(rng.uniform(0.01, 0.8)),
                           float(rng.uniform(0.005, 0.5)))
        costs = rng.uniform(0.0, 100.0, size=n_s)
        _, greedy = worst_case_probabilities(costs, amb)
        lp = ambiguity_lp_value(costs, amb)
        worst = max(worst, abs(greedy - lp))
    suites["ambiguity_greedy_vs_lp"] = {"passed": worst < 1e-8,
                                        "n": 50 * n_instances,
                                        "max_err": worst}

    worst = 0.0
    for _ in range(max(n_instances // 2, 3)):
        inst = random_small_instance(rng)
        worst = max(worst, cef_conservation_check(inst))
    suites["cef_conservation"] = {"passed": worst < 1e-6,
                                  "n": max(n_instances // 2, 3),
                                  "max_err": worst}

    worst = 0.0
    runs = max(n_instances // 3, 2)
    for _ in range(runs):
        inst = random_small_instance(rng, max_nodes=6, max_intervals=4)
        try:
            a = iccg_solve(inst, k_seg=2, facets=4).value
            b = ccg_solve(inst, k_seg=2, facets=4).value
        except IterationCapExceeded as exc:
            a = b = math.nan
        rel = abs(a - b) / max(abs(b), 1.0)
        worst = max(worst, rel if math.isfinite(rel) else 1.0)
    suites["iccg_vs_ccg"] = {"passed": worst <= 0.01, "n": runs,
                             "max_err": worst}
    return suites
