"""Result reporting: cost breakdown, JSON/CSV artifacts, plot data.

Reports are deterministic: report.json carries no wall-clock timings (those
live only in trace.csv), dictionary keys are sorted, and every float is
serialized with repr-level precision, so identical inputs yield
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import carbon as carbonmod
from .instance import (NetworkInstance, PlanningDecision, annualization_factor,
                       plan_subsidy)
from .milp import MixedIntegerProgram, solve_lp
from .opmodel import (Realization, build_operations_block,
                      loss_cost_coefficients)

MONEY_TOL = 1e-6


@dataclass
class PlanReport:
    """Cost breakdown and solve summary for one planning run."""
    instance: str
    mode: str
    plan: PlanningDecision
    breakdown: dict            # component -> annualized money (1e4 CNY)
    total: float
    bound: float
    gap: float
    iterations: int
    converged: bool
    nodes: int                 # total branch-and-bound nodes across masters
    config: dict = field(default_factory=dict)
    carbon_intensity: np.ndarray | None = None   # (nodes, T)
    voltage_pu: np.ndarray | None = None          # (nodes, T) at nominal
    dispatch: carbonmod.DispatchPlan | None = None

    def validate(self) -> None:
        s = sum(self.breakdown.values())
        if abs(s - self.total) > MONEY_TOL:
            raise ValueError(f"breakdown sums to {s}, total is {self.total}")
        for name, v in self.breakdown.items():
            if name == "subsidy":
                if v > MONEY_TOL:
                    raise ValueError("subsidy must be non-positive")
            elif v < -MONEY_TOL:
                raise ValueError(f"component {name} is negative: {v}")


def _nominal_operation(inst: NetworkInstance, plan: PlanningDecision,
                       station_type: str, k_seg: int, facets: int):
    """Solve the inner LP per scenario at the nominal realization; returns
    probability-weighted loads, a representative operating point, and the
    weighted voltage profile."""
    pi0 = np.asarray(inst.pi0, float)
    loads_acc = np.zeros((inst.n_nodes, inst.t_count))
    flows_acc = None
    op_acc = None
    volt_acc = np.zeros((inst.n_nodes, inst.t_count))
    for s in range(inst.n_scenarios):
        prog = MixedIntegerProgram("min")
        block = build_operations_block(
            prog, inst, s, Realization.nominal(inst),
            z_fixed=plan.z, y_fixed=plan.y, k_seg=k_seg, facets=facets,
            station_type=station_type)
        for j, c in loss_cost_coefficients(inst, block).items():
            prog.add_obj(j, c)
        sol = solve_lp(prog, backend="auto")
        if not sol.ok:
            raise RuntimeError(f"nominal operation infeasible in scenario {s}")
        op = carbonmod.operating_point_from_solution(inst, plan, block, sol.x)
        loads, reverse = carbonmod.node_loads(op)
        # Keep the signed net so averaged flows stay balance-consistent:
        # scenarios where a station exports must not be clamped away.
        loads_acc += pi0[s] * (loads - reverse)
        for v in range(inst.n_nodes):
            for t in range(inst.t_count):
                volt_acc[v, t] += pi0[s] * math.sqrt(
                    float(sol.x[block.vsq[(v, t)]]))
        if flows_acc is None:
            flows_acc = pi0[s] * op.flows_mw
        else:
            flows_acc += pi0[s] * op.flows_mw
    # Probability-weighted operating point for the carbon trace. Net loads
    # are folded into the grid component so node_loads() reproduces the
    # weighted consumption exactly; flow balance is linear, so the averaged
    # flows remain consistent with the averaged loads.
    mean_op = carbonmod.OperatingPoint(
        flows_mw=flows_acc,
        p_sub_mw=flows_acc_sub(inst, plan, loads_acc, flows_acc),
        p_grid_mw=loads_acc,
        p_ev_mw=np.zeros_like(loads_acc), p_pv_mw=np.zeros_like(loads_acc),
        p_ch_mw=np.zeros_like(loads_acc), p_dch_mw=np.zeros_like(loads_acc),
        z=tuple(plan.z))
    return np.maximum(loads_acc, 0.0), mean_op, volt_acc


def flows_acc_sub(inst, plan, loads, flows):
    """Substation injections consistent with averaged lossless flows."""
    p_sub = np.zeros((inst.n_nodes, inst.t_count))
    for v in inst.substation_nodes:
        out = np.zeros(inst.t_count)
        for k, ln in enumerate(inst.lines):
            if not round(plan.z[k]):
                continue
            if ln.from_node == v:
                out += flows[k]
            elif ln.to_node == v:
                out -= flows[k]
        p_sub[v] = np.maximum(out, 0.0)
    return p_sub


def build_report(outcome, inst: NetworkInstance, *, mode: str,
                 station_type: str = "pses",
                 k_seg: int, facets: int, config: dict | None = None
                 ) -> PlanReport:
    """Assemble the cost breakdown from a finished planning run.

    Loss cost is the certified worst-case expectation from the final
    subproblem; carbon and procurement are evaluated at the nominal
    realization with reference probabilities (the third layer is decoupled
    from the robust layers).
    """
    plan = outcome.plan
    a_line = annualization_factor(inst.discount_rate, inst.line_lifetime_years)
    a_pses = annualization_factor(inst.discount_rate, inst.pses_lifetime_years)
    line_build = sum(a_line * inst.lines[k].build_cost
                     for k in plan.built_lines())
    line_salt = sum(inst.lines[k].salt_cost for k in plan.built_lines())
    station_build = 0.0
    station_salt = 0.0
    subsidy = 0.0
    for p in plan.built_stations():
        cost = (inst.pses[p].cost if station_type == "pses"
                else inst.conventional_station_cost)
        station_build += a_pses * cost
        station_salt += inst.pses[p].salt_coeff * cost
        if station_type == "pses":
            subsidy += inst.pses[p].subsidy_per_year
    loads, mean_op, volt = _nominal_operation(inst, plan, station_type,
                                              k_seg, facets)
    dispatch = carbonmod.optimize_procurement(loads, inst)
    cef = carbonmod.compute_cef(mean_op, dispatch, inst)
    c_carbon = carbonmod.carbon_cost(cef, inst)
    c_proc = carbonmod.procurement_cost(dispatch, inst)
    breakdown = {
        "line_construction": line_build,
        "station_investment": station_build,
        "salt_spray": line_salt + station_salt,
        "network_loss": float(outcome.worst_case.value),
        "carbon": c_carbon,
        "procurement": c_proc,
        "subsidy": -subsidy,
    }
    total = sum(breakdown.values())
    rep = PlanReport(
        instance=inst.name, mode=mode, plan=plan, breakdown=breakdown,
        total=total, bound=float(outcome.bound) if math.isfinite(outcome.bound)
        else 0.0,
        gap=float(outcome.gap) if math.isfinite(outcome.gap) else -1.0,
        iterations=outcome.iterations, converged=outcome.converged,
        nodes=sum(tr.nodes for tr in outcome.trace),
        config=dict(config or {}),
        carbon_intensity=cef.e_nodal, voltage_pu=volt, dispatch=dispatch)
    rep.validate()
    return rep


# -- file emission -------------------------------------------------------


def write_report_json(rep: PlanReport, path) -> None:
    doc = {
        "instance": rep.instance,
        "mode": rep.mode,
        "plan": {"z": list(rep.plan.z), "y": list(rep.plan.y)},
        "costs": {k: round(v, 9) for k, v in sorted(rep.breakdown.items())},
        "total": round(rep.total, 9),
        "bound": round(rep.bound, 9),
        "gap": round(rep.gap, 12),
        "iterations": rep.iterations,
        "converged": rep.converged,
        "nodes": rep.nodes,
        "config": rep.config,
        "dispatch": {
            "p_tg_mw": [round(float(v), 9) for v in rep.dispatch.p_tg_mw],
            "p_tc_mw": [round(float(v), 9) for v in rep.dispatch.p_tc_mw],
            "e_gen": [round(float(v), 9) for v in rep.dispatch.e_gen],
            "grid_resolution": rep.dispatch.grid_resolution,
        } if rep.dispatch is not None else None,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_plan_json(rep: PlanReport, path) -> None:
    doc = {"instance": rep.instance,
           "z": list(rep.plan.z), "y": list(rep.plan.y)}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_plan_json(path) -> PlanningDecision:
    doc = json.loads(Path(path).read_text())
    return PlanningDecision(z=tuple(int(v) for v in doc["z"]),
                            y=tuple(int(v) for v in doc["y"]))


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "phase", "lb", "ub", "ub_bar", "lb_bar",
                    "master_gap", "subproblem_value", "wall_ms", "nodes"])
        for tr in trace:
            w.writerow([tr.iteration, tr.phase, f"{tr.lb:.9g}",
                        f"{tr.ub:.9g}", f"{tr.ub_bar:.9g}", f"{tr.lb_bar:.9g}",
                        f"{tr.master_gap:.9g}", f"{tr.subproblem_value:.9g}",
                        f"{tr.wall_ms:.3f}", tr.nodes])


def write_convergence_csv(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "lb", "ub_bar"])
        for tr in trace:
            w.writerow([tr.iteration, f"{tr.lb:.9g}", f"{tr.ub_bar:.9g}"])


def write_voltage_csv(rep: PlanReport, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "t", "voltage_pu"])
        if rep.voltage_pu is None:
            return
        n, t_count = rep.voltage_pu.shape
        for v in range(n):
            for t in range(t_count):
                w.writerow([v, t, f"{rep.voltage_pu[v, t]:.9f}"])


def write_intensity_csv(rep: PlanReport, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["node", "t", "intensity_t_per_mwh"])
        if rep.carbon_intensity is None:
            return
        n, t_count = rep.carbon_intensity.shape
        for v in range(n):
            for t in range(t_count):
                w.writerow([v, t, f"{rep.carbon_intensity[v, t]:.9f}"])


def write_artifacts(rep: PlanReport, trace, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "plan": out / "plan.json",
        "trace": out / "trace.csv",
        "convergence": out / "convergence.csv",
        "voltage": out / "voltage_profiles.csv",
        "intensity": out / "intensity_heatmap.csv",
    }
    write_report_json(rep, paths["report"])
    write_plan_json(rep, paths["plan"])
    write_trace_csv(trace, paths["trace"])
    write_convergence_csv(trace, paths["convergence"])
    write_voltage_csv(rep, paths["voltage"])
    write_intensity_csv(rep, paths["intensity"])
    return {k: str(v) for k, v in paths.items()}
