"""Two-stage robust planning loop: master problem plus worst-case subproblem.

Two drivers share the machinery:

  * ``ccg_solve``: classic column-and-constraint generation — every master
    is solved (near-)exactly, each iteration retains the newest worst-case
    realization, and the loop stops at relative gap epsilon.
  * ``iccg_solve``: the inexact variant. Masters are solved to a coarse,
    progressively tightened gap. Each iteration records the master's proof
    bound LB_i and its incumbent value UB_i; the incumbent value is used as
    a (possibly overshooting) lower cut ``f + eta >= lb_bar`` for the next
    master. When the incumbent stalls against the best upper bound
    (exploitation trigger eps_tilde), the loop backtracks to the last value
    with a certified proof bound, restores lb_bar from it and shrinks the
    master gap by alpha; otherwise it explores by retaining the newest
    worst-case realization. Termination compares the best upper bound with
    the best certified proof bound only.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .instance import (NetworkInstance, PlanningDecision, investment_cost,
                       plan_subsidy)
from .milp import MixedIntegerProgram, ProgramError, solve_mip
from .opmodel import (DEFAULT_FACETS, DEFAULT_LOSS_SEGMENTS, Realization,
                      build_operations_block, loss_cost_coefficients)
from .subproblem import InfeasiblePlan, SubproblemResult, solve_subproblem
from .topology import build_radiality_constraints
from .uncertainty import AmbiguitySet


@dataclass(frozen=True)
class IccgParams:
    epsilon: float = 0.01            # final relative gap
    epsilon_tilde: float = 0.005     # exploitation trigger, in (0, eps/(eps+1))
    master_gap0: float = 0.05        # initial master relative gap
    alpha: float = 0.2               # master-gap shrink factor
    max_iterations: int = 60
    retained_cap: int = 25

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must be in (0,1)")
        limit = self.epsilon / (self.epsilon + 1.0)
        if not 0.0 < self.epsilon_tilde < limit:
            raise ValueError(
                f"epsilon_tilde must be in (0, {limit:.6g}), got {self.epsilon_tilde}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0,1)")
        if self.master_gap0 <= 0:
            raise ValueError("master_gap0 must be positive")


@dataclass
class IterationTrace:
    iteration: int
    phase: str                   # "exploration" | "exploitation" | "final"
    lb: float                    # master proof bound LB_i
    ub: float                    # master incumbent value UB_i
    ub_bar: float                # best certified upper bound so far
    lb_bar: float                # lower cut in force for this master
    master_gap: float
    subproblem_value: float
    ell: int                     # iteration index of the last certified bound
    wall_ms: float
    nodes: int


@dataclass
class PlanOutcome:
    plan: PlanningDecision
    value: float                 # ub_bar: investment + worst-case loss cost
    bound: float                 # best certified lower bound
    investment: float
    subsidy: float
    worst_case: SubproblemResult
    trace: list[IterationTrace]
    iterations: int
    converged: bool

    @property
    def gap(self) -> float:
        if not math.isfinite(self.value) or self.value == 0:
            return math.inf
        return (self.value - self.bound) / abs(self.value)


def _master_scenario_groups(inst: NetworkInstance) -> list[list[int]]:
    """Scenario groups by identical EV demand across all candidates (the
    master does not know which stations get built)."""
    groups: dict[bytes, list[int]] = {}
    for s in range(inst.n_scenarios):
        key = (np.concatenate([p.ev_mw[s] for p in inst.pses]).tobytes()
               if inst.pses else b"")
        groups.setdefault(key, []).append(s)
    return sorted(groups.values(), key=lambda g: g[0])


def solve_master(retained: list[SubproblemResult], lb_bar: float, gap: float,
                 inst: NetworkInstance, *,
                 station_type: str = "pses",
                 fixed_stations: dict[int, int] | None = None,
                 excluded: list[tuple] | None = None,
                 k_seg: int = DEFAULT_LOSS_SEGMENTS,
                 facets: int = DEFAULT_FACETS,
                 backend: str = "auto",
                 incumbent=None,
                 dump_path=None):
    """One master solve. Returns (plan, eta, LB proof bound, UB incumbent,
    node count)."""
    prog = MixedIntegerProgram("min", name="planning-master")
    topo = build_radiality_constraints(prog, inst)
    z = topo["z"]
    y = np.array([prog.add_var(f"y[{p}]", lb=0.0, ub=1.0, integer=True)
                  for p in range(len(inst.pses))])
    if fixed_stations:
        for p, v in fixed_stations.items():
            prog.lb[int(y[p])] = prog.ub[int(y[p])] = float(v)
    # Investment objective (station subsidy nets against the build cost).
    from .instance import annualization_factor
    a_line = annualization_factor(inst.discount_rate, inst.line_lifetime_years)
    a_pses = annualization_factor(inst.discount_rate, inst.pses_lifetime_years)
    invest: dict[int, float] = {}
    for k, ln in enumerate(inst.lines):
        invest[int(z[k])] = a_line * ln.build_cost + ln.salt_cost
    for p, spec in enumerate(inst.pses):
        cost = spec.cost if station_type == "pses" else inst.conventional_station_cost
        credit = spec.subsidy_per_year if station_type == "pses" else 0.0
        invest[int(y[p])] = a_pses * cost + spec.salt_coeff * cost - credit
    for j, c in invest.items():
        prog.add_obj(j, c)
    # Per-area station counts.
    node_to_cand = {}
    for p, spec in enumerate(inst.pses):
        node_to_cand.setdefault(spec.node, []).append(p)
    for area in inst.areas:
        cands = [p for v in area.nodes for p in node_to_cand.get(v, [])]
        if not cands:
            continue
        coefs = {int(y[p]): 1.0 for p in cands}
        if area.pses_min > 0:
            prog.add_constr(coefs, ">=", float(area.pses_min),
                            name=f"area_min[{area.name}]")
        if area.pses_max < len(cands):
            prog.add_constr(coefs, "<=", float(area.pses_max),
                            name=f"area_max[{area.name}]")
    # Feasibility cuts: plans whose operations stage proved infeasible.
    for z_bad, y_bad in excluded or ():
        coefs: dict[int, float] = {}
        ones = 0
        for k, v in enumerate(z_bad):
            coefs[int(z[k])] = 1.0 if v else -1.0
            ones += int(v)
        for p, v in enumerate(y_bad):
            coefs[int(y[p])] = 1.0 if v else -1.0
            ones += int(v)
        prog.add_constr(coefs, "<=", float(ones - 1))
    eta = prog.add_var("eta", lb=0.0, ub=math.inf)
    prog.add_obj(eta, 1.0)
    groups = _master_scenario_groups(inst)
    for d, res in enumerate(retained):
        pi = np.asarray(res.pi)
        cut: dict[int, float] = {eta: 1.0}
        for g in groups:
            w = float(pi[list(g)].sum())
            if w <= 1e-12:
                continue
            block = build_operations_block(
                prog, inst, g[0], res.realization, z_vars=z, y_vars=y,
                k_seg=k_seg, facets=facets, station_type=station_type,
                prefix=f"d{d}g{g[0]}.")
            for j, c in loss_cost_coefficients(inst, block).items():
                cut[j] = cut.get(j, 0.0) - w * c
        prog.add_constr(cut, ">=", 0.0, name=f"eta_cut[{d}]")
    if lb_bar > 0.0:
        row = dict(invest)
        row[eta] = row.get(eta, 0.0) + 1.0
        prog.add_constr(row, ">=", lb_bar, name="lower_cut")
    if dump_path is not None:
        prog.dump_lp(dump_path)
    kw = {}
    if incumbent is not None and backend == "native":
        kw["incumbent"] = incumbent
    sol = solve_mip(prog, rel_gap=gap, backend=backend, **kw)
    if not sol.ok:
        raise ProgramError(f"master problem is {sol.status.value}")
    plan = PlanningDecision(
        z=tuple(int(round(sol.x[int(j)])) for j in z),
        y=tuple(int(round(sol.x[int(j)])) for j in y),
        y_parent=tuple(int(round(sol.x[int(j)])) for j in topo["y_arc"]))
    lb = sol.bound if math.isfinite(sol.bound) else sol.objective
    return plan, float(sol.x[eta]), float(lb), float(sol.objective), sol.nodes


def _plan_cost(plan, inst, station_type):
    """Annualized first-stage cost net of subsidies."""
    override = None if station_type == "pses" else inst.conventional_station_cost
    f = investment_cost(plan, inst, station_cost_override=override)
    if station_type == "pses":
        f -= plan_subsidy(plan, inst)
    return f


class IterationCapExceeded(RuntimeError):
    """Raised when the iteration budget runs out before the gap closes;
    carries the best incumbent outcome found so far."""

    def __init__(self, outcome: "PlanOutcome"):
        super().__init__(
            f"no convergence in {outcome.iterations} iterations "
            f"(gap {outcome.gap:.4g})")
        self.outcome = outcome


def iccg_solve(inst: NetworkInstance, amb: AmbiguitySet | None = None,
               params: IccgParams | None = None, *,
               station_type: str = "pses",
               fixed_stations: dict[int, int] | None = None,
               k_seg: int = DEFAULT_LOSS_SEGMENTS,
               facets: int = DEFAULT_FACETS,
               backend: str = "auto",
               subproblem_method: str = "auto",
               exact_master: bool = False,
               dump_dir=None) -> PlanOutcome:
    params = params or IccgParams()
    if amb is None:
        amb = AmbiguitySet.from_instance(inst)
    retained: list[SubproblemResult] = []
    excluded: list[tuple] = []
    trace: list[IterationTrace] = []
    lb_bar = 0.0
    ub_bar = math.inf
    best: tuple[PlanningDecision, SubproblemResult] | None = None
    ell = 0
    lb_ell = 0.0
    eps_mp = 1e-9 if exact_master else params.master_gap0
    incumbent_plan = None
    start = time.perf_counter()
    for it in range(1, params.max_iterations + 1):
        t0 = time.perf_counter()
        dump = None
        if dump_dir is not None:
            dump = f"{dump_dir}/master_{it:02d}.lp"
        plan, eta, lb_i, ub_i, nodes = solve_master(
            retained, lb_bar, eps_mp, inst, station_type=station_type,
            fixed_stations=fixed_stations, excluded=excluded,
            k_seg=k_seg, facets=facets, backend=backend, dump_path=dump)
        if lb_i >= lb_ell:
            ell, lb_ell = it, lb_i
        lb_bar = ub_i
        try:
            sub = solve_subproblem(plan, inst, amb, method=subproblem_method,
                                   k_seg=k_seg, facets=facets,
                                   station_type=station_type, backend=backend)
        except InfeasiblePlan:
            # The master had no operational information for this plan; cut
            # it off and try again. Master bounds stay valid: the cut only
            # removes plans outside the true feasible set.
            excluded.append((plan.z, plan.y))
            trace.append(IterationTrace(
                iteration=it, phase="feasibility", lb=lb_i, ub=ub_i,
                ub_bar=ub_bar, lb_bar=lb_bar, master_gap=eps_mp,
                subproblem_value=math.inf, ell=ell,
                wall_ms=(time.perf_counter() - t0) * 1e3, nodes=nodes))
            continue
        cand = _plan_cost(plan, inst, station_type) + sub.value
        if cand < ub_bar:
            ub_bar = cand
            best = (plan, sub)
        gap_now = math.inf if not math.isfinite(ub_bar) or ub_bar == 0 else \
            (ub_bar - lb_ell) / abs(ub_bar)
        stalled = ub_bar > 0 and (ub_bar - ub_i) / abs(ub_bar) < params.epsilon_tilde
        if gap_now < params.epsilon:
            phase = "final"
        elif not exact_master and stalled and eps_mp > 1e-9:
            # Exploitation: the inexact master can no longer certify progress;
            # back off to the certified bound and tighten the master gap.
            phase = "exploitation"
            lb_bar = lb_ell
            eps_mp = max(params.alpha * eps_mp, 1e-9)
        else:
            phase = "exploration"
            retained.append(sub)
            if len(retained) > params.retained_cap:
                retained.pop(0)
        trace.append(IterationTrace(
            iteration=it, phase=phase, lb=lb_i, ub=ub_i, ub_bar=ub_bar,
            lb_bar=lb_bar, master_gap=eps_mp, subproblem_value=sub.value,
            ell=ell, wall_ms=(time.perf_counter() - t0) * 1e3, nodes=nodes))
        if phase == "final":
            break
    if best is None:
        raise ProgramError("no operationally feasible plan found within the "
                           "iteration budget")
    plan, sub = best
    outcome = PlanOutcome(
        plan=plan, value=ub_bar, bound=lb_ell,
        investment=_plan_cost(plan, inst, station_type),
        subsidy=plan_subsidy(plan, inst) if station_type == "pses" else 0.0,
        worst_case=sub, trace=trace, iterations=len(trace),
        converged=trace[-1].phase == "final")
    if not outcome.converged:
        raise IterationCapExceeded(outcome)
    return outcome


def ccg_solve(inst: NetworkInstance, amb: AmbiguitySet | None = None,
              params: IccgParams | None = None, **kwargs) -> PlanOutcome:
    """Exact column-and-constraint generation baseline."""
    return iccg_solve(inst, amb, params, exact_master=True, **kwargs)
