"""Worst-case recourse evaluation for a fixed plan.

Given a built topology and station selection, find the box realization and
scenario reweighting that maximize the expected annual loss cost of optimal
operation:

    D*(plan) = max_{u in box corners, pi in ambiguity}  sum_s pi_s g_s(u)

where g_s(u) is the optimal value of the scenario-s operational LP at
realization u. Three interchangeable methods:

  * "corners": enumerate box corners; solve the inner LPs per corner; pick
    the worst reweighting in closed form. Exact; exponential in the box
    dimension.
  * "dual": single-level MILP over the probability-scaled inner duals
    (stationarity A'lam = pi_s * c), with exact McCormick products between
    duals and the binary corner indicators. Polynomial-size; exact up to
    the dual magnitude cap, which is verified and escalated after solving.
  * "kkt": the "dual" program plus the primal operational blocks and
    big-M complementarity indicator pairs. Heaviest; small fixtures only.

Scenarios with byte-identical EV demand at the built stations share one
operational block (their probabilities are summed), which keeps the MILPs
proportional to the number of distinct scenarios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import NetworkInstance, PlanningDecision
from .milp import INF, MixedIntegerProgram, solve_lp, solve_mip
from .opmodel import (Realization, box_entries, build_operations_block,
                      loss_cost_coefficients,
                      DEFAULT_FACETS, DEFAULT_LOSS_SEGMENTS)
from .uncertainty import AmbiguitySet, worst_case_probabilities

DUAL_CAP = 1e4
CORNER_DIM_LIMIT = 16


class CombinatorialLimitExceeded(RuntimeError):
    pass


class InfeasiblePlan(RuntimeError):
    pass


class UnboundedM(RuntimeError):
    pass


@dataclass
class SubproblemResult:
    value: float                     # D*: worst-case expected annual loss cost
    u: tuple                         # box corner (0/1 per uncertain entry)
    pi: np.ndarray                   # worst-case scenario probabilities
    scenario_costs: np.ndarray       # g_s at the worst corner, per scenario
    entries: list                    # UncertainEntry list matching u
    realization: Realization
    method: str
    lam: dict = field(default_factory=dict)      # group -> row duals
    omega: dict = field(default_factory=dict)    # group -> indicator values
    stationarity_residual: float = 0.0
    complementarity_residual: float = 0.0


def relevant_entries(inst: NetworkInstance, plan: PlanningDecision,
                     station_type: str = "pses"):
    """Box coordinates that can influence the fixed-plan recourse."""
    built = set(plan.built_stations())
    out = []
    for e in box_entries(inst):
        if e.kind == "pv" and (station_type != "pses" or e.index not in built):
            continue
        out.append(e)
    return out


def scenario_groups(inst: NetworkInstance, plan: PlanningDecision) -> list[list[int]]:
    """Partition scenarios by identical EV demand at the built stations."""
    built = plan.built_stations()
    groups: dict[bytes, list[int]] = {}
    for s in range(inst.n_scenarios):
        key = np.concatenate([inst.pses[p].ev_mw[s] for p in built]).tobytes() \
            if built else b""
        groups.setdefault(key, []).append(s)
    return sorted(groups.values(), key=lambda g: g[0])


def _build_inner(inst, plan, scenario, entries, k_seg, facets, station_type):
    prog = MixedIntegerProgram("min", name=f"inner[s{scenario}]")
    real = Realization.from_u(inst, entries, np.zeros(len(entries)))
    block = build_operations_block(
        prog, inst, scenario, real, z_fixed=plan.z, y_fixed=plan.y,
        k_seg=k_seg, facets=facets, station_type=station_type, entries=entries)
    for j, c in loss_cost_coefficients(inst, block).items():
        prog.add_obj(j, c)
    base_rhs = [row.rhs for row in prog.rows]
    return prog, block, base_rhs


def _apply_u(prog, block, base_rhs, u):
    for row, coeffs in block.u_rows.items():
        prog.rows[row].rhs = base_rhs[row] + sum(
            c * float(u[b]) for b, c in coeffs.items())


def _inner_solve(prog, backend):
    sol = solve_lp(prog, backend=backend)
    if not sol.ok:
        raise InfeasiblePlan(
            f"operational block {prog.name} is {sol.status.value}; the plan "
            "cannot serve this realization")
    return sol


def _certify(inst, plan, amb, entries, groups, inners, u, backend):
    """Exact value at a given corner: replay inner LPs + closed-form pi."""
    costs = np.empty(inst.n_scenarios)
    sols = []
    for g, (prog, block, base) in zip(groups, inners):
        _apply_u(prog, block, base, u)
        sol = _inner_solve(prog, backend)
        sols.append(sol)
        for s in g:
            costs[s] = sol.objective
    pi, value = worst_case_probabilities(costs, amb)
    return value, pi, costs, sols


def _dual_residuals(prog, sol, weight):
    """Stationarity is satisfied by construction; report complementarity of
    the (weight-scaled) duals against the primal point."""
    x = sol.x
    lam = sol.duals if sol.duals is not None else np.zeros(prog.num_constrs)
    comp = 0.0
    for i, row in enumerate(prog.rows):
        if row.sense == "=":
            continue
        slack = row.rhs - sum(a * x[j] for j, a in row.coeffs.items())
        comp = max(comp, abs(weight * lam[i] * slack))
    return weight * lam, comp


# -- corner enumeration ----------------------------------------------------


def _solve_corners(inst, plan, amb, entries, groups, inners, backend):
    n_b = len(entries)
    best = None
    for bits in range(1 << n_b):
        u = np.array([(bits >> b) & 1 for b in range(n_b)], dtype=float)
        val, pi, costs, sols = _certify(inst, plan, amb, entries, groups,
                                        inners, u, backend)
        if best is None or val > best[0] + 1e-12:
            best = (val, u, pi, costs, sols)
    val, u, pi, costs, sols = best
    lam, comp = {}, 0.0
    for gi, (g, sol) in enumerate(zip(groups, sols)):
        w = float(sum(pi[s] for s in g))
        lam[gi], c = _dual_residuals(inners[gi][0], sol, w)
        comp = max(comp, c)
    return SubproblemResult(
        value=val, u=tuple(int(v) for v in u), pi=pi, scenario_costs=costs,
        entries=entries, realization=Realization.from_u(inst, entries, u),
        method="corners", lam=lam, complementarity_residual=comp)


# -- single-level MILP (probability-scaled duals) ---------------------------


def _build_single_level(inst, plan, amb, entries, groups, inners, *,
                        dual_cap, include_kkt):
    """MILP whose optimum is D*. Returns (prog, meta) with the variable maps
    needed to read the solution back."""
    prog = MixedIntegerProgram("max", name="worst-case-subproblem")
    n_b = len(entries)
    u = np.array([prog.add_var(f"u[{b}]", lb=0.0, ub=1.0, integer=True)
                  for b in range(n_b)])
    from .uncertainty import build_ambiguity_rows
    amb_vars = build_ambiguity_rows(prog, amb)
    pi = amb_vars["pi"]
    meta = {"u": u, "pi": pi, "lam": [], "omega": [], "groups": groups,
            "entries": entries}
    for gi, (g, (inner, block, base_rhs)) in enumerate(zip(groups, inners)):
        nv, nr = inner.num_vars, inner.num_constrs
        if any(not math.isfinite(lo) or not math.isfinite(hi)
               for lo, hi in zip(inner.lb, inner.ub)):
            raise UnboundedM("inner primal variable without finite bounds")
        lam = np.empty(nr, dtype=np.int64)
        for i, row in enumerate(inner.rows):
            lo = -dual_cap if row.sense in ("<=", "=") else 0.0
            hi = dual_cap if row.sense in (">=", "=") else 0.0
            lam[i] = prog.add_var(f"lam[{gi},{i}]", lb=lo, ub=hi)
        mu_lo = np.array([prog.add_var(f"mul[{gi},{j}]", lb=0.0, ub=dual_cap)
                          for j in range(nv)])
        mu_hi = np.array([prog.add_var(f"muh[{gi},{j}]", lb=0.0, ub=dual_cap)
                          for j in range(nv)])
        # Stationarity: A'lam + mu_lo - mu_hi = (sum_{s in g} pi_s) * c.
        stat = [dict() for _ in range(nv)]
        for i, row in enumerate(inner.rows):
            for j, a in row.coeffs.items():
                stat[j][int(lam[i])] = stat[j].get(int(lam[i]), 0.0) + a
        for j in range(nv):
            coefs = dict(stat[j])
            coefs[int(mu_lo[j])] = coefs.get(int(mu_lo[j]), 0.0) + 1.0
            coefs[int(mu_hi[j])] = coefs.get(int(mu_hi[j]), 0.0) - 1.0
            cj = inner.obj[j]
            if cj:
                for s in g:
                    coefs[int(pi[s])] = coefs.get(int(pi[s]), 0.0) - cj
            prog.add_constr(coefs, "=", 0.0, name=f"stat[{gi},{j}]")
            prog.add_obj(int(mu_lo[j]), inner.lb[j])
            prog.add_obj(int(mu_hi[j]), -inner.ub[j])
        # Dual value of the rhs: constant part plus McCormick-exact products
        # rho = lam_row * u_b for the box-dependent rows.
        for i, row in enumerate(inner.rows):
            if base_rhs[i]:
                prog.add_obj(int(lam[i]), base_rhs[i])
        for i, coeffs in block.u_rows.items():
            lo, hi = prog.lb[int(lam[i])], prog.ub[int(lam[i])]
            for b, coef in coeffs.items():
                rho = prog.add_var(f"rho[{gi},{i},{b}]", lb=min(lo, 0.0),
                                   ub=max(hi, 0.0))
                ub_var, lv = int(u[b]), int(lam[i])
                prog.add_constr({rho: 1.0, ub_var: -hi}, "<=", 0.0)
                prog.add_constr({rho: 1.0, ub_var: -lo}, ">=", 0.0)
                prog.add_constr({rho: 1.0, lv: -1.0, ub_var: -lo}, "<=", -lo)
                prog.add_constr({rho: 1.0, lv: -1.0, ub_var: -hi}, ">=", -hi)
                prog.add_obj(rho, coef)
        omega = {}
        if include_kkt:
            omega = _add_primal_complementarity(prog, inner, block, base_rhs,
                                                u, lam, mu_lo, mu_hi, gi,
                                                dual_cap)
        meta["lam"].append(lam)
        meta["omega"].append(omega)
    return prog, meta


def _add_primal_complementarity(prog, inner, block, base_rhs, u, lam,
                                mu_lo, mu_hi, gi, dual_cap):
    """Primal feasibility plus indicator pairs forcing lam/mu complementary
    with the primal slacks (big-M from the primal variable bounds)."""
    nv = inner.num_vars
    x = np.array([prog.add_var(f"x[{gi},{j}]", lb=inner.lb[j], ub=inner.ub[j])
                  for j in range(nv)])
    omega = {}
    for i, row in enumerate(inner.rows):
        coefs = {int(x[j]): a for j, a in row.coeffs.items()}
        for b, coef in block.u_rows.get(i, {}).items():
            coefs[int(u[b])] = coefs.get(int(u[b]), 0.0) - coef
        prog.add_constr(coefs, row.sense, base_rhs[i], name=f"pfeas[{gi},{i}]")
        if row.sense == "=":
            continue
        big_m = sum(abs(a) * (inner.ub[j] - inner.lb[j])
                    for j, a in row.coeffs.items())
        big_m += sum(abs(c) for c in block.u_rows.get(i, {}).values())
        w = prog.add_var(f"om[{gi},{i}]", lb=0.0, ub=1.0, integer=True)
        omega[("row", i)] = w
        # w = 1 forces the row tight; w = 0 forces its multiplier to zero.
        tight = dict(coefs)
        if row.sense == "<=":
            tight[w] = -big_m
            prog.add_constr(tight, ">=", base_rhs[i] - big_m)
            prog.add_constr({int(lam[i]): 1.0, w: dual_cap}, ">=", 0.0)
        else:
            tight[w] = big_m
            prog.add_constr(tight, "<=", base_rhs[i] + big_m)
            prog.add_constr({int(lam[i]): 1.0, w: -dual_cap}, "<=", 0.0)
    for j in range(nv):
        span = inner.ub[j] - inner.lb[j]
        if span <= 0:
            continue
        wl = prog.add_var(f"oml[{gi},{j}]", lb=0.0, ub=1.0, integer=True)
        wu = prog.add_var(f"omu[{gi},{j}]", lb=0.0, ub=1.0, integer=True)
        omega[("lo", j)] = wl
        omega[("hi", j)] = wu
        prog.add_constr({int(x[j]): 1.0, wl: span}, "<=", inner.lb[j] + span)
        prog.add_constr({int(mu_lo[j]): 1.0, wl: -dual_cap}, "<=", 0.0)
        prog.add_constr({int(x[j]): 1.0, wu: -span}, ">=", inner.ub[j] - span)
        prog.add_constr({int(mu_hi[j]): 1.0, wu: -dual_cap}, "<=", 0.0)
    return omega


def build_kkt_subproblem(plan: PlanningDecision, inst: NetworkInstance,
                         amb: AmbiguitySet, surrogate=None, *,
                         k_seg: int = DEFAULT_LOSS_SEGMENTS,
                         facets: int = DEFAULT_FACETS,
                         station_type: str = "pses",
                         dual_cap: float = DUAL_CAP) -> MixedIntegerProgram:
    """Full single-level program: duals + primal blocks + complementarity."""
    if surrogate is not None:
        k_seg = surrogate.k_seg
    entries = relevant_entries(inst, plan, station_type)
    groups = scenario_groups(inst, plan)
    inners = [_build_inner(inst, plan, g[0], entries, k_seg, facets,
                           station_type) for g in groups]
    prog, meta = _build_single_level(inst, plan, amb, entries, groups, inners,
                                     dual_cap=dual_cap, include_kkt=True)
    prog.meta = meta
    return prog


def solve_subproblem(plan: PlanningDecision, inst: NetworkInstance,
                     amb: AmbiguitySet | None = None, *,
                     method: str = "auto",
                     k_seg: int = DEFAULT_LOSS_SEGMENTS,
                     facets: int = DEFAULT_FACETS,
                     station_type: str = "pses",
                     backend: str = "auto",
                     dual_cap: float = DUAL_CAP,
                     corner_dim_limit: int = CORNER_DIM_LIMIT) -> SubproblemResult:
    if amb is None:
        amb = AmbiguitySet.from_instance(inst)
    entries = relevant_entries(inst, plan, station_type)
    groups = scenario_groups(inst, plan)
    inners = [_build_inner(inst, plan, g[0], entries, k_seg, facets,
                           station_type) for g in groups]
    if method == "auto":
        method = "corners" if len(entries) <= corner_dim_limit else "dual"
    if method == "corners":
        if len(entries) > corner_dim_limit:
            raise CombinatorialLimitExceeded(
                f"{len(entries)} box coordinates exceed the corner limit")
        return _solve_corners(inst, plan, amb, entries, groups, inners, backend)
    if method not in ("dual", "kkt"):
        raise ValueError(f"unknown subproblem method {method!r}")

    cap = dual_cap
    for _ in range(3):
        prog, meta = _build_single_level(inst, plan, amb, entries, groups,
                                         inners, dual_cap=cap,
                                         include_kkt=(method == "kkt"))
        sol = solve_mip(prog, rel_gap=1e-9, backend=backend)
        if not sol.ok:
            raise InfeasiblePlan(f"subproblem MILP is {sol.status.value}")
        peak = max((float(np.abs(sol.x[lam]).max()) for lam in meta["lam"]
                    if len(lam)), default=0.0)
        if peak < 0.99 * cap:
            break
        cap *= 10.0  # dual magnitude cap was binding; widen and re-solve
    u = np.array([round(float(sol.x[j])) for j in meta["u"]], dtype=float)
    # Certify: replay the inner LPs at the chosen corner and reweight.
    val, pi, costs, sols = _certify(inst, plan, amb, entries, groups, inners,
                                    u, backend)
    if val < sol.objective - 1e-5 * max(1.0, abs(val)):
        raise InfeasiblePlan(
            f"single-level value {sol.objective} not certified (replay {val})")
    lam = {gi: sol.x[meta["lam"][gi]] for gi in range(len(groups))}
    omega = {gi: {k: float(sol.x[v]) for k, v in meta["omega"][gi].items()}
             for gi in range(len(groups))}
    comp = 0.0
    for gi, (g, isol) in enumerate(zip(groups, sols)):
        w = float(sum(pi[s] for s in g))
        _, c = _dual_residuals(inners[gi][0], isol, w)
        comp = max(comp, c)
    return SubproblemResult(
        value=float(val), u=tuple(int(v) for v in u), pi=pi,
        scenario_costs=costs, entries=entries,
        realization=Realization.from_u(inst, entries, u), method=method,
        lam=lam, omega=omega, complementarity_residual=comp)


# -- oracle ------------------------------------------------------------------


def oracle_subproblem_bruteforce(plan: PlanningDecision, inst: NetworkInstance,
                                 amb: AmbiguitySet | None = None,
                                 corner_limit: int = CORNER_DIM_LIMIT, *,
                                 k_seg: int = DEFAULT_LOSS_SEGMENTS,
                                 facets: int = DEFAULT_FACETS,
                                 station_type: str = "pses",
                                 backend: str = "auto") -> float:
    """Independent reference value: corner enumeration with the worst
    reweighting found by a direct LP over the ambiguity polytope."""
    from scipy.optimize import linprog

    if amb is None:
        amb = AmbiguitySet.from_instance(inst)
    entries = relevant_entries(inst, plan, station_type)
    if len(entries) > corner_limit:
        raise CombinatorialLimitExceeded(
            f"{len(entries)} box coordinates exceed corner_limit={corner_limit}")
    # No grouping here on purpose: one LP per scenario, solved independently.
    inners = [_build_inner(inst, plan, s, entries, k_seg, facets, station_type)
              for s in range(inst.n_scenarios)]
    n = inst.n_scenarios
    pi0 = np.asarray(amb.pi0)
    best = -math.inf
    best_u: tuple = ()
    best_pi = pi0.copy()
    for bits in range(1 << len(entries)):
        u = np.array([(bits >> b) & 1 for b in range(len(entries))], float)
        costs = np.empty(n)
        for s, (prog, block, base) in enumerate(inners):
            _apply_u(prog, block, base, u)
            costs[s] = _inner_solve(prog, backend).objective
        # max pi.costs s.t.  pi = pi0 + a - r, sum pi = 1, pi >= 0,
        # sum(a + r) <= theta1, a_s + r_s <= theta_inf, 0 <= r <= pi0.
        # Variables: a (adds), r (removals); pi = pi0 + a - r.
        c = np.concatenate([-costs, costs])
        a_ub, b_ub = [], []
        a_ub.append(np.concatenate([np.ones(n), np.ones(n)]))
        b_ub.append(amb.theta1)
        for s in range(n):
            row = np.zeros(2 * n)
            row[s] = 1.0
            row[n + s] = 1.0
            a_ub.append(row)
            b_ub.append(amb.theta_inf)
        a_eq = [np.concatenate([np.ones(n), -np.ones(n)])]
        b_eq = [0.0]
        bounds = [(0.0, amb.theta_inf)] * n + [
            (0.0, min(amb.theta_inf, float(pi0[s]))) for s in range(n)]
        res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                      A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                      bounds=bounds, method="highs")
        if not res.success:
            raise InfeasiblePlan(f"ambiguity LP failed: {res.message}")
        value = float(pi0 @ costs - res.fun)
        if value > best + 1e-12:
            best = value
            best_u = tuple(int(b) for b in u)
            best_pi = pi0 + res.x[:n] - res.x[n:]
    return best, best_u, best_pi
