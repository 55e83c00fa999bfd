"""Dispatch between the self-contained kernel and the scipy/HiGHS backend.

The native revised-simplex + branch-and-bound path is the default and the
one all kernel-level guarantees are stated for. The HiGHS backend exists for
the large bundled synthetic case, whose operational LPs exceed the dense
kernel's comfortable size; both backends honour the same solution contract
(status, objective, proof bound, duals for LPs) and are equivalence-tested
on small programs.
"""

from __future__ import annotations

import math

import numpy as np

from . import branch_bound, simplex
from .program import INF, MixedIntegerProgram, ProgramError, SolverSolution, Status

AUTO_SIZE_THRESHOLD = 300  # rows; beyond this "auto" prefers HiGHS


def _resolve(backend: str, mip: MixedIntegerProgram) -> str:
    if backend == "auto":
        return "highs" if mip.num_constrs > AUTO_SIZE_THRESHOLD else "native"
    if backend not in ("native", "highs"):
        raise ProgramError(f"unknown backend {backend!r}")
    return backend


def solve_lp(mip: MixedIntegerProgram, backend: str = "native", **kw) -> SolverSolution:
    if _resolve(backend, mip) == "native":
        return simplex.solve_lp(mip, **kw)
    return _highs_lp(mip)


def solve_mip(mip: MixedIntegerProgram, rel_gap: float = 1e-9,
              backend: str = "native", **kw) -> SolverSolution:
    if mip.is_lp and kw.get("lb_override") is None:
        sol = solve_lp(mip, backend=backend)
        sol.relative_gap = 0.0 if sol.ok else math.nan
        return sol
    if _resolve(backend, mip) == "native":
        return branch_bound.solve_mip(mip, rel_gap=rel_gap, **kw)
    return _highs_mip(mip, rel_gap)


# -- scipy/HiGHS ---------------------------------------------------------


def _sparse_matrix(mip):
    """Constraint matrix as CSR, avoiding the dense kernel representation."""
    from scipy.sparse import csr_matrix

    data, indices, indptr = [], [], [0]
    b = np.empty(mip.num_constrs)
    senses = []
    for i, row in enumerate(mip.rows):
        for j, v in row.coeffs.items():
            indices.append(j)
            data.append(v)
        indptr.append(len(data))
        b[i] = row.rhs
        senses.append(row.sense)
    a = csr_matrix((data, indices, indptr),
                   shape=(mip.num_constrs, mip.num_vars))
    return a, senses, b


def _split_rows(mip):
    a, senses, b = _sparse_matrix(mip)
    ub_rows = [i for i, s in enumerate(senses) if s == "<="]
    ge_rows = [i for i, s in enumerate(senses) if s == ">="]
    eq_rows = [i for i, s in enumerate(senses) if s == "="]
    return a, b, ub_rows, ge_rows, eq_rows


def _highs_lp(mip: MixedIntegerProgram) -> SolverSolution:
    from scipy.optimize import linprog

    a, b, ub_rows, ge_rows, eq_rows = _split_rows(mip)
    sign = -1.0 if mip.sense == "max" else 1.0
    c = sign * np.asarray(mip.obj, float)
    from scipy.sparse import vstack as sp_vstack

    a_ub = (sp_vstack([a[ub_rows], -a[ge_rows]], format="csr")
            if ub_rows or ge_rows else None)
    b_ub = np.concatenate([b[ub_rows], -b[ge_rows]]) if ub_rows or ge_rows else None
    a_eq = a[eq_rows] if eq_rows else None
    b_eq = b[eq_rows] if eq_rows else None
    bounds = [(None if lo == -INF else lo, None if hi == INF else hi)
              for lo, hi in zip(mip.lb, mip.ub)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return SolverSolution(status=Status.INFEASIBLE)
    if res.status == 3:
        return SolverSolution(status=Status.UNBOUNDED)
    if res.status != 0:
        return SolverSolution(status=Status.ITERATION_LIMIT)

    duals = np.zeros(mip.num_constrs)
    k = 0
    if ub_rows or ge_rows:
        marg = np.asarray(res.ineqlin.marginals, float)
        for i in ub_rows:
            duals[i] = marg[k]
            k += 1
        for i in ge_rows:
            duals[i] = -marg[k]
            k += 1
    if eq_rows:
        marg = np.asarray(res.eqlin.marginals, float)
        for k2, i in enumerate(eq_rows):
            duals[i] = marg[k2]
    sol = SolverSolution(status=Status.OPTIMAL)
    sol.x = np.asarray(res.x, float)
    sol.objective = sign * float(res.fun) + mip.obj_constant
    sol.bound = sol.objective
    sol.duals = sign * duals
    sol.reduced_costs = sign * np.asarray(res.lower.marginals, float) \
        + sign * np.asarray(res.upper.marginals, float)
    sol.relative_gap = 0.0
    return sol


def _highs_mip(mip: MixedIntegerProgram, rel_gap: float) -> SolverSolution:
    from scipy.optimize import LinearConstraint, milp
    from scipy.sparse import csr_matrix

    a, b, ub_rows, ge_rows, eq_rows = _split_rows(mip)
    sign = -1.0 if mip.sense == "max" else 1.0
    c = sign * np.asarray(mip.obj, float)
    lo = np.full(mip.num_constrs, -np.inf)
    hi = np.full(mip.num_constrs, np.inf)
    for i in ub_rows:
        hi[i] = b[i]
    for i in ge_rows:
        lo[i] = b[i]
    for i in eq_rows:
        lo[i] = hi[i] = b[i]
    from scipy.optimize import Bounds

    integrality = np.asarray(mip.integer, dtype=np.uint8)
    vlo = np.asarray(mip.lb, float).copy()
    vhi = np.asarray(mip.ub, float).copy()
    # HiGHS returns suboptimal answers when integer variables carry
    # fractional bounds (observed with scipy 1.15); round them to the
    # equivalent integral bounds first.
    ii = integrality.astype(bool)
    vlo[ii] = np.ceil(vlo[ii] - 1e-9)
    vhi[ii] = np.floor(vhi[ii] + 1e-9)
    res = milp(c, constraints=LinearConstraint(a, lo, hi),
               integrality=integrality,
               bounds=Bounds(vlo, vhi),
               options={"mip_rel_gap": rel_gap, "presolve": True})
    if res.status == 2:
        return SolverSolution(status=Status.INFEASIBLE)
    if res.status == 3:
        return SolverSolution(status=Status.UNBOUNDED)
    if res.x is None:
        return SolverSolution(status=Status.ITERATION_LIMIT)
    sol = SolverSolution(status=Status.OPTIMAL if (res.mip_gap or 0.0) <= 1e-12
                         else Status.GAP_REACHED)
    sol.x = np.asarray(res.x, float)
    sol.objective = sign * float(res.fun) + mip.obj_constant
    sol.bound = sign * float(res.mip_dual_bound) + mip.obj_constant
    sol.relative_gap = float(res.mip_gap) if res.mip_gap is not None else 0.0
    sol.nodes = int(res.mip_node_count or 0)
    return sol
