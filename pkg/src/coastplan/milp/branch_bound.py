"""Best-first branch and bound over the revised-simplex relaxation.

Deterministic by construction: most-fractional branching with lowest-index
tie-breaks, branch-down child pushed first, heap ties resolved by insertion
order. The reported ``bound`` is always a valid proof bound for the original
program, which is what the planning loop uses as its lower bound.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .program import (INTEGRALITY_TOL, MixedIntegerProgram, ProgramError,
                      SolverSolution, Status)
from .simplex import solve_lp_arrays


def _node_lp(a, senses, b, lb, ub, c, maxiter):
    res = solve_lp_arrays(a, senses, b, lb, ub, c, maxiter=maxiter)
    if res.status == Status.ITERATION_LIMIT:
        # One escalation; a persistent limit is a genuine failure.
        res = solve_lp_arrays(a, senses, b, lb, ub, c, maxiter=maxiter * 10)
        if res.status == Status.ITERATION_LIMIT:
            raise ProgramError("node LP hit the simplex iteration limit")
    return res


def solve_mip(mip: MixedIntegerProgram, rel_gap: float = 1e-9,
              node_limit: int = 200_000, incumbent=None, node_hint=None,
              lp_maxiter: int = 0) -> SolverSolution:
    """Solve ``mip`` to the requested relative optimality gap.

    ``incumbent`` may carry a known-feasible warm solution ``(x, value)``;
    ``node_hint(x_relax) -> x_candidate | None`` is an optional rounding
    heuristic polled at every node. Both only ever tighten the incumbent;
    bound validity never depends on them.
    """
    if mip.quad_diag:
        raise ProgramError("quadratic objectives are handled by the oracle helpers only")
    int_idx = mip.integer_indices()
    sign = -1.0 if mip.sense == "max" else 1.0

    a, senses, b = mip.dense_matrix()
    c = sign * np.asarray(mip.obj, float)
    root_lb = np.asarray(mip.lb, float)
    root_ub = np.asarray(mip.ub, float)

    best_x = None
    best_val = math.inf  # internal min sense, excludes obj_constant
    if incumbent is not None:
        x0, _ = incumbent
        x0 = np.asarray(x0, float)
        if mip.check_feasible(x0, tol=1e-6):
            raise ProgramError("injected incumbent is not feasible")
        best_x = x0.copy()
        best_val = float(c @ x0)

    counter = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    heapq.heappush(heap, (-math.inf, counter, root_lb, root_ub))
    nodes = 0
    iters = 0

    def consider_candidate(x):
        nonlocal best_x, best_val
        if x is None:
            return
        x = np.asarray(x, float)
        if mip.check_feasible(x, tol=1e-6):
            return
        val = float(c @ x)
        if val < best_val - 1e-12:
            best_x, best_val = x.copy(), val

    def current_gap():
        bound = heap[0][0] if heap else best_val
        bound = min(bound, best_val)
        if not math.isfinite(best_val):
            return math.inf, bound
        return (best_val - bound) / max(abs(best_val), 1.0), bound

    status = Status.OPTIMAL
    proof_bound = -math.inf
    while heap:
        gap, proof_bound = current_gap()
        if gap <= rel_gap:
            status = Status.OPTIMAL if gap <= 1e-12 else Status.GAP_REACHED
            break
        if nodes >= node_limit:
            status = Status.ITERATION_LIMIT
            break
        parent_bound, _, lb, ub = heapq.heappop(heap)
        if parent_bound >= best_val - 1e-12:
            continue  # cannot strictly improve
        nodes += 1
        res = _node_lp(a, senses, b, lb, ub, c, lp_maxiter or 0)
        iters += res.iterations
        if res.status == Status.INFEASIBLE:
            continue
        if res.status == Status.UNBOUNDED:
            if not int_idx:
                return SolverSolution(status=Status.UNBOUNDED, nodes=nodes, iterations=iters)
            raise ProgramError("unbounded LP relaxation with integer variables present")
        node_bound = res.objective
        if node_bound >= best_val - 1e-12:
            continue

        x = res.x
        if node_hint is not None:
            consider_candidate(node_hint(x.copy()))

        frac = [(abs(x[j] - round(x[j])), j) for j in int_idx]
        viol = [(f, j) for f, j in frac if f > INTEGRALITY_TOL]
        if not viol:
            consider_candidate(x)
            continue
        # Most fractional: largest distance to the nearest integer, lowest index.
        _, jstar = max(viol, key=lambda t: (t[0], -t[1]))
        floor_v = math.floor(x[jstar])
        lb_dn, ub_dn = lb.copy(), ub.copy()
        ub_dn[jstar] = floor_v
        lb_up, ub_up = lb.copy(), ub.copy()
        lb_up[jstar] = floor_v + 1.0
        counter += 1
        heapq.heappush(heap, (node_bound, counter, lb_dn, ub_dn))
        counter += 1
        heapq.heappush(heap, (node_bound, counter, lb_up, ub_up))

    if not heap and status == Status.OPTIMAL:
        proof_bound = best_val

    if best_x is None:
        if status == Status.ITERATION_LIMIT:
            sol = SolverSolution(status=Status.ITERATION_LIMIT, nodes=nodes, iterations=iters)
            if math.isfinite(proof_bound):
                sol.bound = sign * proof_bound + mip.obj_constant
            return sol
        # Exhausted the tree without a feasible point.
        return SolverSolution(status=Status.INFEASIBLE, nodes=nodes, iterations=iters)

    gap = (best_val - proof_bound) / max(abs(best_val), 1.0)
    sol = SolverSolution(status=status, nodes=nodes, iterations=iters)
    sol.x = best_x
    sol.objective = sign * best_val + mip.obj_constant
    sol.bound = sign * proof_bound + mip.obj_constant
    sol.relative_gap = max(gap, 0.0)
    return sol
