"""Bounded-variable revised simplex with Bland anti-cycling.

Dense, desk-scale (a few thousand rows). Phase 1 drives per-row artificial
variables to zero, phase 2 optimizes the true objective. The basis inverse is
kept explicitly and refactorized periodically. Pricing is Dantzig by default
and switches to Bland's rule after a run of degenerate pivots, which is what
guarantees termination on degenerate programs.

The pivot-level kernels live in ``_simplex_core`` (compiled) with a NumPy
twin in ``_simplex_core_py``; selection happens at import time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:  # pragma: no cover - exercised indirectly by the backend benchmark
    from . import _simplex_core as _core
except ImportError:  # pragma: no cover
    from . import _simplex_core_py as _core

from .program import INF, MixedIntegerProgram, ProgramError, SolverSolution, Status

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
REFACTOR_EVERY = 100
DEGENERATE_RUN_FOR_BLAND = 200

AT_LOWER, AT_UPPER, BASIC, FREE_NB = 0, 1, 2, 3


def core_name() -> str:
    return "compiled" if getattr(_core, "COMPILED", False) else "numpy"


@dataclass
class LpResult:
    status: Status
    x: np.ndarray | None = None          # structural values
    duals: np.ndarray | None = None      # row marginals
    reduced_costs: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0


class _Tableau:
    """Mutable simplex state over the extended column set.

    Columns: structural (n), then one slack per row (m), then one artificial
    per row (m). Slack bounds encode the row sense.
    """

    def __init__(self, a, senses, b, lb, ub):
        m, n = a.shape
        self.m, self.n = m, n
        ncols = n + 2 * m
        self.A = np.zeros((m, ncols))
        self.A[:, :n] = a
        self.lb = np.full(ncols, -INF)
        self.ub = np.full(ncols, INF)
        self.lb[:n] = lb
        self.ub[:n] = ub
        for i, s in enumerate(senses):
            self.A[i, n + i] = 1.0
            if s == "<=":
                self.lb[n + i], self.ub[n + i] = 0.0, INF
            elif s == ">=":
                self.lb[n + i], self.ub[n + i] = -INF, 0.0
            else:
                self.lb[n + i], self.ub[n + i] = 0.0, 0.0
        self.b = np.asarray(b, dtype=float)

        # Nonbasic start: finite bound nearest zero, free variables at 0.
        self.status = np.empty(ncols, dtype=np.int8)
        self.xval = np.zeros(ncols)
        for j in range(n + m):
            lo, hi = self.lb[j], self.ub[j]
            if lo == -INF and hi == INF:
                self.status[j] = FREE_NB
                self.xval[j] = 0.0
            elif lo == -INF:
                self.status[j] = AT_UPPER
                self.xval[j] = hi
            elif hi == INF:
                self.status[j] = AT_LOWER
                self.xval[j] = lo
            else:
                if abs(lo) <= abs(hi):
                    self.status[j], self.xval[j] = AT_LOWER, lo
                else:
                    self.status[j], self.xval[j] = AT_UPPER, hi

        resid = self.b - self.A[:, : n + m] @ self.xval[: n + m]
        self.art = np.arange(n + m, ncols)
        for i in range(m):
            j = n + m + i
            self.A[i, j] = 1.0 if resid[i] >= 0 else -1.0
            self.lb[j], self.ub[j] = 0.0, INF
            self.status[j] = BASIC
            self.xval[j] = abs(resid[i])
        self.basis = self.art.copy().astype(np.int64)
        # Initial basis matrix is diag(sign(resid)); it is its own inverse.
        self.binv = np.diag(self.A[np.arange(m), self.art])
        self.iterations = 0

    # -- invariants ------------------------------------------------------

    def refactorize(self):
        bmat = self.A[:, self.basis]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise ProgramError("singular basis during refactorization") from exc
        self.recompute_basics()

    def recompute_basics(self):
        nb_mask = self.status != BASIC
        rhs = self.b - self.A[:, nb_mask] @ self.xval[nb_mask]
        self.xval[self.basis] = self.binv @ rhs

    # -- main loop ---------------------------------------------------------

    def optimize(self, c, maxiter):
        """Run simplex for cost vector ``c`` (length = total columns)."""
        degenerate_run = 0
        while True:
            if self.iterations >= maxiter:
                return Status.ITERATION_LIMIT
            self.iterations += 1
            if self.iterations % REFACTOR_EVERY == 0:
                self.refactorize()

            y = c[self.basis] @ self.binv
            dj = c - y @ self.A
            dj[self.basis] = 0.0

            st = self.status
            eligible = np.zeros(len(c), dtype=np.uint8)
            lower_like = (st == AT_LOWER) | (st == FREE_NB)
            upper_like = (st == AT_UPPER) | (st == FREE_NB)
            movable = self.ub - self.lb > 0
            eligible[((lower_like & (dj < -OPT_TOL)) | (upper_like & (dj > OPT_TOL))) & movable] = 1

            if degenerate_run >= DEGENERATE_RUN_FOR_BLAND:
                q = _core.price_bland(eligible)
            else:
                q = _core.price_dantzig(np.ascontiguousarray(dj), eligible)
            if q < 0:
                return Status.OPTIMAL

            if st[q] == AT_UPPER or (st[q] == FREE_NB and dj[q] > 0):
                sigma = -1.0
            else:
                sigma = 1.0

            w = self.binv @ self.A[:, q]
            dvec = np.ascontiguousarray(sigma * w)
            xb = np.ascontiguousarray(self.xval[self.basis])
            lbb = np.ascontiguousarray(self.lb[self.basis])
            ubb = np.ascontiguousarray(self.ub[self.basis])
            t_block, pos = _core.ratio_test(dvec, xb, lbb, ubb, self.basis, PIVOT_TOL)

            span = self.ub[q] - self.lb[q]
            t = min(t_block, span)
            if not math.isfinite(t):
                return Status.UNBOUNDED

            # Apply the move.
            self.xval[self.basis] = xb - t * dvec
            self.xval[q] = self.xval[q] + sigma * t

            if t <= PIVOT_TOL:
                degenerate_run += 1
            else:
                degenerate_run = 0

            if span < math.inf and span <= t_block:
                # Bound flip: entering variable runs to its opposite bound.
                self.status[q] = AT_UPPER if sigma > 0 else AT_LOWER
                continue

            leaving = self.basis[pos]
            # Leaving variable lands on the bound it ran into.
            self.status[leaving] = AT_LOWER if dvec[pos] > 0 else AT_UPPER
            self.xval[leaving] = self.lb[leaving] if dvec[pos] > 0 else self.ub[leaving]
            self.status[q] = BASIC
            self.basis[pos] = q
            _core.update_inverse(self.binv, np.ascontiguousarray(w), pos)
            self.recompute_basics()


def solve_lp_arrays(a, senses, b, lb, ub, c, maxiter: int = 0) -> LpResult:
    """Two-phase simplex on dense arrays. Returns structural solution + duals."""
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    if np.any(lb > ub + 1e-12):
        # Empty variable domain (e.g. crossed branching bounds).
        return LpResult(Status.INFEASIBLE)
    if maxiter <= 0:
        maxiter = 2000 + 200 * (m + n)
    tab = _Tableau(a, senses, b, lb, ub)

    # Phase 1: minimize artificial mass.
    c1 = np.zeros(n + 2 * m)
    c1[tab.art] = 1.0
    st = tab.optimize(c1, maxiter)
    if st == Status.ITERATION_LIMIT:
        return LpResult(Status.ITERATION_LIMIT, iterations=tab.iterations)
    tab.refactorize()
    if float(c1 @ tab.xval) > 1e-7:
        return LpResult(Status.INFEASIBLE, iterations=tab.iterations)

    # Phase 2: lock artificials at zero and optimize the true objective.
    tab.lb[tab.art] = 0.0
    tab.ub[tab.art] = 0.0
    tab.xval[tab.art[tab.status[tab.art] != BASIC]] = 0.0
    c2 = np.zeros(n + 2 * m)
    c2[:n] = c
    st = tab.optimize(c2, maxiter)
    if st == Status.ITERATION_LIMIT:
        return LpResult(Status.ITERATION_LIMIT, iterations=tab.iterations)
    if st == Status.UNBOUNDED:
        return LpResult(Status.UNBOUNDED, iterations=tab.iterations)

    tab.refactorize()
    x = tab.xval[:n].copy()
    y = c2[tab.basis] @ tab.binv
    redcost = c2[:n] - y @ tab.A[:, :n]
    obj = float(c2 @ tab.xval)
    return LpResult(Status.OPTIMAL, x=x, duals=y.copy(), reduced_costs=redcost,
                    objective=obj, iterations=tab.iterations)


def solve_lp(mip: MixedIntegerProgram, maxiter: int = 0,
             lb_override=None, ub_override=None) -> SolverSolution:
    """Solve the continuous relaxation of ``mip`` (or an LP) with duals.

    ``lb_override``/``ub_override`` replace variable bounds wholesale; used by
    branch and bound for node-local bound changes.
    """
    if mip.quad_diag:
        raise ProgramError("quadratic objectives are handled by the oracle helpers only")
    a, senses, b = mip.dense_matrix()
    lb = np.asarray(lb_override if lb_override is not None else mip.lb, float)
    ub = np.asarray(ub_override if ub_override is not None else mip.ub, float)
    c = np.asarray(mip.obj, float)
    sign = 1.0
    if mip.sense == "max":
        c = -c
        sign = -1.0
    res = solve_lp_arrays(a, senses, b, lb, ub, c, maxiter=maxiter)
    sol = SolverSolution(status=res.status, iterations=res.iterations)
    if res.status == Status.OPTIMAL:
        sol.x = res.x
        sol.duals = sign * res.duals
        sol.reduced_costs = sign * res.reduced_costs
        sol.objective = sign * res.objective + mip.obj_constant
        sol.bound = sol.objective
        sol.relative_gap = 0.0
    return sol
