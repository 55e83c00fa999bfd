"""Solver-facing linear/mixed-integer program container and solution record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

INF = math.inf

FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6


class Status(Enum):
    OPTIMAL = "Optimal"
    GAP_REACHED = "GapReached"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


class ProgramError(ValueError):
    pass


@dataclass
class _Row:
    coeffs: dict[int, float]
    sense: str  # one of "<=", "=", ">="
    rhs: float
    name: str


class MixedIntegerProgram:
    """Dense-friendly LP/MILP description.

    Variables are referenced by the integer index returned from ``add_var``.
    The optional diagonal quadratic objective is accepted only by the oracle
    helpers, never by the planning pipeline.
    """

    def __init__(self, sense: str = "min", name: str = ""):
        if sense not in ("min", "max"):
            raise ProgramError(f"objective sense must be min or max, got {sense!r}")
        self.sense = sense
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.obj: list[float] = []
        self.obj_constant = 0.0
        self.quad_diag: dict[int, float] = {}
        self.rows: list[_Row] = []

    # -- construction -----------------------------------------------------

    def add_var(self, name: str = "", lb: float = 0.0, ub: float = INF,
                integer: bool = False, obj: float = 0.0) -> int:
        if not (lb <= ub):
            raise ProgramError(f"variable {name!r}: lb {lb} > ub {ub}")
        if integer and not (math.isfinite(lb) and math.isfinite(ub)):
            raise ProgramError(f"integer variable {name!r} must have finite bounds")
        if not math.isfinite(obj):
            raise ProgramError(f"variable {name!r}: non-finite objective coefficient")
        idx = len(self.var_names)
        self.var_names.append(name or f"x{idx}")
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.integer.append(bool(integer))
        self.obj.append(float(obj))
        return idx

    def add_constr(self, coeffs, sense: str, rhs: float, name: str = "") -> int:
        if sense not in ("<=", "=", ">="):
            raise ProgramError(f"unknown constraint sense {sense!r}")
        if isinstance(coeffs, dict):
            items = coeffs.items()
        else:
            items = coeffs
        clean: dict[int, float] = {}
        for j, a in items:
            a = float(a)
            if not math.isfinite(a):
                raise ProgramError(f"row {name!r}: non-finite coefficient on var {j}")
            if not (0 <= j < len(self.var_names)):
                raise ProgramError(f"row {name!r}: variable index {j} out of range")
            if a != 0.0:
                clean[j] = clean.get(j, 0.0) + a
        if not math.isfinite(rhs):
            raise ProgramError(f"row {name!r}: non-finite rhs")
        self.rows.append(_Row(clean, sense, float(rhs), name or f"c{len(self.rows)}"))
        return len(self.rows) - 1

    def add_obj(self, var: int, coef: float) -> None:
        self.obj[var] += float(coef)

    def set_quadratic_diag(self, var: int, coef: float) -> None:
        if coef < 0:
            raise ProgramError("quadratic diagonal must be PSD (coef >= 0)")
        self.quad_diag[var] = self.quad_diag.get(var, 0.0) + float(coef)

    # -- inspection --------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_constrs(self) -> int:
        return len(self.rows)

    @property
    def is_lp(self) -> bool:
        return not any(self.integer)

    def integer_indices(self) -> list[int]:
        return [j for j, f in enumerate(self.integer) if f]

    def dense_matrix(self):
        """Return (A, senses, rhs) with A dense float64 (rows x vars)."""
        a = np.zeros((self.num_constrs, self.num_vars))
        rhs = np.empty(self.num_constrs)
        senses = []
        for i, row in enumerate(self.rows):
            for j, v in row.coeffs.items():
                a[i, j] = v
            rhs[i] = row.rhs
            senses.append(row.sense)
        return a, senses, rhs

    def row_activity(self, x: np.ndarray, i: int) -> float:
        row = self.rows[i]
        return sum(a * x[j] for j, a in row.coeffs.items())

    def eval_objective(self, x: np.ndarray) -> float:
        val = self.obj_constant + float(np.dot(self.obj, x))
        for j, q in self.quad_diag.items():
            val += q * x[j] * x[j]
        return val

    def check_feasible(self, x: np.ndarray, tol: float = 1e-6) -> list[str]:
        """Diagnostics for an assignment; empty list means feasible."""
        out = []
        for j in range(self.num_vars):
            if x[j] < self.lb[j] - tol or x[j] > self.ub[j] + tol:
                out.append(f"var {self.var_names[j]} = {x[j]} outside [{self.lb[j]}, {self.ub[j]}]")
            if self.integer[j] and abs(x[j] - round(x[j])) > INTEGRALITY_TOL:
                out.append(f"var {self.var_names[j]} = {x[j]} not integral")
        for i, row in enumerate(self.rows):
            act = self.row_activity(x, i)
            if row.sense == "<=" and act > row.rhs + tol:
                out.append(f"row {row.name}: {act} > {row.rhs}")
            elif row.sense == ">=" and act < row.rhs - tol:
                out.append(f"row {row.name}: {act} < {row.rhs}")
            elif row.sense == "=" and abs(act - row.rhs) > tol:
                out.append(f"row {row.name}: {act} != {row.rhs}")
        return out

    # -- LP-format dump ----------------------------------------------------

    def dump_lp(self, path) -> None:
        """Write CPLEX LP-format text for cross-checking with external solvers."""
        def term(j, a, lead):
            s = "+" if a >= 0 else "-"
            if lead and a >= 0:
                s = ""
            return f"{s} {abs(a):.17g} {self.var_names[j]} ".replace("  ", " ")

        lines = ["\\ " + (self.name or "coastplan program")]
        lines.append("Minimize" if self.sense == "min" else "Maximize")
        expr = ""
        first = True
        for j, c in enumerate(self.obj):
            if c != 0.0:
                expr += term(j, c, first)
                first = False
        lines.append(" obj: " + (expr.strip() or "0 " + self.var_names[0] if self.var_names else "0"))
        lines.append("Subject To")
        rel = {"<=": "<=", ">=": ">=", "=": "="}
        for row in self.rows:
            expr = ""
            first = True
            for j, a in sorted(row.coeffs.items()):
                expr += term(j, a, first)
                first = False
            if not expr:
                expr = "0 " + self.var_names[0]
            lines.append(f" {row.name}: {expr.strip()} {rel[row.sense]} {row.rhs:.17g}")
        lines.append("Bounds")
        for j in range(self.num_vars):
            lo = "-inf" if self.lb[j] == -INF else f"{self.lb[j]:.17g}"
            hi = "+inf" if self.ub[j] == INF else f"{self.ub[j]:.17g}"
            lines.append(f" {lo} <= {self.var_names[j]} <= {hi}")
        ints = [self.var_names[j] for j in self.integer_indices()]
        if ints:
            lines.append("Generals")
            lines.append(" " + " ".join(ints))
        lines.append("End")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class SolverSolution:
    status: Status
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    relative_gap: float = math.nan
    bound: float = math.nan
    iterations: int = 0
    nodes: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.GAP_REACHED)
