"""Kernel tests: revised simplex, branch and bound, and backend agreement.

The randomized sections cross-check the self-contained kernel against the
scipy/HiGHS backend on the same programs; any disagreement in status or
optimal value is a bug in one of the two paths.
"""

import math

import numpy as np
import pytest

from coastplan.milp import backend, core_name, solve_lp, solve_mip
from coastplan.milp.branch_bound import solve_mip as bb_solve
from coastplan.milp.program import (MixedIntegerProgram, ProgramError,
                                    SolverSolution, Status)
from coastplan.milp.simplex import solve_lp as simplex_solve
from coastplan.milp.simplex import solve_lp_arrays


def random_program(seed, big=False, integers=False):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 25 if big else 8))
    m = int(rng.integers(2, 20 if big else 8))
    mip = MixedIntegerProgram(str(rng.choice(["min", "max"])))
    for _ in range(n):
        lo = float(rng.choice([-np.inf, rng.normal() * 5]))
        if np.isfinite(lo):
            hi = float(lo + abs(rng.normal()) * 5)
        else:
            hi = float(rng.choice([np.inf, abs(rng.normal()) * 5]))
        isint = integers and rng.random() < 0.5
        if isint:
            lo = 0.0 if not np.isfinite(lo) else np.floor(lo)
            hi = min(hi, lo + 10) if np.isfinite(hi) else lo + 10
        mip.add_var(lb=lo, ub=hi, obj=float(rng.normal()), integer=isint)
    for _ in range(m):
        coeffs = {j: float(rng.normal()) for j in range(n) if rng.random() < 0.6}
        mip.add_constr(coeffs, str(rng.choice(["<=", ">=", "="])),
                       float(rng.normal() * 3))
    return mip


# -- basics ----------------------------------------------------------------


def test_core_selected():
    assert core_name() in ("compiled", "numpy")


def test_lp_simple_bound():
    mip = MixedIntegerProgram("min")
    x = mip.add_var(lb=-10, ub=10, obj=1.0)
    mip.add_constr({x: 1.0}, ">=", 3.0)
    sol = simplex_solve(mip)
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(3.0, abs=1e-9)
    assert sol.duals[0] == pytest.approx(1.0, abs=1e-9)


def test_lp_negative_rhs_artificial_sign():
    # Rows whose initial residual is negative exercise the mirrored
    # artificial columns.
    mip = MixedIntegerProgram("min")
    x = mip.add_var(lb=0.0, obj=1.0)
    y = mip.add_var(lb=0.0, obj=2.0)
    mip.add_constr({x: -1.0, y: -1.0}, "<=", -4.0)
    sol = simplex_solve(mip)
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(4.0, abs=1e-9)


def test_lp_infeasible_empty_row():
    mip = MixedIntegerProgram("min")
    mip.add_var(lb=0.0, obj=1.0)
    mip.add_constr({}, "<=", -1.0)
    assert simplex_solve(mip).status == Status.INFEASIBLE


def test_lp_empty_variable_domain_is_infeasible():
    res = solve_lp_arrays(np.zeros((1, 1)), ["<="], [1.0], [2.0], [1.0], [1.0])
    assert res.status == Status.INFEASIBLE


def test_lp_unbounded():
    mip = MixedIntegerProgram("min")
    x = mip.add_var(lb=-math.inf, ub=math.inf, obj=1.0)
    mip.add_constr({x: 1.0}, "<=", 5.0)
    assert simplex_solve(mip).status == Status.UNBOUNDED


def test_lp_free_variable_equality():
    mip = MixedIntegerProgram("max")
    x = mip.add_var(lb=-math.inf, ub=math.inf, obj=1.0)
    y = mip.add_var(lb=0.0, ub=2.0, obj=0.0)
    mip.add_constr({x: 1.0, y: 1.0}, "=", 1.0)
    sol = simplex_solve(mip)
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-9)


def test_lp_bound_flip_path():
    # Optimum hit purely by moving a nonbasic variable between its bounds.
    mip = MixedIntegerProgram("max")
    x = mip.add_var(lb=0.0, ub=1.0, obj=1.0)
    y = mip.add_var(lb=0.0, ub=1.0, obj=1.0)
    mip.add_constr({x: 1.0, y: 1.0}, "<=", 5.0)
    sol = simplex_solve(mip)
    assert sol.objective == pytest.approx(2.0, abs=1e-9)


def test_mip_knapsack():
    mip = MixedIntegerProgram("max")
    a = mip.add_var(lb=0, ub=1, integer=True, obj=5.0)
    b = mip.add_var(lb=0, ub=1, integer=True, obj=4.0)
    mip.add_constr({a: 3.0, b: 2.0}, "<=", 4.0)
    sol = bb_solve(mip)
    assert sol.status == Status.OPTIMAL
    assert sol.objective == pytest.approx(5.0)
    assert sol.x[a] == pytest.approx(1.0) and sol.x[b] == pytest.approx(0.0)


def test_mip_infeasible():
    mip = MixedIntegerProgram("min")
    x = mip.add_var(lb=0, ub=1, integer=True, obj=1.0)
    mip.add_constr({x: 2.0}, "=", 1.0)
    assert bb_solve(mip).status == Status.INFEASIBLE


def test_mip_fractional_integer_bounds():
    # Integer variables with fractional bounds must round inward, not crash.
    mip = MixedIntegerProgram("max")
    x = mip.add_var(lb=0.3, ub=4.7, integer=True, obj=1.0)
    for be in ("native", "highs"):
        sol = solve_mip(mip, backend=be)
        assert sol.objective == pytest.approx(4.0), be


def test_mip_incumbent_and_hint():
    mip = MixedIntegerProgram("max")
    xs = [mip.add_var(lb=0, ub=1, integer=True, obj=float(v))
          for v in (9, 7, 5)]
    mip.add_constr({xs[0]: 5.0, xs[1]: 4.0, xs[2]: 3.0}, "<=", 9.0)
    warm = np.array([1.0, 1.0, 0.0])
    sol = bb_solve(mip, incumbent=(warm, 16.0))
    assert sol.objective == pytest.approx(16.0)

    calls = []

    def hint(x):
        calls.append(1)
        return np.round(np.clip(x, 0, 1))

    sol = bb_solve(mip, node_hint=hint)
    assert sol.objective == pytest.approx(16.0)
    assert calls


def test_mip_bad_incumbent_rejected():
    mip = MixedIntegerProgram("min")
    x = mip.add_var(lb=0, ub=1, integer=True, obj=1.0)
    mip.add_constr({x: 1.0}, ">=", 1.0)
    with pytest.raises(ProgramError):
        bb_solve(mip, incumbent=(np.array([5.0]), 5.0))


def test_unbounded_relaxation_with_integers_raises():
    mip = MixedIntegerProgram("min")
    mip.add_var(lb=-math.inf, ub=math.inf, obj=1.0)
    mip.add_var(lb=0, ub=1, integer=True, obj=0.0)
    with pytest.raises(ProgramError):
        bb_solve(mip)


# -- determinism -------------------------------------------------------------


def test_lp_solution_bitwise_deterministic():
    mip = random_program(1, big=True)
    a = simplex_solve(mip)
    b = simplex_solve(mip)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.duals.tobytes() == b.duals.tobytes()
    assert a.objective == b.objective


def test_mip_solution_bitwise_deterministic():
    mip = random_program(2, integers=True)
    a = bb_solve(mip)
    b = bb_solve(mip)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.objective == b.objective and a.nodes == b.nodes


# -- randomized agreement with HiGHS ----------------------------------------


@pytest.mark.parametrize("chunk", range(4))
def test_random_lp_agreement(chunk):
    for seed in range(chunk * 75, (chunk + 1) * 75):
        mip = random_program(seed, big=True)
        a = backend.solve_lp(mip, backend="native")
        b = backend.solve_lp(mip, backend="highs")
        assert a.status == b.status, f"seed {seed}: {a.status} vs {b.status}"
        if a.status != Status.OPTIMAL:
            continue
        scale = max(1.0, abs(b.objective))
        assert abs(a.objective - b.objective) <= 1e-6 * scale, f"seed {seed}"
        # Dual certificate: Lagrangian bound matches the primal value.
        amat, _, rhs = mip.dense_matrix()
        sgn = 1.0 if mip.sense == "min" else -1.0
        c = sgn * np.asarray(mip.obj)
        y = sgn * a.duals
        rc = c - y @ amat
        rc[np.abs(rc) < 1e-7] = 0.0
        term = np.where(rc > 0, rc * np.asarray(mip.lb),
                        np.where(rc < 0, rc * np.asarray(mip.ub), 0.0))
        dual_obj = float(y @ rhs) + float(term.sum())
        assert dual_obj == pytest.approx(sgn * a.objective,
                                         abs=1e-5 * scale), f"seed {seed}"


@pytest.mark.parametrize("chunk", range(4))
def test_random_mip_agreement(chunk):
    for seed in range(chunk * 50, (chunk + 1) * 50):
        mip = random_program(seed, integers=True)
        try:
            a = backend.solve_mip(mip, rel_gap=1e-9, backend="native")
        except ProgramError:
            continue  # unbounded relaxation; HiGHS misreports these
        b = backend.solve_mip(mip, rel_gap=1e-9, backend="highs")
        assert a.ok == b.ok, f"seed {seed}: {a.status} vs {b.status}"
        if not a.ok:
            continue
        assert not mip.check_feasible(a.x, tol=1e-6), f"seed {seed}"
        scale = max(1.0, abs(b.objective))
        assert abs(a.objective - b.objective) <= 1e-5 * scale, f"seed {seed}"
        assert a.relative_gap <= 1e-6


def test_random_degenerate_lp_agreement():
    for seed in range(150):
        rng = np.random.default_rng(10_000 + seed)
        n = int(rng.integers(3, 12))
        m = int(rng.integers(3, 15))
        mip = MixedIntegerProgram("min")
        for _ in range(n):
            mip.add_var(lb=0.0, ub=float(rng.choice([np.inf, rng.uniform(0.5, 4)])),
                        obj=float(rng.normal()))
        for _ in range(m):
            coeffs = {j: float(rng.integers(-2, 3)) for j in range(n)
                      if rng.random() < 0.7}
            coeffs = {j: v for j, v in coeffs.items() if v != 0.0}
            sense = str(rng.choice(["<=", ">=", "="]))
            rhs = float(rng.choice([0.0, 0.0, rng.integers(0, 4)]))
            mip.add_constr(coeffs, sense, rhs)
            if rng.random() < 0.3:
                mip.add_constr(coeffs, sense, rhs)
        a = backend.solve_lp(mip, backend="native")
        b = backend.solve_lp(mip, backend="highs")
        assert a.status == b.status, f"seed {seed}"
        if a.status == Status.OPTIMAL:
            scale = max(1.0, abs(b.objective))
            assert abs(a.objective - b.objective) <= 1e-6 * scale, f"seed {seed}"


def test_transport_lp():
    rng = np.random.default_rng(7)
    ns, nd = 12, 12
    mip = MixedIntegerProgram("min")
    idx = {(i, j): mip.add_var(lb=0.0, obj=float(rng.uniform(1, 10)))
           for i in range(ns) for j in range(nd)}
    sup = rng.uniform(5, 15, ns)
    dem = np.full(nd, sup.sum() / nd)
    for i in range(ns):
        mip.add_constr({idx[i, j]: 1.0 for j in range(nd)}, "=", float(sup[i]))
    for j in range(nd):
        mip.add_constr({idx[i, j]: 1.0 for i in range(ns)}, "=", float(dem[j]))
    a = backend.solve_lp(mip, backend="native")
    b = backend.solve_lp(mip, backend="highs")
    assert a.status == Status.OPTIMAL
    assert a.objective == pytest.approx(b.objective, rel=1e-8)


# -- program container -------------------------------------------------------


def test_program_validation():
    mip = MixedIntegerProgram("min")
    with pytest.raises(ProgramError):
        mip.add_var(lb=2.0, ub=1.0)
    with pytest.raises(ProgramError):
        mip.add_var(integer=True, ub=math.inf)
    x = mip.add_var(lb=0, ub=1)
    with pytest.raises(ProgramError):
        mip.add_constr({x: math.nan}, "<=", 1.0)
    with pytest.raises(ProgramError):
        mip.add_constr({x: 1.0}, "<<", 1.0)
    with pytest.raises(ProgramError):
        MixedIntegerProgram("maximize")


def test_lp_dump(tmp_path):
    mip = MixedIntegerProgram("min", name="demo")
    x = mip.add_var(name="flow", lb=0, ub=5, obj=2.0)
    y = mip.add_var(name="build", lb=0, ub=1, integer=True, obj=-1.0)
    mip.add_constr({x: 1.0, y: -3.0}, "<=", 2.0, name="cap")
    path = tmp_path / "prog.lp"
    mip.dump_lp(path)
    text = path.read_text()
    assert "Minimize" in text and "cap:" in text and "Generals" in text
    assert "flow" in text and "build" in text


def test_solution_ok_flag():
    assert SolverSolution(status=Status.OPTIMAL).ok
    assert SolverSolution(status=Status.GAP_REACHED).ok
    assert not SolverSolution(status=Status.INFEASIBLE).ok
