"""Benchmark the compiled simplex pivot kernels against the NumPy twin.

Usage: python3 benchmarks/bench_simplex.py [--sizes 50,100,200] [--seed 0]

Both cores run the same revised-simplex driver; only the pivot-level kernels
differ, so objectives must agree bitwise-closely and the timing difference
is attributable to the kernels alone.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from coastplan.milp import MixedIntegerProgram
from coastplan.milp import simplex as sx
from coastplan.milp import _simplex_core_py


def random_lp(rng: np.random.Generator, n_rows: int, n_cols: int
              ) -> MixedIntegerProgram:
    """Feasible bounded LP: cover constraints over box variables."""
    prog = MixedIntegerProgram("min")
    cost = rng.uniform(1.0, 10.0, size=n_cols)
    for j in range(n_cols):
        prog.add_var(f"x{j}", lb=0.0, ub=10.0, obj=float(cost[j]))
    for i in range(n_rows):
        nz = rng.choice(n_cols, size=min(8, n_cols), replace=False)
        coefs = {int(j): float(rng.uniform(0.2, 2.0)) for j in nz}
        prog.add_constr(coefs, ">=", float(rng.uniform(1.0, 5.0)))
    return prog


def run(core, progs) -> tuple[float, list[float]]:
    saved = sx._core
    sx._core = core
    try:
        t0 = time.perf_counter()
        objs = []
        for prog in progs:
            res = sx.solve_lp(prog)
            objs.append(res.objective)
        return time.perf_counter() - t0, objs
    finally:
        sx._core = saved


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="50,100,200")
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    try:
        from coastplan.milp import _simplex_core as compiled
    except ImportError:
        compiled = None
    print(f"active core at import: {sx.core_name()}")
    header = f"{'rows':>6} {'cols':>6} {'numpy (s)':>10} {'compiled (s)':>13} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(args.seed)
    for size in (int(s) for s in args.sizes.split(",")):
        progs = [random_lp(rng, size, size) for _ in range(args.reps)]
        t_py, obj_py = run(_simplex_core_py, progs)
        if compiled is None:
            print(f"{size:>6} {size:>6} {t_py/args.reps:>10.4f} "
                  f"{'(missing)':>13} {'-':>8}")
            continue
        t_c, obj_c = run(compiled, progs)
        worst = max(abs(a - b) for a, b in zip(obj_py, obj_c))
        assert worst < 1e-9, f"core disagreement: {worst}"
        print(f"{size:>6} {size:>6} {t_py/args.reps:>10.4f} "
              f"{t_c/args.reps:>13.4f} {t_py/max(t_c,1e-12):>7.1f}x")


if __name__ == "__main__":
    main()
