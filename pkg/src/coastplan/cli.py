"""Command-line front end for planning, evaluation, oracles, and validation.

Exit codes: 0 success, 1 input error, 2 non-convergence (iteration cap),
3 internal solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CONVERGENCE = 2
EXIT_SOLVER = 3

BUNDLED = {
    "demo6": "demo6.json",
    "coastal47-synthetic": "coastal47_synthetic.json",
}


def _resolve_instance(spec: str) -> str:
    if spec in BUNDLED:
        return str(resources.files("coastplan") / "data" / BUNDLED[spec])
    return spec


def _load_instance_or_die(spec: str):
    from .instance import load_instance, validate_instance

    path = _resolve_instance(spec)
    try:
        inst = load_instance(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: cannot load instance {spec!r}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)
    diags = validate_instance(inst)
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)
    return inst


def _add_common(p):
    p.add_argument("--instance", required=True,
                   help="instance JSON path or bundled name "
                        f"({', '.join(sorted(BUNDLED))})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")


def cmd_plan(args) -> int:
    from .iccg import IccgParams, IterationCapExceeded, iccg_solve
    from .milp import ProgramError
    from .report import build_report, write_artifacts

    inst = _load_instance_or_die(args.instance)
    try:
        params = IccgParams(epsilon=args.epsilon,
                            epsilon_tilde=args.epsilon_tilde,
                            master_gap0=args.master_gap0,
                            alpha=args.alpha,
                            max_iterations=args.max_iterations)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    config = {
        "mode": args.mode, "epsilon": args.epsilon,
        "epsilon_tilde": args.epsilon_tilde, "master_gap0": args.master_gap0,
        "alpha": args.alpha, "seed": args.seed, "facets": args.facets,
        "loss_segments": args.loss_segments,
    }
    dump_dir = None
    if args.dump_lp:
        dump_dir = str(Path(args.out_dir) / "lp")
        Path(dump_dir).mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    try:
        outcome = iccg_solve(
            inst, params=params, k_seg=args.loss_segments,
            facets=args.facets, exact_master=(args.mode == "ccg"),
            dump_dir=dump_dir)
    except IterationCapExceeded as exc:
        outcome = exc.outcome
        code = EXIT_NO_CONVERGENCE
    except ProgramError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    rep = build_report(outcome, inst, mode=args.mode,
                       k_seg=args.loss_segments, facets=args.facets,
                       config=config)
    paths = write_artifacts(rep, outcome.trace, args.out_dir)
    print(json.dumps({"total": round(rep.total, 6),
                      "gap": round(rep.gap, 8),
                      "converged": rep.converged,
                      "artifacts": paths}, indent=1, sort_keys=True))
    return code


def cmd_evaluate(args) -> int:
    from . import carbon as carbonmod
    from .milp import MixedIntegerProgram, solve_lp
    from .opmodel import (Realization, box_entries, build_operations_block,
                          loss_cost_coefficients, operation_cost_true)
    from .report import read_plan_json
    from .topology import is_radial

    inst = _load_instance_or_die(args.instance)
    try:
        plan = read_plan_json(args.plan)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: cannot load plan: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not is_radial(inst, plan.z):
        print("error: plan is not radial on this instance", file=sys.stderr)
        return EXIT_INPUT
    real = Realization.nominal(inst)
    scenario = args.scenario
    if args.realization:
        try:
            doc = json.loads(Path(args.realization).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot load realization: {exc}", file=sys.stderr)
            return EXIT_INPUT
        entries = box_entries(inst)
        u = doc.get("u")
        if u is not None:
            if len(u) != len(entries):
                print(f"error: realization has {len(u)} coordinates, "
                      f"instance box has {len(entries)}", file=sys.stderr)
                return EXIT_INPUT
            real = Realization.from_u(inst, entries, u)
        scenario = int(doc.get("scenario", scenario))
    prog = MixedIntegerProgram("min")
    block = build_operations_block(
        prog, inst, scenario, real, z_fixed=plan.z, y_fixed=plan.y,
        k_seg=args.loss_segments, facets=args.facets)
    for j, c in loss_cost_coefficients(inst, block).items():
        prog.add_obj(j, c)
    sol = solve_lp(prog, backend="auto")
    out = {"plan": {"z": list(plan.z), "y": list(plan.y)},
           "scenario": scenario, "feasible": bool(sol.ok)}
    if sol.ok:
        op = carbonmod.operating_point_from_solution(inst, plan, block, sol.x)
        loads, reverse = carbonmod.node_loads(op)
        vmin = min(float(sol.x[block.vsq[key]]) for key in block.vsq) ** 0.5
        vmax = max(float(sol.x[block.vsq[key]]) for key in block.vsq) ** 0.5
        out.update({
            "loss_cost_surrogate": round(float(sol.objective), 9),
            "loss_cost_true": round(operation_cost_true(inst, block, sol.x), 9),
            "voltage_min_pu": round(vmin, 6),
            "voltage_max_pu": round(vmax, 6),
            "reverse_injection_mw": round(float(reverse.sum()), 9),
        })
    else:
        out["status"] = sol.status.value
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    path = Path(args.out_dir) / "evaluation.json"
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .subproblem import CombinatorialLimitExceeded

    inst = _load_instance_or_die(args.instance)
    try:
        if args.which == "topology":
            result = _oracle_topology(inst)
        elif args.which == "subproblem":
            result = _oracle_subproblem(inst)
        elif args.which == "ambiguity":
            result = _oracle_ambiguity(inst, args.seed)
        else:
            result = _oracle_ess(inst, args.seed)
    except CombinatorialLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(json.dumps(result, indent=1, sort_keys=True))
    return EXIT_OK if result["agree"] else EXIT_SOLVER


def _oracle_topology(inst):
    from .milp import MixedIntegerProgram, solve_mip
    from .topology import build_radiality_constraints, enumerate_radial_topologies

    brute = set(enumerate_radial_topologies(inst))
    feasible = set()
    for z_fix in brute:
        prog = MixedIntegerProgram("min")
        topo = build_radiality_constraints(prog, inst)
        for k, j in enumerate(topo["z"]):
            prog.lb[int(j)] = prog.ub[int(j)] = float(z_fix[k])
        sol = solve_mip(prog, backend="auto")
        if sol.ok:
            feasible.add(z_fix)
    return {"oracle": len(brute), "milp": len(feasible),
            "agree": brute == feasible}


def _oracle_subproblem(inst):
    from .instance import PlanningDecision
    from .subproblem import oracle_subproblem_bruteforce, solve_subproblem
    from .topology import enumerate_radial_topologies
    from .uncertainty import AmbiguitySet

    z = next(iter(enumerate_radial_topologies(inst)))
    y = tuple(1 for _ in inst.pses)
    plan = PlanningDecision(z=z, y=y)
    amb = AmbiguitySet.from_instance(inst)
    fast = solve_subproblem(plan, inst, amb, method="auto", k_seg=4, facets=8)
    slow, _, _ = oracle_subproblem_bruteforce(plan, inst, amb, k_seg=4,
                                              facets=8)
    diff = abs(fast.value - slow) / max(abs(slow), 1.0)
    return {"oracle": slow, "fast": fast.value, "rel_diff": diff,
            "agree": diff < 1e-5}


def _oracle_ambiguity(inst, seed):
    from .uncertainty import (AmbiguitySet, ambiguity_lp_value,
                              worst_case_probabilities)

    rng = np.random.default_rng(seed)
    amb = AmbiguitySet.from_instance(inst)
    costs = rng.uniform(0.0, 100.0, size=len(amb.pi0))
    _, greedy = worst_case_probabilities(costs, amb)
    lp = ambiguity_lp_value(costs, amb)
    return {"greedy": greedy, "lp": lp, "agree": abs(greedy - lp) < 1e-8}


def _oracle_ess(inst, seed):
    from .casesuite import ess_exactness_check

    gap, cross = ess_exactness_check(inst, seed)
    return {"relaxed_vs_binary_gap": gap, "max_gamma_product": cross,
            "agree": gap < 1e-6 and cross < 1e-6}


def cmd_validate(args) -> int:
    inst = _load_instance_or_die(args.instance)   # dies with EXIT_INPUT on bad
    out = {"instance": inst.name, "diagnostics": [], "valid": True}
    if args.suite:
        from .casesuite import run_property_suites

        suite = run_property_suites(seed=args.seed,
                                    n_instances=args.suite_instances)
        out["suites"] = suite
        out["valid"] = all(v["passed"] for v in suite.values())
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "suite_report.json").write_text(
            json.dumps(suite, indent=1, sort_keys=True) + "\n")
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK if out["valid"] else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="coastplan",
        description="Robust co-planning of coastal distribution networks "
                    "and PV-storage-EV stations")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="solve the planning problem")
    _add_common(p)
    p.add_argument("--mode", choices=("iccg", "ccg"), default="iccg")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--epsilon-tilde", type=float, default=0.005)
    p.add_argument("--master-gap0", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--facets", type=int, default=8)
    p.add_argument("--loss-segments", type=int, default=4)
    p.add_argument("--max-iterations", type=int, default=60)
    p.add_argument("--dump-lp", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("evaluate", help="evaluate a plan at a realization")
    _add_common(p)
    p.add_argument("--plan", required=True, help="plan.json path")
    p.add_argument("--realization", help="realization JSON ({'u': [...], 'scenario': s})")
    p.add_argument("--scenario", type=int, default=0)
    p.add_argument("--facets", type=int, default=8)
    p.add_argument("--loss-segments", type=int, default=4)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="run a brute-force oracle vs the fast path")
    _add_common(p)
    p.add_argument("--which", required=True,
                   choices=("topology", "subproblem", "ambiguity", "ess"))
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="check an instance; optionally run suites")
    _add_common(p)
    p.add_argument("--suite", action="store_true",
                   help="also run the cross-module property suites")
    p.add_argument("--suite-instances", type=int, default=10)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: internal failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
