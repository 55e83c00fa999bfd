"""Scenario-probability ambiguity set and EV demand machinery.

The ambiguity set is a norm-constrained neighborhood of the empirical
scenario distribution pi0: total variation shift limited by a 1-norm budget
theta1 and each scenario's shift by an inf-norm budget theta_inf. Both
budgets shrink with the amount of history (node-intervals observed) at the
chosen confidence levels.

EV demand enters planning as per-scenario cluster profiles: a tariff-driven
scheduled profile per fleet, combined with a random profile by elementwise
maximum, with cluster magnitudes drawn from a truncated normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import NetworkInstance
from .milp import MixedIntegerProgram, solve_lp


class RejectionLimit(RuntimeError):
    pass


class InfeasibleSchedule(RuntimeError):
    pass


# -- ambiguity set ---------------------------------------------------------


@dataclass(frozen=True)
class AmbiguitySet:
    """Norm-constrained scenario-probability neighborhood."""
    pi0: tuple
    theta1: float
    theta_inf: float

    @classmethod
    def from_instance(cls, inst: NetworkInstance) -> "AmbiguitySet":
        theta1 = compute_theta1(inst.n_scenarios, inst.n_nodes, inst.t_count,
                                inst.alpha1)
        theta_inf = compute_theta_inf(inst.n_scenarios, inst.n_nodes,
                                      inst.t_count, inst.alpha_inf)
        return cls(tuple(float(v) for v in inst.pi0), theta1, theta_inf)

    @property
    def n_scenarios(self) -> int:
        return len(self.pi0)


def compute_theta1(n_scenarios: int, n_nodes: int, n_intervals: int,
                   alpha1: float) -> float:
    """1-norm budget: |S| / (2|I||T|) * ln(2|S| / (1 - alpha1))."""
    _check_theta_args(n_scenarios, n_nodes, n_intervals, alpha1)
    return n_scenarios / (2.0 * n_nodes * n_intervals) * math.log(
        2.0 * n_scenarios / (1.0 - alpha1))


def compute_theta_inf(n_scenarios: int, n_nodes: int, n_intervals: int,
                      alpha_inf: float) -> float:
    """Inf-norm budget: 1 / (2|I||T|) * ln(2|S| / (1 - alpha_inf))."""
    _check_theta_args(n_scenarios, n_nodes, n_intervals, alpha_inf)
    return 1.0 / (2.0 * n_nodes * n_intervals) * math.log(
        2.0 * n_scenarios / (1.0 - alpha_inf))


def _check_theta_args(n_scenarios, n_nodes, n_intervals, alpha):
    if n_scenarios < 1 or n_nodes < 1 or n_intervals < 1:
        raise ValueError("scenario/node/interval counts must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"confidence level must be in (0,1), got {alpha}")


def worst_case_probabilities(scenario_costs, amb: AmbiguitySet
                             ) -> tuple[np.ndarray, float]:
    """Probability vector in the ambiguity set maximizing expected cost,
    and the resulting value.

    Exact greedy transport: mass moves from the cheapest scenarios to the
    costliest ones. Total moved mass is capped at theta1 / 2 (every add is
    matched by a removal and their sum is bounded by theta1); each scenario
    can gain at most theta_inf and lose at most min(pi0_s, theta_inf).
    Deterministic tie-breaking by scenario index.
    """
    costs = np.asarray(scenario_costs, dtype=float)
    pi0 = np.asarray(amb.pi0, dtype=float)
    n = len(pi0)
    if costs.shape != (n,):
        raise ValueError("costs must match the scenario count")
    pi = pi0.copy()
    add_cap = np.minimum(np.full(n, amb.theta_inf), 1.0 - pi0)
    rem_cap = np.minimum(pi0, amb.theta_inf)
    budget = amb.theta1 / 2.0
    hi = sorted(range(n), key=lambda s: (-costs[s], s))
    lo = sorted(range(n), key=lambda s: (costs[s], s))
    i = j = 0
    while budget > 1e-15:
        while i < len(hi) and add_cap[hi[i]] <= 1e-15:
            i += 1
        while j < len(lo) and rem_cap[lo[j]] <= 1e-15:
            j += 1
        if i >= len(hi) or j >= len(lo):
            break
        s_hi, s_lo = hi[i], lo[j]
        if s_hi == s_lo or costs[s_hi] <= costs[s_lo]:
            break
        move = min(budget, add_cap[s_hi], rem_cap[s_lo])
        pi[s_hi] += move
        pi[s_lo] -= move
        add_cap[s_hi] -= move
        rem_cap[s_lo] -= move
        budget -= move
    return pi, float(pi @ costs)


def ambiguity_lp_value(scenario_costs, amb: AmbiguitySet) -> float:
    """Worst-case expectation by direct LP over (additions, removals);
    independent check of the greedy transport."""
    from scipy.optimize import linprog

    costs = np.asarray(scenario_costs, dtype=float)
    pi0 = np.asarray(amb.pi0, dtype=float)
    n = len(pi0)
    c = np.concatenate([-costs, costs])      # maximize (pi0 + a - r) @ costs
    a_ub = [np.ones(2 * n)]
    b_ub = [amb.theta1]
    for s in range(n):
        row = np.zeros(2 * n)
        row[s] = row[n + s] = 1.0
        a_ub.append(row)
        b_ub.append(amb.theta_inf)
    a_eq = [np.concatenate([np.ones(n), -np.ones(n)])]
    bounds = ([(0.0, amb.theta_inf)] * n
              + [(0.0, min(amb.theta_inf, float(pi0[s]))) for s in range(n)])
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  A_eq=np.array(a_eq), b_eq=[0.0], bounds=bounds,
                  method="highs")
    if not res.success:
        raise RuntimeError(f"ambiguity LP failed: {res.message}")
    return float(pi0 @ costs - res.fun)


def build_ambiguity_rows(prog: MixedIntegerProgram, amb: AmbiguitySet,
                         with_indicators: bool = False,
                         prefix: str = "") -> dict:
    """Ambiguity set as program rows over (pi, shift_up, shift_dn).

    ``with_indicators`` adds the per-scenario binary up/down toggles of the
    textbook formulation; without them the polytope below is its exact LP
    relaxation (the indicators only forbid a scenario from shifting both
    ways, which no maximizer does — equality is asserted in tests, not
    assumed).
    """
    pi0 = np.asarray(amb.pi0, dtype=float)
    theta1, theta_inf = amb.theta1, amb.theta_inf
    n = len(pi0)
    pi = np.array([prog.add_var(f"{prefix}pi[{s}]", lb=0.0, ub=1.0)
                   for s in range(n)])
    up = np.array([prog.add_var(f"{prefix}pi_up[{s}]", lb=0.0,
                                ub=min(theta_inf, theta1))
                   for s in range(n)])
    dn = np.array([prog.add_var(f"{prefix}pi_dn[{s}]",
                                lb=0.0, ub=min(theta_inf, theta1, float(pi0[s])))
                   for s in range(n)])
    out = {"pi": pi, "up": up, "dn": dn}
    for s in range(n):
        prog.add_constr({int(pi[s]): 1.0, int(up[s]): -1.0, int(dn[s]): 1.0},
                        "=", float(pi0[s]), name=f"{prefix}pi_def[{s}]")
        prog.add_constr({int(up[s]): 1.0, int(dn[s]): 1.0}, "<=", theta_inf,
                        name=f"{prefix}pi_inf[{s}]")
    prog.add_constr({int(v): 1.0 for v in pi}, "=", 1.0,
                    name=f"{prefix}pi_sum")
    coefs = {int(v): 1.0 for v in up}
    coefs.update({int(v): 1.0 for v in dn})
    prog.add_constr(coefs, "<=", theta1, name=f"{prefix}pi_1norm")
    if with_indicators:
        for norm, budget in (("1", theta1), ("inf", theta_inf)):
            b_up = np.array([prog.add_var(f"{prefix}b{norm}p[{s}]", lb=0.0,
                                          ub=1.0, integer=True)
                             for s in range(n)])
            b_dn = np.array([prog.add_var(f"{prefix}b{norm}m[{s}]", lb=0.0,
                                          ub=1.0, integer=True)
                             for s in range(n)])
            out[f"b{norm}_up"], out[f"b{norm}_dn"] = b_up, b_dn
            for s in range(n):
                prog.add_constr({int(b_up[s]): 1.0, int(b_dn[s]): 1.0},
                                "<=", 1.0, name=f"{prefix}b{norm}[{s}]")
                prog.add_constr({int(up[s]): 1.0, int(b_up[s]): -budget},
                                "<=", 0.0, name=f"{prefix}g{norm}p[{s}]")
                prog.add_constr({int(dn[s]): 1.0, int(b_dn[s]): -budget},
                                "<=", 0.0, name=f"{prefix}g{norm}m[{s}]")
    return out


# -- EV fleet demand -----------------------------------------------------------


@dataclass(frozen=True)
class EvSpec:
    """One vehicle's charging requirement within the representative day."""
    window: tuple[int, int]      # [start, end) intervals when plugged in
    e_initial_mwh: float
    e_target_mwh: float
    e_cap_mwh: float
    p_max_mw: float


@dataclass(frozen=True)
class EvFleetModel:
    evs: tuple[EvSpec, ...]
    tariff_per_mwh: np.ndarray           # charging price per interval
    random_profiles: np.ndarray          # (scenarios, intervals) MW
    sigma2: float = 0.0
    mu: tuple = ()                       # per-scenario cluster magnitude mean
    mu_min: tuple = ()                   # per-scenario cluster magnitude lo
    mu_max: tuple = ()                   # per-scenario cluster magnitude hi

    @property
    def t_count(self) -> int:
        return len(self.tariff_per_mwh)


def schedule_ev_charging(fleet: EvFleetModel, dt_hours: float) -> np.ndarray:
    """Cheapest aggregate charging profile meeting every vehicle's target.

    One LP over all vehicles: charge power per vehicle-interval inside the
    plug-in window, energy target met exactly at departure. Ties between
    equally-priced intervals are broken toward earlier intervals by a 1e-9*t
    objective perturbation.
    """
    t_count = fleet.t_count
    prog = MixedIntegerProgram("min", name="ev-schedule")
    rows = []
    for u, ev in enumerate(fleet.evs):
        lo, hi = ev.window
        if not (0 <= lo < hi <= t_count):
            raise InfeasibleSchedule(f"vehicle {u}: window {ev.window} outside horizon")
        need = ev.e_target_mwh - ev.e_initial_mwh
        if need < -1e-12 or ev.e_target_mwh > ev.e_cap_mwh + 1e-12:
            raise InfeasibleSchedule(f"vehicle {u}: inconsistent energy targets")
        if need > (hi - lo) * ev.p_max_mw * dt_hours + 1e-12:
            raise InfeasibleSchedule(
                f"vehicle {u}: window cannot deliver {need} MWh")
        cols = {}
        for t in range(lo, hi):
            price = float(fleet.tariff_per_mwh[t]) * dt_hours + 1e-9 * t
            cols[prog.add_var(f"p[{u},{t}]", lb=0.0, ub=ev.p_max_mw,
                              obj=price)] = t
        prog.add_constr({j: dt_hours for j in cols}, "=", max(need, 0.0),
                        name=f"target[{u}]")
        rows.append(cols)
    sol = solve_lp(prog, backend="native")
    if not sol.ok:
        raise InfeasibleSchedule(f"schedule LP is {sol.status.value}")
    profile = np.zeros(t_count)
    for cols in rows:
        for j, t in cols.items():
            profile[t] += float(sol.x[j])
    return profile


def realize_ev_demand(scheduled, random) -> np.ndarray:
    """Elementwise maximum of the scheduled and random profiles."""
    scheduled = np.asarray(scheduled, dtype=float)
    random = np.asarray(random, dtype=float)
    if scheduled.shape != random.shape:
        raise ValueError("profiles must have equal lengths")
    return np.maximum(scheduled, random)


def read_scenario_csv(path) -> np.ndarray:
    """Per-scenario EV cluster profiles from a CSV with columns
    scenario_id, t, ev_power_mw. Returns a (scenarios, intervals) array;
    reference probabilities stay in the instance JSON."""
    import csv

    cells: dict[tuple[int, int], float] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"scenario_id", "t", "ev_power_mw"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(
                f"scenario CSV must have columns {sorted(required)}")
        for row in reader:
            cells[(int(row["scenario_id"]), int(row["t"]))] = \
                float(row["ev_power_mw"])
    if not cells:
        raise ValueError("scenario CSV is empty")
    n_s = max(s for s, _ in cells) + 1
    n_t = max(t for _, t in cells) + 1
    out = np.zeros((n_s, n_t))
    for (s, t), v in cells.items():
        out[s, t] = v
    if len(cells) != n_s * n_t:
        raise ValueError("scenario CSV has missing (scenario_id, t) cells")
    return out


def sample_fleet_demand(fleet: EvFleetModel, pi, rng_seed: int,
                        max_rejects: int = 100_000) -> np.ndarray:
    """Cluster magnitude drawn from a truncated normal around the
    pi-weighted scenario mean, by rejection sampling; deterministic per seed.

    Returns one sample per scenario, clamped to [mu_min_s, mu_max_s].
    """
    rng = np.random.default_rng(rng_seed)
    pi = np.asarray(pi, dtype=float)
    mu_min = np.atleast_2d(np.asarray(fleet.mu_min, dtype=float))
    mu_max = np.atleast_2d(np.asarray(fleet.mu_max, dtype=float))
    mu = (np.atleast_2d(np.asarray(fleet.mu, dtype=float))
          if fleet.mu is not None else (mu_min + mu_max) / 2.0)
    sigma = math.sqrt(max(fleet.sigma2, 0.0))
    means = pi @ mu                        # probability-weighted, per interval
    out = np.empty_like(mu_min)
    for s in range(mu_min.shape[0]):
        for t in range(mu_min.shape[1]):
            lo, hi, m = mu_min[s, t], mu_max[s, t], means[t]
            if sigma == 0.0:
                out[s, t] = min(max(m, lo), hi)
                continue
            mass = 0.5 * (math.erf((hi - m) / (sigma * math.sqrt(2)))
                          - math.erf((lo - m) / (sigma * math.sqrt(2))))
            if mass < 1e-6:
                raise RejectionLimit(
                    f"scenario {s} interval {t}: acceptance region "
                    f"[{lo}, {hi}] has mass {mass:.2e}")
            for _ in range(max_rejects):
                draw = rng.normal(m, sigma)
                if lo <= draw <= hi:
                    out[s, t] = draw
                    break
            else:
                raise RejectionLimit(
                    f"scenario {s} interval {t}: acceptance region "
                    f"[{lo}, {hi}] has negligible mass")
    return out
