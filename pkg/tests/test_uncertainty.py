"""Ambiguity set construction, worst-case reweighting, and EV demand."""

import math

import numpy as np
import pytest

from coastplan.uncertainty import (AmbiguitySet, EvFleetModel, EvSpec,
                                   InfeasibleSchedule, RejectionLimit,
                                   ambiguity_lp_value, build_ambiguity_rows,
                                   compute_theta1, compute_theta_inf,
                                   read_scenario_csv, realize_ev_demand,
                                   sample_fleet_demand, schedule_ev_charging,
                                   worst_case_probabilities)


def test_theta_closed_forms():
    s, i, t, a = 4, 10, 24, 0.95
    assert compute_theta1(s, i, t, a) == pytest.approx(
        s / (2 * i * t) * math.log(2 * s / (1 - a)), abs=1e-12)
    assert compute_theta_inf(s, i, t, a) == pytest.approx(
        1 / (2 * i * t) * math.log(2 * s / (1 - a)), abs=1e-12)


def test_theta_ratio_is_scenario_count():
    rng = np.random.default_rng(0)
    for _ in range(100):
        s = int(rng.integers(2, 40))
        i = int(rng.integers(2, 100))
        t = int(rng.integers(1, 48))
        a = float(rng.uniform(0.5, 0.999))
        ratio = compute_theta1(s, i, t, a) / compute_theta_inf(s, i, t, a)
        assert ratio == pytest.approx(s, rel=1e-12)


def test_theta_argument_checks():
    with pytest.raises(ValueError):
        compute_theta1(0, 5, 4, 0.9)
    with pytest.raises(ValueError):
        compute_theta1(3, 5, 4, 1.0)
    with pytest.raises(ValueError):
        compute_theta_inf(3, 0, 4, 0.9)


def test_ambiguity_from_instance(demo6):
    amb = AmbiguitySet.from_instance(demo6)
    assert amb.pi0 == tuple(demo6.pi0)
    assert amb.theta1 == pytest.approx(
        compute_theta1(2, 6, 4, demo6.alpha1))
    assert amb.theta_inf == pytest.approx(
        compute_theta_inf(2, 6, 4, demo6.alpha_inf))


def test_worst_case_is_valid_distribution():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 7))
        pi_raw = rng.uniform(0.05, 1.0, size=n)
        pi0 = pi_raw / pi_raw.sum()
        amb = AmbiguitySet(tuple(pi0), float(rng.uniform(0.01, 0.6)),
                           float(rng.uniform(0.005, 0.4)))
        costs = rng.uniform(0, 50, size=n)
        pi, value = worst_case_probabilities(costs, amb)
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(pi >= -1e-12)
        assert np.abs(pi - pi0).sum() <= amb.theta1 + 1e-12
        assert np.abs(pi - pi0).max() <= amb.theta_inf + 1e-12
        # Worst case dominates the nominal expectation.
        assert value >= float(pi0 @ costs) - 1e-12


def test_worst_case_zero_budget_is_nominal():
    amb = AmbiguitySet((0.25, 0.75), 0.0, 0.0)
    costs = np.array([10.0, 1.0])
    pi, value = worst_case_probabilities(costs, amb)
    assert np.allclose(pi, [0.25, 0.75])
    assert value == pytest.approx(0.25 * 10 + 0.75)


def test_greedy_matches_lp():
    rng = np.random.default_rng(2)
    for _ in range(300):
        n = int(rng.integers(2, 9))
        pi_raw = rng.uniform(0.02, 1.0, size=n)
        amb = AmbiguitySet(tuple(pi_raw / pi_raw.sum()),
                           float(rng.uniform(0.001, 1.2)),
                           float(rng.uniform(0.0005, 0.6)))
        costs = rng.uniform(-20, 80, size=n)
        _, greedy = worst_case_probabilities(costs, amb)
        assert greedy == pytest.approx(ambiguity_lp_value(costs, amb),
                                       abs=1e-8)


def test_indicator_milp_matches_greedy():
    from coastplan.milp import MixedIntegerProgram, solve_mip
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(2, 5))
        pi_raw = rng.uniform(0.1, 1.0, size=n)
        amb = AmbiguitySet(tuple(pi_raw / pi_raw.sum()),
                           float(rng.uniform(0.05, 0.5)),
                           float(rng.uniform(0.02, 0.3)))
        costs = rng.uniform(0, 30, size=n)
        prog = MixedIntegerProgram("max")
        rows = build_ambiguity_rows(prog, amb, with_indicators=True)
        for s, j in enumerate(rows["pi"]):
            prog.add_obj(int(j), float(costs[s]))
        sol = solve_mip(prog, backend="auto")
        assert sol.ok
        _, greedy = worst_case_probabilities(costs, amb)
        assert sol.objective == pytest.approx(greedy, abs=1e-8)


# -- EV charging ---------------------------------------------------------------


def _fleet(t_count=6, tariff=None):
    evs = [
        EvSpec(window=(0, 4), e_initial_mwh=0.2, e_target_mwh=1.0,
               e_cap_mwh=1.2, p_max_mw=0.5),
        EvSpec(window=(2, 6), e_initial_mwh=0.1, e_target_mwh=0.7,
               e_cap_mwh=0.8, p_max_mw=0.4),
    ]
    tariff = tariff if tariff is not None else [0.1, 0.02, 0.1, 0.02, 0.1, 0.02]
    return EvFleetModel(evs=evs, tariff_per_mwh=np.asarray(tariff, float),
                        random_profiles=np.zeros((1, t_count)),
                        sigma2=0.05, mu=None,
                        mu_min=np.zeros((1, t_count)),
                        mu_max=np.full((1, t_count), 0.2))


def test_schedule_meets_targets():
    fleet = _fleet()
    sched = schedule_ev_charging(fleet, dt_hours=1.0)
    assert sched.shape == (6,)
    assert np.all(sched >= -1e-9)
    # Energy delivered matches the total requirement.
    need = sum(ev.e_target_mwh - ev.e_initial_mwh for ev in fleet.evs)
    assert sched.sum() * 1.0 == pytest.approx(need, abs=1e-8)


def test_schedule_prefers_cheap_intervals():
    fleet = _fleet()
    sched = schedule_ev_charging(fleet, dt_hours=1.0)
    # Odd intervals are cheap; the expensive interval 0 is used least.
    assert sched[1] > sched[0]


def test_schedule_infeasible_window():
    evs = [EvSpec(window=(0, 1), e_initial_mwh=0.0, e_target_mwh=2.0,
                  e_cap_mwh=2.0, p_max_mw=0.5)]
    fleet = EvFleetModel(evs=evs, tariff_per_mwh=np.full(4, 0.1),
                         random_profiles=np.zeros((1, 4)), sigma2=0.05,
                         mu=None, mu_min=np.zeros((1, 4)),
                         mu_max=np.full((1, 4), 0.1))
    with pytest.raises(InfeasibleSchedule):
        schedule_ev_charging(fleet, dt_hours=1.0)


def test_realize_is_pointwise_max():
    sched = np.array([0.1, 0.4, 0.0])
    rand = np.array([0.3, 0.2, 0.0])
    assert np.allclose(realize_ev_demand(sched, rand), [0.3, 0.4, 0.0])


def test_scenario_csv_roundtrip(tmp_path):
    path = tmp_path / "scen.csv"
    path.write_text("scenario_id,t,ev_power_mw\n"
                    "0,0,0.1\n0,1,0.2\n1,0,0.3\n1,1,0.4\n")
    arr = read_scenario_csv(path)
    assert arr.shape == (2, 2)
    assert arr[1, 0] == pytest.approx(0.3)


def test_scenario_csv_rejects_sparse(tmp_path):
    path = tmp_path / "scen.csv"
    path.write_text("scenario_id,t,ev_power_mw\n0,0,0.1\n1,1,0.4\n")
    with pytest.raises(ValueError):
        read_scenario_csv(path)


def test_sampler_is_seed_deterministic():
    fleet = _fleet()
    pi = np.array([1.0])
    a = sample_fleet_demand(fleet, pi, rng_seed=7)
    b = sample_fleet_demand(fleet, pi, rng_seed=7)
    c = sample_fleet_demand(fleet, pi, rng_seed=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(a >= fleet.mu_min - 1e-12)
    assert np.all(a <= fleet.mu_max + 1e-12)


def test_sampler_impossible_band_raises():
    fleet = _fleet()
    # Truncation band far away from the mean given a tiny variance.
    fleet = EvFleetModel(evs=fleet.evs, tariff_per_mwh=fleet.tariff_per_mwh,
                         random_profiles=fleet.random_profiles,
                         sigma2=1e-8, mu=np.full((1, 6), 5.0),
                         mu_min=np.full((1, 6), 0.0),
                         mu_max=np.full((1, 6), 0.001))
    with pytest.raises(RejectionLimit):
        sample_fleet_demand(fleet, np.array([1.0]), rng_seed=0)
