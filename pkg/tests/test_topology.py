"""Radiality constraints versus brute-force spanning-tree enumeration."""

import itertools

import numpy as np
import pytest

from coastplan.casesuite import topology_set_check
from coastplan.instance import instance_from_dict
from coastplan.topology import (enumerate_radial_topologies, is_radial,
                                orientation_from_tree)


def graph_instance(n_nodes, edges, substations=(0,)):
    nodes = []
    for v in range(n_nodes):
        nodes.append({"id": v, "is_substation": v in substations,
                      "p_load_mw": 0.0 if v in substations else 0.1,
                      "q_load_mvar": 0.0 if v in substations else 0.04})
    lines = [{"from": a, "to": b, "r_ohm": 0.05, "x_ohm": 0.04,
              "smax_mva": 10.0, "length_km": 1.0, "cost_per_km": 10.0,
              "salt_coeff": 0.05} for a, b in edges]
    return instance_from_dict({
        "name": f"graph-{n_nodes}",
        "horizon": {"intervals": 1, "hours_per_year": 8760},
        "finance": {"discount_rate": 0.05, "line_lifetime_years": 20,
                    "pses_lifetime_years": 10},
        "voltage": {"vmin_pu": 0.90, "vmax_pu": 1.10, "v_base_kv": 12.66},
        "nodes": nodes, "lines": lines, "areas": [], "pses": [],
        "units": {"thermal": {"cap_mw": 50.0, "price_per_mwh": 0.04,
                              "intensity_t_per_mwh": 0.85},
                  "tidal": {"cap_mw": 0.0, "price_per_mwh": 0.03,
                            "intensity_t_per_mwh": 0.0}},
        "tariffs": {"tou_price_per_mwh": [0.05]},
        "substation": {"p_max_mw": 50.0, "q_max_mvar": 30.0},
        "uncertainty": {"alpha1": 0.95, "alpha_inf": 0.95, "sigma2": 0.1,
                        "pi0": [1.0]},
        "conventional_station_cost": 10.0,
    })


K3 = graph_instance(3, [(0, 1), (0, 2), (1, 2)])
K4 = graph_instance(4, list(itertools.combinations(range(4), 2)))


def brute_force_trees(inst):
    """Reference enumeration straight from the definition: connected,
    acyclic, spanning, counted by edges = nodes - substations."""
    n, subs = inst.n_nodes, set(inst.substation_nodes)
    out = set()
    for z in itertools.product((0, 1), repeat=inst.n_lines):
        if sum(z) != n - len(subs):
            continue
        # Union-find over built edges: acyclic and every node reaches a
        # substation.
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        ok = True
        for k, built in enumerate(z):
            if not built:
                continue
            ra = find(inst.lines[k].from_node)
            rb = find(inst.lines[k].to_node)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        if not ok:
            continue
        roots = {find(v) for v in subs}
        if all(find(v) in roots for v in range(n)):
            out.add(z)
    return out


def test_cayley_counts():
    assert len(set(enumerate_radial_topologies(K3))) == 3
    assert len(set(enumerate_radial_topologies(K4))) == 16


def test_enumeration_matches_brute_force():
    for inst in (K3, K4):
        assert set(enumerate_radial_topologies(inst)) == brute_force_trees(inst)


def test_two_substation_forest():
    inst = graph_instance(4, [(0, 2), (1, 2), (2, 3), (1, 3)],
                          substations=(0, 1))
    got = set(enumerate_radial_topologies(inst))
    assert got == brute_force_trees(inst)
    for z in got:
        assert sum(z) == 2


def test_is_radial_rejects_cycles_and_disconnection():
    assert is_radial(K3, (1, 1, 0))
    assert not is_radial(K3, (1, 1, 1))     # cycle
    assert not is_radial(K3, (1, 0, 0))     # node 2 stranded


def test_orientation_points_away_from_substation():
    z = (1, 1, 0)                            # 0-1 and 0-2 built
    orient = orientation_from_tree(K3, z)
    parents = {}
    for k, ln in enumerate(K3.lines):
        if not z[k]:
            continue
        if orient[k] >= 0:
            parents[ln.to_node] = ln.from_node
        else:
            parents[ln.from_node] = ln.to_node
    assert parents == {1: 0, 2: 0}


def test_milp_set_equality_on_random_graphs():
    rng = np.random.default_rng(5)
    for _ in range(3):
        n = int(rng.integers(4, 7))
        edges = set()
        for v in range(1, n):
            edges.add((int(rng.integers(0, v)), v))
        while len(edges) < min(n + 2, n * (n - 1) // 2):
            a, b = sorted(rng.integers(0, n, size=2).tolist())
            if a != b:
                edges.add((a, b))
        inst = graph_instance(n, sorted(edges))
        assert topology_set_check(inst)
