"""Radial-topology machinery for the line-build decision.

A feasible build is a spanning forest over all nodes in which every tree
component contains exactly one substation: |built lines| = |nodes| - |subs|,
plus connectivity. The MILP encoding uses a parentization (one directed arc
selected per built line, each non-substation node has exactly one parent
arc pointing toward it, substations have none) and a single-commodity flow
that forces connectivity to the substations.
"""

from __future__ import annotations

import itertools

import numpy as np

from .instance import NetworkInstance
from .milp import MixedIntegerProgram


def build_radiality_constraints(prog: MixedIntegerProgram,
                                inst: NetworkInstance,
                                prefix: str = "") -> dict:
    """Add the line-build variables and radiality rows to ``prog``.

    Returns variable index arrays: ``z`` (lines,), ``y_arc`` (2*lines,)
    where arc 2k is from->to of line k and arc 2k+1 is to->from, and
    ``flow`` (2*lines,). Arc a points toward its head: head(2k)=to,
    head(2k+1)=from.
    """
    n = inst.n_nodes
    subs = set(inst.substation_nodes)
    z = np.array([prog.add_var(f"{prefix}z[{k}]", lb=0.0, ub=1.0, integer=True)
                  for k in range(inst.n_lines)])
    y_arc = np.empty(2 * inst.n_lines, dtype=np.int64)
    flow = np.empty(2 * inst.n_lines, dtype=np.int64)
    heads = np.empty(2 * inst.n_lines, dtype=np.int64)
    tails = np.empty(2 * inst.n_lines, dtype=np.int64)
    for k, ln in enumerate(inst.lines):
        for a, (tail, head) in enumerate(((ln.from_node, ln.to_node),
                                          (ln.to_node, ln.from_node))):
            idx = 2 * k + a
            fixed_zero = head in subs
            y_arc[idx] = prog.add_var(f"{prefix}arc[{idx}]", lb=0.0,
                                      ub=0.0 if fixed_zero else 1.0,
                                      integer=True)
            flow[idx] = prog.add_var(f"{prefix}tflow[{idx}]", lb=0.0, ub=float(n))
            heads[idx] = head
            tails[idx] = tail
            # Commodity may only ride selected arcs.
            prog.add_constr({flow[idx]: 1.0, y_arc[idx]: -float(n)}, "<=", 0.0,
                            name=f"{prefix}tflow_gate[{idx}]")
        # A built line carries exactly one orientation.
        prog.add_constr({y_arc[2 * k]: 1.0, y_arc[2 * k + 1]: 1.0, z[k]: -1.0},
                        "=", 0.0, name=f"{prefix}orient[{k}]")
    # Forest cardinality.
    prog.add_constr({int(j): 1.0 for j in z}, "=", float(n - len(subs)),
                    name=f"{prefix}forest_size")
    for v in range(n):
        entering = [int(a) for a in range(2 * inst.n_lines) if heads[a] == v]
        leaving = [int(a) for a in range(2 * inst.n_lines) if tails[a] == v]
        if v in subs:
            continue
        # Exactly one parent arc per load node.
        prog.add_constr({int(y_arc[a]): 1.0 for a in entering}, "=", 1.0,
                        name=f"{prefix}parent[{v}]")
        # Each load node consumes one unit of the connectivity commodity.
        coefs: dict[int, float] = {}
        for a in entering:
            coefs[int(flow[a])] = coefs.get(int(flow[a]), 0.0) + 1.0
        for a in leaving:
            coefs[int(flow[a])] = coefs.get(int(flow[a]), 0.0) - 1.0
        prog.add_constr(coefs, "=", 1.0, name=f"{prefix}tflow_bal[{v}]")
    return {"z": z, "y_arc": y_arc, "flow": flow, "heads": heads, "tails": tails}


def is_radial(inst: NetworkInstance, z) -> bool:
    """True iff the built lines form a spanning forest in which every
    component contains exactly one substation."""
    n = inst.n_nodes
    built = [inst.lines[k] for k, v in enumerate(z) if round(v)]
    if len(built) != n - len(inst.substation_nodes):
        return False
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for ln in built:
        a, b = find(ln.from_node), find(ln.to_node)
        if a == b:
            return False  # cycle
        parent[a] = b
    roots = {find(s) for s in inst.substation_nodes}
    if len(roots) != len(inst.substation_nodes):
        return False  # two substations in one component
    return all(find(v) in roots for v in range(n))


def enumerate_radial_topologies(inst: NetworkInstance):
    """Yield every feasible z vector (tuple of 0/1) by brute force.

    Intended for small instances: complexity is C(lines, nodes-subs).
    """
    need = inst.n_nodes - len(inst.substation_nodes)
    for combo in itertools.combinations(range(inst.n_lines), need):
        z = tuple(1 if k in combo else 0 for k in range(inst.n_lines))
        if is_radial(inst, z):
            yield z


def orientation_from_tree(inst: NetworkInstance, z) -> np.ndarray:
    """Arc-selection vector (2*lines) pointing every built line away from
    its substation root; zeros for unbuilt lines."""
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in range(inst.n_nodes)}
    for k, ln in enumerate(inst.lines):
        if round(z[k]):
            adj[ln.from_node].append((ln.to_node, k))
            adj[ln.to_node].append((ln.from_node, k))
    y = np.zeros(2 * len(inst.lines))
    seen = set(inst.substation_nodes)
    stack = list(inst.substation_nodes)
    while stack:
        u = stack.pop()
        for v, k in adj[u]:
            if v in seen:
                continue
            seen.add(v)
            # Arc 2k runs from->to; select the orientation whose head is v.
            y[2 * k if inst.lines[k].to_node == v else 2 * k + 1] = 1.0
            stack.append(v)
    return y
