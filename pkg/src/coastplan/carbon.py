"""Carbon-emission-flow accounting and thermal/tidal procurement.

This layer is decoupled from planning and operations: given a fixed plan and
a concrete operating point (flows, PV, storage, EV), it traces carbon along
the physical power flow and chooses the thermal/tidal procurement split that
minimizes carbon cost plus procurement cost.

Nodal carbon intensity solves the flow-tracing balance

    P_I E_I = P_L' E_I + P_G' E_G

per interval, where P_I is the diagonal nodal flux, P_L the branch flow
distribution, and P_G the generator injections. Branch carbon density
inherits the sending node's intensity (proportional sharing). The generator
intensity is the horizon-level energy-weighted thermal/tidal mix by default;
``per_interval_intensity`` switches to the per-interval ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import NetworkInstance, PlanningDecision


class SingularSystem(RuntimeError):
    """A loaded node receives no power: the operating point is invalid."""


class InfeasibleLoad(RuntimeError):
    """Unit capacities cannot cover the system load in some interval."""


PROCUREMENT_GRID_POINTS = 1001


@dataclass
class OperatingPoint:
    """Physical quantities of one evaluated scenario/realization."""
    flows_mw: np.ndarray      # (lines, T) signed, + means from_node -> to_node
    p_sub_mw: np.ndarray      # (nodes, T) substation injection
    p_grid_mw: np.ndarray     # (nodes, T) base grid load incl. deviation
    p_ev_mw: np.ndarray       # (nodes, T)
    p_pv_mw: np.ndarray       # (nodes, T)
    p_ch_mw: np.ndarray       # (nodes, T)
    p_dch_mw: np.ndarray      # (nodes, T)
    z: tuple = ()             # built-line indicator


def operating_point_from_solution(inst: NetworkInstance,
                                  plan: PlanningDecision,
                                  block, x) -> OperatingPoint:
    """Collect an operating point from a solved operational block."""
    t_count = inst.t_count
    flows = np.zeros((inst.n_lines, t_count))
    for (k, t), j in block.p_flow.items():
        flows[k, t] = float(x[j])
    shape = (inst.n_nodes, t_count)
    p_sub = np.zeros(shape)
    for (v, t), j in block.p_sub.items():
        p_sub[v, t] = float(x[j])
    p_grid = np.asarray(inst.p_load_mw, float) + np.asarray(block.real.dp, float)
    p_ev = np.zeros(shape)
    for p_idx, built in enumerate(plan.y):
        if round(built):
            p_ev[inst.pses[p_idx].node] += np.asarray(
                inst.pses[p_idx].ev_mw[block.scenario], float)
    p_pv = np.zeros(shape)
    for (p_idx, t), j in block.p_pv.items():
        p_pv[inst.pses[p_idx].node, t] += float(x[j])
    p_ch = np.zeros(shape)
    p_dch = np.zeros(shape)
    for (p_idx, t), j in block.p_ch.items():
        p_ch[inst.pses[p_idx].node, t] += float(x[j])
    for (p_idx, t), j in block.p_dch.items():
        p_dch[inst.pses[p_idx].node, t] += float(x[j])
    return OperatingPoint(flows_mw=flows, p_sub_mw=p_sub, p_grid_mw=p_grid,
                          p_ev_mw=p_ev, p_pv_mw=p_pv, p_ch_mw=p_ch,
                          p_dch_mw=p_dch, z=tuple(plan.z))


def node_loads(op: OperatingPoint) -> tuple[np.ndarray, np.ndarray]:
    """Net consumption per node-interval and any reverse injection.

    Load = grid + EV + storage charging - PV - storage discharging, clamped
    at zero; the clamped (negative) residual is returned separately as
    reverse injection and never enters the carbon bill.
    """
    net = (op.p_grid_mw + op.p_ev_mw + op.p_ch_mw
           - op.p_pv_mw - op.p_dch_mw)
    loads = np.maximum(net, 0.0)
    reverse = np.maximum(-net, 0.0)
    return loads, reverse


@dataclass
class DispatchPlan:
    """Thermal/tidal procurement per interval with its cost split."""
    p_tg_mw: np.ndarray
    p_tc_mw: np.ndarray
    e_gen: np.ndarray          # generator intensity profile, t/MWh
    carbon_cost: float
    procurement_cost: float
    grid_resolution: float = 0.0

    @property
    def total_cost(self) -> float:
        return self.carbon_cost + self.procurement_cost


@dataclass
class CefResult:
    """Nodal/branch carbon accounting for one operating point."""
    e_nodal: np.ndarray        # (nodes, T) intensity t/MWh
    rho_branch: np.ndarray     # (lines, T) density = sending-node intensity
    e_gen: np.ndarray          # (T,) generator intensity
    loads_mw: np.ndarray       # (nodes, T) net consumption
    reverse_mw: np.ndarray     # (nodes, T) excluded reverse injection
    p_i: list = field(default_factory=list)   # per-t diagonal flux vectors
    p_l: list = field(default_factory=list)   # per-t branch flow matrices
    p_g: list = field(default_factory=list)   # per-t injection matrices


def generator_intensity(p_tg, p_tc, inst: NetworkInstance) -> np.ndarray:
    """Energy-weighted thermal/tidal intensity; horizon-level by default."""
    p_tg = np.asarray(p_tg, float)
    p_tc = np.asarray(p_tc, float)
    e_tg = inst.thermal.intensity_t_per_mwh
    e_tc = inst.tidal.intensity_t_per_mwh
    if inst.per_interval_intensity:
        tot = p_tg + p_tc
        out = np.zeros_like(tot)
        mask = tot > 1e-12
        out[mask] = (p_tg[mask] * e_tg + p_tc[mask] * e_tc) / tot[mask]
        return out
    tot = float(np.sum(p_tg + p_tc))
    if tot <= 1e-12:
        return np.zeros(len(p_tg))
    val = float(np.sum(p_tg) * e_tg + np.sum(p_tc) * e_tc) / tot
    return np.full(len(p_tg), val)


def compute_cef(op: OperatingPoint, dispatch: DispatchPlan,
                inst: NetworkInstance) -> CefResult:
    """Trace carbon along the flows; solve the nodal balance per interval."""
    n, t_count = inst.n_nodes, inst.t_count
    loads, reverse = node_loads(op)
    e_nodal = np.zeros((n, t_count))
    rho = np.zeros((inst.n_lines, t_count))
    p_i_all, p_l_all, p_g_all = [], [], []
    built = [k for k in range(inst.n_lines)
             if (not op.z or round(op.z[k]))]
    for t in range(t_count):
        p_l = np.zeros((n, n))      # p_l[k, i]: flow from node k into node i
        for k in built:
            ln = inst.lines[k]
            f = float(op.flows_mw[k, t])
            if f >= 0.0:
                p_l[ln.from_node, ln.to_node] += f
            else:
                p_l[ln.to_node, ln.from_node] += -f
        # Generator injections: substations at the grid mix, reverse
        # injections as local zero-carbon sources.
        gens = []                    # (node, power, intensity)
        for v in inst.substation_nodes:
            inj = float(op.p_sub_mw[v, t])
            if inj > 1e-12:
                gens.append((v, inj, float(dispatch.e_gen[t])))
        for v in range(n):
            if reverse[v, t] > 1e-12:
                gens.append((v, float(reverse[v, t]), 0.0))
        p_g = np.zeros((max(len(gens), 1), n))
        e_g = np.zeros(max(len(gens), 1))
        for gi, (v, inj, inten) in enumerate(gens):
            p_g[gi, v] = inj
            e_g[gi] = inten
        flux = p_l.sum(axis=0) + p_g.sum(axis=0)
        lhs = np.diag(flux) - p_l.T
        rhs = p_g.T @ e_g
        for v in range(n):
            if flux[v] <= 1e-12:
                if loads[v, t] > 1e-9:
                    raise SingularSystem(
                        f"node {v} interval {t}: load {loads[v, t]:.4g} MW "
                        "but zero inflow")
                lhs[v, :] = 0.0
                lhs[v, v] = 1.0
                rhs[v] = 0.0
        e_nodal[:, t] = np.linalg.solve(lhs, rhs)
        for k in built:
            ln = inst.lines[k]
            send = ln.from_node if op.flows_mw[k, t] >= 0 else ln.to_node
            rho[k, t] = e_nodal[send, t]
        p_i_all.append(flux)
        p_l_all.append(p_l)
        p_g_all.append(p_g)
    return CefResult(e_nodal=e_nodal, rho_branch=rho,
                     e_gen=np.asarray(dispatch.e_gen, float),
                     loads_mw=loads, reverse_mw=reverse,
                     p_i=p_i_all, p_l=p_l_all, p_g=p_g_all)


def _node_carbon_price(inst: NetworkInstance) -> np.ndarray:
    price = np.zeros(inst.n_nodes)
    for area in inst.areas:
        for v in area.nodes:
            price[v] = area.carbon_price_per_t
    return price


def carbon_cost(cef: CefResult, inst: NetworkInstance) -> float:
    """Annual carbon bill: area tax times intensity times consumption."""
    w = inst.hours_per_year / inst.t_count
    price = _node_carbon_price(inst)
    return float(w * np.sum(price[:, None] * cef.e_nodal * cef.loads_mw))


def procurement_cost(dispatch: DispatchPlan, inst: NetworkInstance) -> float:
    """Annual energy purchase bill for the thermal/tidal split."""
    w = inst.hours_per_year / inst.t_count
    return float(w * (np.asarray(inst.thermal.price_per_mwh)
                      @ np.asarray(dispatch.p_tg_mw)
                      + np.asarray(inst.tidal.price_per_mwh)
                      @ np.asarray(dispatch.p_tc_mw)))


def optimize_procurement(loads, inst: NetworkInstance,
                         grid_points: int = PROCUREMENT_GRID_POINTS
                         ) -> DispatchPlan:
    """Best thermal/tidal split on a one-dimensional tidal-share grid.

    The generator intensity is a ratio of horizon energy totals, so the
    objective is not linear in the dispatch; instead the total tidal energy
    share is swept on a uniform grid and each share is filled per interval
    in merit order (largest intervals first). Carbon is priced with every
    node at the generator intensity, which is exact whenever all consumption
    is grid-fed (lossless radial flow from the substations).
    """
    loads = np.atleast_2d(np.asarray(loads, float))
    per_t = loads.sum(axis=0)
    t_count = len(per_t)
    cap_tg = np.asarray(inst.thermal.cap_mw, float)
    cap_tc = np.asarray(inst.tidal.cap_mw, float)
    for t in range(t_count):
        if per_t[t] > cap_tg[t] + cap_tc[t] + 1e-9:
            raise InfeasibleLoad(
                f"interval {t}: load {per_t[t]:.4g} MW exceeds unit "
                f"capacity {cap_tg[t] + cap_tc[t]:.4g} MW")
    total = float(per_t.sum())
    w = inst.hours_per_year / inst.t_count
    price = _node_carbon_price(inst)
    area_load = price @ loads            # carbon-price-weighted load per t
    max_tc = np.minimum(per_t, cap_tc)
    min_tc = np.maximum(per_t - cap_tg, 0.0)
    order = sorted(range(t_count), key=lambda t: (-per_t[t], t))
    best = None
    for gi in range(grid_points):
        share = gi / (grid_points - 1)
        target = share * total
        if target < min_tc.sum() - 1e-9 or target > max_tc.sum() + 1e-9:
            continue
        p_tc = min_tc.copy()
        remaining = target - p_tc.sum()
        for t in order:
            if remaining <= 1e-12:
                break
            room = max_tc[t] - p_tc[t]
            add = min(room, remaining)
            p_tc[t] += add
            remaining -= add
        p_tg = per_t - p_tc
        e_gen = generator_intensity(p_tg, p_tc, inst)
        c_carb = float(w * np.sum(e_gen * area_load))
        c_proc = float(w * (np.asarray(inst.thermal.price_per_mwh) @ p_tg
                            + np.asarray(inst.tidal.price_per_mwh) @ p_tc))
        if best is None or c_carb + c_proc < best.total_cost - 1e-12:
            best = DispatchPlan(p_tg_mw=p_tg, p_tc_mw=p_tc, e_gen=e_gen,
                                carbon_cost=c_carb, procurement_cost=c_proc,
                                grid_resolution=1.0 / (grid_points - 1))
    if best is None:
        raise InfeasibleLoad("no feasible tidal share on the grid")
    return best
