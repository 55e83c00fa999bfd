"""Single-scenario operational model of the built network.

Linearized branch-flow physics on a radial network: sending-end real and
reactive flows per built line, squared voltage magnitudes per node, a
polygonal inner approximation of the apparent-power limit, and a tangent
(outer) surrogate of the quadratic line losses. Losses are priced in the
objective at the time-of-use tariff; the nodal balance itself is lossless.

The same builder serves three callers:
  * the planning master, where line builds ``z`` and station builds ``y``
    are program variables and every line/station constraint is gated;
  * the worst-case subproblem, where the plan is fixed and the block is
    built only over built equipment (no gating), with the dependence of
    row right-hand sides on the uncertainty box recorded for dualization;
  * plan evaluation at a concrete realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import NetworkInstance
from .milp import MixedIntegerProgram

DEFAULT_LOSS_SEGMENTS = 8
DEFAULT_FACETS = 8


@dataclass(frozen=True)
class UncertainEntry:
    """One coordinate of the uncertainty box, normalized to u in [0, 1].

    kind is one of "dp", "dq" (node load deviations) or "pv" (generation
    deficit at a station candidate). ``index`` is the node index for loads
    and the station-candidate index for pv. u = 0 is the lower end of the
    physical coordinate, u = 1 the upper end.
    """
    kind: str
    index: int
    t: int
    lo: float
    hi: float

    @property
    def span(self) -> float:
        return self.hi - self.lo


def box_entries(inst: NetworkInstance) -> list[UncertainEntry]:
    """Enumerate the non-degenerate coordinates of the uncertainty box."""
    out = []
    for v in range(inst.n_nodes):
        for t in range(inst.t_count):
            lo, hi = -inst.dp_down_mw[v, t], inst.dp_up_mw[v, t]
            if hi - lo > 0:
                out.append(UncertainEntry("dp", v, t, lo, hi))
            lo, hi = -inst.dq_down_mvar[v, t], inst.dq_up_mvar[v, t]
            if hi - lo > 0:
                out.append(UncertainEntry("dq", v, t, lo, hi))
    for p_idx, p in enumerate(inst.pses):
        for t in range(inst.t_count):
            if p.pv_dev_down_mw[t] > 0:
                out.append(UncertainEntry("pv", p_idx, t, 0.0,
                                          float(p.pv_dev_down_mw[t])))
    return out


@dataclass
class Realization:
    """Concrete point of the uncertainty box."""
    dp: np.ndarray           # (nodes, intervals) load deviation, MW
    dq: np.ndarray           # (nodes, intervals) reactive deviation, MVAr
    pv_deficit: np.ndarray   # (pses, intervals) generation shortfall, MW

    @classmethod
    def nominal(cls, inst: NetworkInstance) -> "Realization":
        return cls(np.zeros_like(inst.p_load_mw), np.zeros_like(inst.q_load_mvar),
                   np.zeros((len(inst.pses), inst.t_count)))

    @classmethod
    def from_u(cls, inst: NetworkInstance, entries, u) -> "Realization":
        real = cls.nominal(inst)
        for e, val in zip(entries, u):
            coord = e.lo + float(val) * e.span
            if e.kind == "dp":
                real.dp[e.index, e.t] = coord
            elif e.kind == "dq":
                real.dq[e.index, e.t] = coord
            else:
                real.pv_deficit[e.index, e.t] = coord
        return real


@dataclass(frozen=True)
class LossSurrogate:
    """Tangent under-approximation of x^2 on [-smax, smax].

    Tangents are placed at +-(k - 1/2) * smax / k_seg, k = 1..k_seg, so the
    worst-case gap x^2 - max_k(tangent_k(x)) equals (smax / k_seg)^2 / 4.
    """
    k_seg: int = DEFAULT_LOSS_SEGMENTS

    def tangent_points(self, smax: float) -> list[float]:
        step = smax / self.k_seg
        pts = [(k - 0.5) * step for k in range(1, self.k_seg + 1)]
        return [-p for p in reversed(pts)] + pts

    def tangents(self, smax: float) -> list[tuple[float, float]]:
        """(slope, intercept) pairs with tangent(x) = slope*x + intercept."""
        return [(2.0 * x0, -x0 * x0) for x0 in self.tangent_points(smax)]

    def max_gap(self, smax: float) -> float:
        return (smax / self.k_seg) ** 2 / 4.0

    def value(self, x: float, smax: float) -> float:
        return max((s * x + b for s, b in self.tangents(smax)), default=0.0)


@dataclass
class OpBlock:
    """Bookkeeping for one scenario's operational variables and rows."""
    scenario: int
    real: Realization
    k_seg: int
    facets: int
    z_fixed: tuple | None
    y_fixed: tuple | None
    z_vars: np.ndarray | None
    y_vars: np.ndarray | None
    station_type: str
    prefix: str
    binary_gamma: bool = False   # enforce exclusive charge/discharge exactly
    line_ids: list[int] = field(default_factory=list)     # built/modeled lines
    station_ids: list[int] = field(default_factory=list)  # modeled candidates
    p_flow: dict = field(default_factory=dict)   # (line, t) -> var
    q_flow: dict = field(default_factory=dict)
    loss_p: dict = field(default_factory=dict)
    loss_q: dict = field(default_factory=dict)
    vsq: dict = field(default_factory=dict)      # (node, t) -> var
    p_sub: dict = field(default_factory=dict)    # (sub_node, t) -> var
    q_sub: dict = field(default_factory=dict)
    p_pv: dict = field(default_factory=dict)     # (pses_idx, t) -> var
    p_ch: dict = field(default_factory=dict)
    p_dch: dict = field(default_factory=dict)
    e_ess: dict = field(default_factory=dict)
    gamma_ch: dict = field(default_factory=dict)
    gamma_dch: dict = field(default_factory=dict)
    # Balance accumulators: (node, t) -> {var: coef}; positive = injection.
    p_inj: dict = field(default_factory=dict)
    q_inj: dict = field(default_factory=dict)
    # Extra fixed load added to the P balance rhs (EV demand with fixed y).
    p_extra_load: dict = field(default_factory=dict)
    # Rows whose rhs is affine in the box: row -> {entry_pos: coef_on_u}.
    u_rows: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    balance_rows_p: dict = field(default_factory=dict)   # (node, t) -> row
    pv_cap_rows: dict = field(default_factory=dict)      # (pses, t) -> row

    def line_built(self, k):
        """True/False when fixed, else None (decision variable)."""
        if self.z_fixed is not None:
            return bool(round(self.z_fixed[k]))
        return None

    def station_built(self, p_idx):
        if self.y_fixed is not None:
            return bool(round(self.y_fixed[p_idx]))
        return None

    def _add_inj(self, store, node, t, var, coef=1.0):
        store.setdefault((node, t), {})
        store[(node, t)][var] = store[(node, t)].get(var, 0.0) + coef


def new_block(inst: NetworkInstance, scenario: int, real: Realization, *,
              z_fixed=None, y_fixed=None, z_vars=None, y_vars=None,
              k_seg: int = DEFAULT_LOSS_SEGMENTS, facets: int = DEFAULT_FACETS,
              station_type: str = "pses", entries=None, prefix: str = "",
              binary_gamma: bool = False) -> OpBlock:
    if (z_fixed is None) == (z_vars is None):
        raise ValueError("exactly one of z_fixed / z_vars must be given")
    if (y_fixed is None) == (y_vars is None):
        raise ValueError("exactly one of y_fixed / y_vars must be given")
    if entries and (z_fixed is None or y_fixed is None):
        raise ValueError("uncertainty-row tracking requires a fixed plan")
    if station_type not in ("pses", "conventional"):
        raise ValueError(f"unknown station type {station_type!r}")
    block = OpBlock(scenario=scenario, real=real, k_seg=k_seg, facets=facets,
                    z_fixed=tuple(z_fixed) if z_fixed is not None else None,
                    y_fixed=tuple(y_fixed) if y_fixed is not None else None,
                    z_vars=z_vars, y_vars=y_vars, station_type=station_type,
                    prefix=prefix, binary_gamma=binary_gamma,
                    entries=list(entries or []))
    block.line_ids = [k for k in range(inst.n_lines)
                      if block.line_built(k) is not False]
    block.station_ids = [p for p in range(len(inst.pses))
                         if block.station_built(p) is not False]
    return block


def _voltage_big_m(inst: NetworkInstance, ln) -> float:
    drop = 2.0 * (ln.r_ohm + ln.x_ohm) * ln.smax_mva / inst.v_base_kv ** 2
    return (inst.vmax_pu ** 2 - inst.vmin_pu ** 2) + drop


def build_power_flow(prog: MixedIntegerProgram, inst: NetworkInstance,
                     block: OpBlock) -> None:
    """Flow and voltage variables, drop equations, loss tangents."""
    pre, s = block.prefix, block.scenario
    vmin2, vmax2 = inst.vmin_pu ** 2, inst.vmax_pu ** 2
    subs = set(inst.substation_nodes)
    for v in range(inst.n_nodes):
        for t in range(inst.t_count):
            fixed = v in subs
            block.vsq[(v, t)] = prog.add_var(
                f"{pre}vsq[{v},{t}]",
                lb=1.0 if fixed else vmin2, ub=1.0 if fixed else vmax2)
    surrogate = LossSurrogate(block.k_seg)
    for k in block.line_ids:
        ln = inst.lines[k]
        smax = ln.smax_mva
        gated = block.line_built(k) is None
        for t in range(inst.t_count):
            p = prog.add_var(f"{pre}pf[{k},{t}]", lb=-smax, ub=smax)
            q = prog.add_var(f"{pre}qf[{k},{t}]", lb=-smax, ub=smax)
            lp = prog.add_var(f"{pre}lp[{k},{t}]", lb=0.0, ub=smax * smax)
            lq = prog.add_var(f"{pre}lq[{k},{t}]", lb=0.0, ub=smax * smax)
            block.p_flow[(k, t)] = p
            block.q_flow[(k, t)] = q
            block.loss_p[(k, t)] = lp
            block.loss_q[(k, t)] = lq
            # Positive flow runs from -> to: it leaves from_node, enters to_node.
            block._add_inj(block.p_inj, ln.to_node, t, p, 1.0)
            block._add_inj(block.p_inj, ln.from_node, t, p, -1.0)
            block._add_inj(block.q_inj, ln.to_node, t, q, 1.0)
            block._add_inj(block.q_inj, ln.from_node, t, q, -1.0)
            # Voltage drop along the line, in squared per-unit.
            drop_p = 2.0 * ln.r_ohm / inst.v_base_kv ** 2
            drop_q = 2.0 * ln.x_ohm / inst.v_base_kv ** 2
            coefs = {block.vsq[(ln.from_node, t)]: 1.0,
                     block.vsq[(ln.to_node, t)]: -1.0,
                     p: -drop_p, q: -drop_q}
            if gated:
                big_m = _voltage_big_m(inst, ln)
                zk = int(block.z_vars[k])
                up = dict(coefs)
                up[zk] = big_m
                prog.add_constr(up, "<=", big_m, name=f"{pre}vdrop_u[{k},{t}]")
                dn = dict(coefs)
                dn[zk] = -big_m
                prog.add_constr(dn, ">=", -big_m, name=f"{pre}vdrop_l[{k},{t}]")
            else:
                prog.add_constr(coefs, "=", 0.0, name=f"{pre}vdrop[{k},{t}]")
            # Loss surrogate tangents for squared flow, both directions.
            for j, (slope, intercept) in enumerate(surrogate.tangents(smax)):
                prog.add_constr({lp: 1.0, p: -slope}, ">=", intercept,
                                name=f"{pre}ltp[{k},{t},{j}]")
                prog.add_constr({lq: 1.0, q: -slope}, ">=", intercept,
                                name=f"{pre}ltq[{k},{t},{j}]")


def build_security(prog: MixedIntegerProgram, inst: NetworkInstance,
                   block: OpBlock) -> None:
    """Polygonal apparent-power limit; rhs collapses to zero when unbuilt."""
    pre = block.prefix
    nf = block.facets
    rhs_scale = math.cos(math.pi / nf)
    for k in block.line_ids:
        ln = inst.lines[k]
        gated = block.line_built(k) is None
        for t in range(inst.t_count):
            p = block.p_flow[(k, t)]
            q = block.q_flow[(k, t)]
            for f in range(nf):
                ang = math.pi / nf + 2.0 * math.pi * f / nf
                coefs = {p: math.cos(ang), q: math.sin(ang)}
                if gated:
                    coefs[int(block.z_vars[k])] = -ln.smax_mva * rhs_scale
                    prog.add_constr(coefs, "<=", 0.0,
                                    name=f"{pre}sec[{k},{t},{f}]")
                else:
                    prog.add_constr(coefs, "<=", ln.smax_mva * rhs_scale,
                                    name=f"{pre}sec[{k},{t},{f}]")


def build_substation_pv(prog: MixedIntegerProgram, inst: NetworkInstance,
                        block: OpBlock) -> None:
    """Grid injections at substations; PV output and EV demand at stations."""
    pre, s = block.prefix, block.scenario
    for v in inst.substation_nodes:
        for t in range(inst.t_count):
            ps = prog.add_var(f"{pre}psub[{v},{t}]", lb=0.0, ub=inst.sub_p_max_mw)
            qs = prog.add_var(f"{pre}qsub[{v},{t}]", lb=-inst.sub_q_max_mvar,
                              ub=inst.sub_q_max_mvar)
            block.p_sub[(v, t)] = ps
            block.q_sub[(v, t)] = qs
            block._add_inj(block.p_inj, v, t, ps)
            block._add_inj(block.q_inj, v, t, qs)
    entry_pos = {(e.kind, e.index, e.t): j for j, e in enumerate(block.entries)}
    for p_idx in block.station_ids:
        spec = inst.pses[p_idx]
        built = block.station_built(p_idx)
        has_pv = block.station_type == "pses"
        for t in range(inst.t_count):
            # EV charging demand exists wherever a station is built.
            ev = float(spec.ev_mw[s, t])
            if ev:
                if built is None:
                    # Moves to the lhs of the balance row: -ev * y.
                    block._add_inj(block.p_inj, spec.node, t,
                                   int(block.y_vars[p_idx]), -ev)
                else:
                    key = (spec.node, t)
                    block.p_extra_load[key] = block.p_extra_load.get(key, 0.0) + ev
            if not has_pv:
                continue
            cap = float(spec.pv_cap_mw[t]) - float(block.real.pv_deficit[p_idx, t])
            pv = prog.add_var(f"{pre}pv[{p_idx},{t}]", lb=0.0,
                              ub=max(cap, 0.0) if built else float(spec.pv_cap_mw[t]))
            block.p_pv[(p_idx, t)] = pv
            block._add_inj(block.p_inj, spec.node, t, pv)
            if built is None:
                prog.add_constr({pv: 1.0, int(block.y_vars[p_idx]): -max(cap, 0.0)},
                                "<=", 0.0, name=f"{pre}pvcap[{p_idx},{t}]")
            else:
                # Explicit row so box dependence sits in a rhs, not a bound.
                row = prog.add_constr({pv: 1.0}, "<=", max(cap, 0.0),
                                      name=f"{pre}pvcap[{p_idx},{t}]")
                block.pv_cap_rows[(p_idx, t)] = row
                j = entry_pos.get(("pv", p_idx, t))
                if j is not None:
                    block.u_rows.setdefault(row, {})[j] = -block.entries[j].span


def build_ess(prog: MixedIntegerProgram, inst: NetworkInstance,
              block: OpBlock) -> None:
    """Storage charging/discharging with an energy recursion over the day."""
    if block.station_type != "pses":
        return
    pre = block.prefix
    dt = inst.dt_hours
    for p_idx in block.station_ids:
        spec = inst.pses[p_idx]
        e = spec.ess
        if e is None:
            continue
        built = block.station_built(p_idx)
        node = spec.node
        for t in range(inst.t_count):
            ch = prog.add_var(f"{pre}ch[{p_idx},{t}]", lb=0.0, ub=e.p_ch_max_mw)
            dch = prog.add_var(f"{pre}dch[{p_idx},{t}]", lb=0.0, ub=e.p_dch_max_mw)
            en = prog.add_var(f"{pre}en[{p_idx},{t}]",
                              lb=0.0 if built is None else e.e_min_mwh,
                              ub=e.e_max_mwh)
            gch = prog.add_var(f"{pre}gch[{p_idx},{t}]", lb=0.0, ub=1.0,
                               integer=block.binary_gamma)
            gdch = prog.add_var(f"{pre}gdch[{p_idx},{t}]", lb=0.0, ub=1.0,
                                integer=block.binary_gamma)
            block.p_ch[(p_idx, t)] = ch
            block.p_dch[(p_idx, t)] = dch
            block.e_ess[(p_idx, t)] = en
            block.gamma_ch[(p_idx, t)] = gch
            block.gamma_dch[(p_idx, t)] = gdch
            block._add_inj(block.p_inj, node, t, dch, 1.0)
            block._add_inj(block.p_inj, node, t, ch, -1.0)
            prog.add_constr({ch: 1.0, gch: -e.p_ch_max_mw}, "<=", 0.0,
                            name=f"{pre}chcap[{p_idx},{t}]")
            prog.add_constr({dch: 1.0, gdch: -e.p_dch_max_mw}, "<=", 0.0,
                            name=f"{pre}dchcap[{p_idx},{t}]")
            mode = {gch: 1.0, gdch: 1.0}
            if built is None:
                mode[int(block.y_vars[p_idx])] = -1.0
                prog.add_constr(mode, "<=", 0.0, name=f"{pre}mode[{p_idx},{t}]")
            else:
                prog.add_constr(mode, "<=", 1.0, name=f"{pre}mode[{p_idx},{t}]")
            # Energy recursion; the day starts from the rated initial level.
            coefs = {en: 1.0, ch: -e.mu_ch * dt, dch: dt / e.mu_dch}
            if t == 0:
                if built is None:
                    coefs[int(block.y_vars[p_idx])] = -e.e_initial_mwh
                    prog.add_constr(coefs, "=", 0.0,
                                    name=f"{pre}soc[{p_idx},{t}]")
                else:
                    prog.add_constr(coefs, "=", e.e_initial_mwh,
                                    name=f"{pre}soc[{p_idx},{t}]")
            else:
                coefs[block.e_ess[(p_idx, t - 1)]] = -1.0
                prog.add_constr(coefs, "=", 0.0, name=f"{pre}soc[{p_idx},{t}]")
        if built is None:
            # An unbuilt station has no storage: cap the whole day's energy.
            for t in range(inst.t_count):
                prog.add_constr({block.e_ess[(p_idx, t)]: 1.0,
                                 int(block.y_vars[p_idx]): -e.e_max_mwh},
                                "<=", 0.0, name=f"{pre}esscap[{p_idx},{t}]")


def finalize_balance(prog: MixedIntegerProgram, inst: NetworkInstance,
                     block: OpBlock) -> None:
    """Emit nodal power-balance rows; record box sensitivities on the rhs."""
    pre, s = block.prefix, block.scenario
    entry_pos = {(e.kind, e.index, e.t): j for j, e in enumerate(block.entries)}
    for v in range(inst.n_nodes):
        for t in range(inst.t_count):
            rhs_p = (float(inst.p_load_mw[v, t]) + float(block.real.dp[v, t])
                     + block.p_extra_load.get((v, t), 0.0))
            row = prog.add_constr(block.p_inj.get((v, t), {}), "=", rhs_p,
                                  name=f"{pre}pbal[{v},{t}]")
            block.balance_rows_p[(v, t)] = row
            j = entry_pos.get(("dp", v, t))
            if j is not None:
                block.u_rows.setdefault(row, {})[j] = block.entries[j].span
            rhs_q = float(inst.q_load_mvar[v, t]) + float(block.real.dq[v, t])
            row_q = prog.add_constr(block.q_inj.get((v, t), {}), "=", rhs_q,
                                    name=f"{pre}qbal[{v},{t}]")
            j = entry_pos.get(("dq", v, t))
            if j is not None:
                block.u_rows.setdefault(row_q, {})[j] = block.entries[j].span


def build_operations_block(prog: MixedIntegerProgram, inst: NetworkInstance,
                           scenario: int, real: Realization, **kwargs) -> OpBlock:
    block = new_block(inst, scenario, real, **kwargs)
    build_power_flow(prog, inst, block)
    build_security(prog, inst, block)
    build_substation_pv(prog, inst, block)
    build_ess(prog, inst, block)
    finalize_balance(prog, inst, block)
    return block


# -- operating cost ------------------------------------------------------------


def loss_cost_coefficients(inst: NetworkInstance, block: OpBlock) -> dict:
    """Objective terms pricing surrogate line losses at the TOU tariff."""
    w = inst.hours_per_year / inst.t_count
    coefs: dict[int, float] = {}
    for k in block.line_ids:
        r_eff = inst.lines[k].r_ohm / inst.v_base_kv ** 2
        for t in range(inst.t_count):
            price = w * float(inst.tou_price_per_mwh[t]) * r_eff
            coefs[block.loss_p[(k, t)]] = price
            coefs[block.loss_q[(k, t)]] = price
    return coefs


def operation_cost_surrogate(inst: NetworkInstance, block: OpBlock, x) -> float:
    """Annual loss cost as priced by the LP (tangent surrogate)."""
    return sum(c * float(x[j]) for j, c in
               loss_cost_coefficients(inst, block).items())


def operation_cost_true(inst: NetworkInstance, block: OpBlock, x) -> float:
    """Annual loss cost with exact quadratic losses at the LP operating point."""
    w = inst.hours_per_year / inst.t_count
    total = 0.0
    for k in block.line_ids:
        r_eff = inst.lines[k].r_ohm / inst.v_base_kv ** 2
        for t in range(inst.t_count):
            p = float(x[block.p_flow[(k, t)]])
            q = float(x[block.q_flow[(k, t)]])
            total += w * float(inst.tou_price_per_mwh[t]) * r_eff * (p * p + q * q)
    return total
