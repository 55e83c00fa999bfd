"""Problem instance: network data, cost coefficients, investment accounting.

Instances are loaded from JSON (see ``docs`` section of the README for the
schema) and are immutable after construction. All money is handled in units
of 1e4 CNY as scaled doubles; money comparisons downstream use an absolute
tolerance of 1e-6.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MONEY_TOL = 1e-6


class InstanceError(ValueError):
    pass


def _profile(value, t_count, name):
    """Broadcast a scalar or validate a per-interval list."""
    if isinstance(value, (int, float)):
        return np.full(t_count, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (t_count,):
        raise InstanceError(f"{name}: expected {t_count} entries, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class LineSpec:
    from_node: int
    to_node: int
    r_ohm: float
    x_ohm: float
    smax_mva: float
    length_km: float
    cost_per_km: float      # 1e4 CNY / km
    salt_coeff: float       # annual maintenance uplift fraction

    @property
    def build_cost(self) -> float:
        return self.cost_per_km * self.length_km

    @property
    def salt_cost(self) -> float:
        return self.salt_coeff * self.build_cost


@dataclass(frozen=True)
class EssSpec:
    p_ch_max_mw: float
    p_dch_max_mw: float
    e_min_mwh: float
    e_max_mwh: float
    mu_ch: float
    mu_dch: float
    e_initial_mwh: float


@dataclass(frozen=True)
class PsesSpec:
    node: int
    cost: float             # 1e4 CNY per unit
    salt_coeff: float
    subsidy_per_year: float  # 1e4 CNY / year, credited (reported negative)
    pv_cap_mw: np.ndarray          # per interval
    pv_dev_down_mw: np.ndarray     # box half-width below the cap profile
    ev_mw: np.ndarray              # (scenarios, intervals) charging demand
    ess: EssSpec | None
    terminal: bool = False         # feeder-end candidate (fixed-siting case)

    @property
    def salt_cost(self) -> float:
        return self.salt_coeff * self.cost


@dataclass(frozen=True)
class AreaSpec:
    name: str
    nodes: tuple[int, ...]
    carbon_price_per_t: float   # 1e4 CNY per tCO2 (scaled on load)
    pses_min: int
    pses_max: int


@dataclass(frozen=True)
class UnitSpec:
    cap_mw: np.ndarray          # per interval
    price_per_mwh: np.ndarray   # 1e4 CNY / MWh
    intensity_t_per_mwh: float


@dataclass(frozen=True)
class NetworkInstance:
    name: str
    t_count: int
    hours_per_year: float
    discount_rate: float
    line_lifetime_years: int
    pses_lifetime_years: int
    vmin_pu: float
    vmax_pu: float
    v_base_kv: float
    substation_nodes: tuple[int, ...]
    p_load_mw: np.ndarray       # (nodes, intervals) reference grid load
    q_load_mvar: np.ndarray
    dp_down_mw: np.ndarray      # box deviations (nodes, intervals), >= 0
    dp_up_mw: np.ndarray
    dq_down_mvar: np.ndarray
    dq_up_mvar: np.ndarray
    lines: tuple[LineSpec, ...]
    areas: tuple[AreaSpec, ...]
    pses: tuple[PsesSpec, ...]
    thermal: UnitSpec
    tidal: UnitSpec
    tou_price_per_mwh: np.ndarray     # 1e4 CNY / MWh, per interval
    sub_p_max_mw: float
    sub_q_max_mvar: float
    alpha1: float
    alpha_inf: float
    sigma2: float
    pi0: np.ndarray
    conventional_station_cost: float = 0.0
    per_interval_intensity: bool = False
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.p_load_mw.shape[0]

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_scenarios(self) -> int:
        return len(self.pi0)

    @property
    def dt_hours(self) -> float:
        return 24.0 / self.t_count

    def non_substation_nodes(self) -> list[int]:
        subs = set(self.substation_nodes)
        return [i for i in range(self.n_nodes) if i not in subs]


@dataclass(frozen=True)
class PlanningDecision:
    """First-stage build decision: z per candidate line, y per PSES site."""
    z: tuple[int, ...]
    y: tuple[int, ...]
    y_parent: tuple[int, ...] = ()   # per directed line, 2*n_lines entries

    def built_lines(self):
        return [k for k, v in enumerate(self.z) if v]

    def built_stations(self):
        return [k for k, v in enumerate(self.y) if v]


# -- investment accounting ---------------------------------------------------


def annualization_factor(rate: float, years: int) -> float:
    """Level-payment annuity factor: rate*(1+rate)^years / ((1+rate)^years - 1)."""
    if not (0.0 < rate < 1.0):
        raise InstanceError(f"discount rate must be in (0,1), got {rate}")
    if years < 1 or int(years) != years:
        raise InstanceError(f"lifetime must be a positive integer, got {years}")
    growth = (1.0 + rate) ** years
    return rate * growth / (growth - 1.0)


def present_value_factor(rate: float, years: int) -> float:
    """Present value of a unit annuity: sum_{k=1..years} (1+rate)^-k."""
    return sum((1.0 + rate) ** -k for k in range(1, int(years) + 1))


def investment_cost(decision: PlanningDecision, inst: NetworkInstance,
                    station_cost_override: float | None = None) -> float:
    """Annualized build cost: line annuity + station annuity + salt terms.

    ``station_cost_override`` substitutes the per-unit station cost (used for
    the conventional-station variant); salt cost scales with the same
    coefficient on the substituted cost.
    """
    if len(decision.z) != inst.n_lines or len(decision.y) != len(inst.pses):
        raise InstanceError("decision dimensions do not match instance")
    a_line = annualization_factor(inst.discount_rate, inst.line_lifetime_years)
    a_pses = annualization_factor(inst.discount_rate, inst.pses_lifetime_years)
    total = 0.0
    for k, built in enumerate(decision.z):
        if built:
            spec = inst.lines[k]
            total += a_line * spec.build_cost + spec.salt_cost
    for k, built in enumerate(decision.y):
        if built:
            spec = inst.pses[k]
            cost = spec.cost if station_cost_override is None else station_cost_override
            total += a_pses * cost + spec.salt_coeff * cost
    return total


def plan_subsidy(decision: PlanningDecision, inst: NetworkInstance) -> float:
    """Total annual subsidy credit for built stations (non-negative)."""
    return sum(inst.pses[k].subsidy_per_year for k in decision.built_stations())


# -- loading and validation ---------------------------------------------------


def load_instance(path) -> NetworkInstance:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: invalid JSON ({exc})") from exc
    return instance_from_dict(data, name=data.get("name", path.stem))


def instance_from_dict(data: dict, name: str = "instance") -> NetworkInstance:
    try:
        return _build(data, name)
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"{name}: malformed instance ({exc!r})") from exc


def _build(data: dict, name: str) -> NetworkInstance:
    horizon = data["horizon"]
    t_count = int(horizon["intervals"])
    finance = data["finance"]
    voltage = data["voltage"]

    nodes = data["nodes"]
    n = len(nodes)
    subs = tuple(i for i, nd in enumerate(nodes) if nd.get("is_substation"))

    def node_profile(key):
        return np.array([_profile(nd.get(key, 0.0), t_count, f"node {i}.{key}")
                         for i, nd in enumerate(nodes)])

    lines = tuple(
        LineSpec(int(ln["from"]), int(ln["to"]), float(ln["r_ohm"]),
                 float(ln["x_ohm"]), float(ln["smax_mva"]),
                 float(ln.get("length_km", 1.0)),
                 float(ln.get("cost_per_km", 0.0)),
                 float(ln.get("salt_coeff", 0.0)))
        for ln in data["lines"])

    areas = tuple(
        AreaSpec(a.get("name", f"area{k}"), tuple(int(i) for i in a["nodes"]),
                 float(a.get("carbon_price_per_t", 0.0)),
                 int(a.get("pses_min", 0)), int(a.get("pses_max", 10**9)))
        for k, a in enumerate(data.get("areas", [])))

    pi0 = np.asarray(data["uncertainty"]["pi0"], dtype=float)
    n_scen = len(pi0)

    pses = []
    for p in data.get("pses", []):
        ess = None
        if p.get("ess"):
            e = p["ess"]
            ess = EssSpec(float(e["p_ch_max_mw"]), float(e["p_dch_max_mw"]),
                          float(e.get("e_min_mwh", 0.0)), float(e["e_max_mwh"]),
                          float(e["mu_ch"]), float(e["mu_dch"]),
                          float(e.get("e_initial_mwh", e.get("e_min_mwh", 0.0))))
        ev = np.array([_profile(row, t_count, "pses.ev_mw")
                       for row in p["ev_mw"]])
        if ev.shape[0] != n_scen:
            raise InstanceError(f"pses at node {p['node']}: ev_mw must have "
                                f"{n_scen} scenario rows, got {ev.shape[0]}")
        pses.append(PsesSpec(
            int(p["node"]), float(p["cost"]), float(p.get("salt_coeff", 0.0)),
            float(p.get("subsidy_per_year", 0.0)),
            _profile(p.get("pv_cap_mw", 0.0), t_count, "pses.pv_cap_mw"),
            _profile(p.get("pv_dev_down_mw", 0.0), t_count, "pses.pv_dev_down_mw"),
            ev, ess, bool(p.get("terminal", False))))

    units = data["units"]

    def unit(spec):
        return UnitSpec(_profile(spec["cap_mw"], t_count, "unit.cap_mw"),
                        _profile(spec["price_per_mwh"], t_count, "unit.price"),
                        float(spec["intensity_t_per_mwh"]))

    unc = data["uncertainty"]
    sub = data["substation"]
    return NetworkInstance(
        name=name,
        t_count=t_count,
        hours_per_year=float(horizon.get("hours_per_year", 8760.0)),
        discount_rate=float(finance["discount_rate"]),
        line_lifetime_years=int(finance["line_lifetime_years"]),
        pses_lifetime_years=int(finance["pses_lifetime_years"]),
        vmin_pu=float(voltage["vmin_pu"]),
        vmax_pu=float(voltage["vmax_pu"]),
        v_base_kv=float(voltage["v_base_kv"]),
        substation_nodes=subs,
        p_load_mw=node_profile("p_load_mw"),
        q_load_mvar=node_profile("q_load_mvar"),
        dp_down_mw=node_profile("dp_down_mw"),
        dp_up_mw=node_profile("dp_up_mw"),
        dq_down_mvar=node_profile("dq_down_mvar"),
        dq_up_mvar=node_profile("dq_up_mvar"),
        lines=lines,
        areas=areas,
        pses=tuple(pses),
        thermal=unit(units["thermal"]),
        tidal=unit(units["tidal"]),
        tou_price_per_mwh=_profile(data["tariffs"]["tou_price_per_mwh"],
                                   t_count, "tariffs.tou_price_per_mwh"),
        sub_p_max_mw=float(sub["p_max_mw"]),
        sub_q_max_mvar=float(sub["q_max_mvar"]),
        alpha1=float(unc["alpha1"]),
        alpha_inf=float(unc["alpha_inf"]),
        sigma2=float(unc.get("sigma2", 0.0)),
        pi0=pi0,
        conventional_station_cost=float(data.get("conventional_station_cost", 0.0)),
        per_interval_intensity=bool(data.get("per_interval_intensity", False)),
        raw=data,
    )


def validate_instance(inst: NetworkInstance) -> list[str]:
    """Diagnostics list; empty means the instance is well-formed."""
    out = []
    n = inst.n_nodes
    if not inst.substation_nodes:
        out.append("no substation node declared")
    for k, ln in enumerate(inst.lines):
        if not (0 <= ln.from_node < n and 0 <= ln.to_node < n):
            out.append(f"line {k}: endpoint out of range")
        if ln.from_node == ln.to_node:
            out.append(f"line {k}: self loop")
        if ln.r_ohm <= 0:
            out.append(f"line {k}: r_ohm must be > 0")
        if ln.x_ohm <= 0:
            out.append(f"line {k}: x_ohm must be > 0")
        if ln.smax_mva <= 0:
            out.append(f"line {k}: smax_mva must be > 0")
    if not (0.0 < inst.discount_rate < 1.0):
        out.append("finance: discount rate must be in (0,1)")
    if inst.line_lifetime_years < 1 or inst.pses_lifetime_years < 1:
        out.append("finance: lifetimes must be >= 1 year")
    if not (inst.vmin_pu < inst.vmax_pu):
        out.append("voltage: vmin_pu must be strictly below vmax_pu")
    if inst.v_base_kv <= 0:
        out.append("voltage: v_base_kv must be > 0")
    # Areas partition the non-substation nodes.
    non_sub = set(inst.non_substation_nodes())
    seen: set[int] = set()
    for a in inst.areas:
        for i in a.nodes:
            if i in seen:
                out.append(f"area {a.name}: node {i} appears in multiple areas")
            if i not in non_sub:
                out.append(f"area {a.name}: node {i} is not a non-substation node")
            seen.add(i)
    if inst.areas and seen != non_sub:
        missing = sorted(non_sub - seen)
        if missing:
            out.append(f"areas do not cover nodes {missing}")
    if sum(a.pses_min for a in inst.areas) > len(inst.pses):
        out.append("sum of per-area minimum station counts exceeds candidates")
    for p in inst.pses:
        if not (0 <= p.node < n):
            out.append(f"pses: node {p.node} out of range")
        if p.node in inst.substation_nodes:
            out.append(f"pses: node {p.node} is a substation")
        e = p.ess
        if e is not None:
            if not (0 < e.mu_ch <= 1 and 0 < e.mu_dch <= 1):
                out.append(f"pses node {p.node}: efficiencies must be in (0,1]")
            elif not (e.mu_ch * e.mu_dch < 1):
                out.append(f"pses node {p.node}: round-trip efficiency must be < 1")
            if not (e.e_min_mwh <= e.e_initial_mwh <= e.e_max_mwh):
                out.append(f"pses node {p.node}: initial energy outside bounds")
            if e.p_ch_max_mw < 0 or e.p_dch_max_mw < 0:
                out.append(f"pses node {p.node}: negative power bound")
    if abs(float(inst.pi0.sum()) - 1.0) > 1e-9 or np.any(inst.pi0 < 0):
        out.append("uncertainty: pi0 must be a probability vector")
    if not (0 < inst.alpha1 < 1 and 0 < inst.alpha_inf < 1):
        out.append("uncertainty: confidence levels must be in (0,1)")
    for arr, label in ((inst.dp_down_mw, "dp_down_mw"), (inst.dp_up_mw, "dp_up_mw"),
                       (inst.dq_down_mvar, "dq_down_mvar"), (inst.dq_up_mvar, "dq_up_mvar")):
        if np.any(arr < 0):
            out.append(f"uncertainty: {label} must be non-negative")
    # Load coverage: the substation plus local generation must be able to
    # feed the worst-case total load (no shedding is modeled downstream).
    worst_p = (inst.p_load_mw + inst.dp_up_mw).sum(axis=0)
    ev_worst = np.zeros(inst.t_count)
    for p in inst.pses:
        ev_worst += p.ev_mw.max(axis=0)
    if np.any(worst_p + ev_worst > inst.sub_p_max_mw + sum(
            p.ess.p_dch_max_mw if p.ess else 0.0 for p in inst.pses) + 1e-9):
        out.append("substation capacity cannot cover worst-case load "
                   "(recourse infeasibility is not modeled)")
    return out
