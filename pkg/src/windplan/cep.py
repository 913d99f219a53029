"""Capacity expansion planning model.

Builds a joint sizing-and-operation linear program over a bus network:
new capacity at sited renewable locations, bus-level technologies
(dispatchable, non-sited renewable, storage) and transmission corridors is
chosen together with the full dispatch so that demand is met at minimum
annualised cost, subject to a system-wide CO2 budget and a per-bus
planning-reserve adequacy requirement.

Conventions
-----------
* Capacity variables are *additions*; operational limits apply to
  ``legacy + addition``.  Technologies without investment cost data are
  frozen at their legacy capacity (the addition is fixed to zero).
* Period weights ``weight_hours`` convert power flows into energy for
  operating costs, emissions and the storage recursion alike.
* Line flow is split into two non-negative directed parts; the variable
  O&M applies to their sum, so at any optimum with non-negative O&M one
  side is zero.
* The storage state of charge is cyclic by default (the first period links
  back to the last); ``storage_cyclic=False`` leaves the initial state
  free inside its bounds instead.
* Storage placements may carry an exogenous energy inflow (reservoir
  hydro).  The inflow enters the state recursion directly and a free
  non-negative spill variable keeps the model feasible when inflows exceed
  what the reservoir can absorb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from windplan.lp import CanonicalLp, LpBuilder, LpSolution
from windplan.timeseries import TimeSeries

RES = "res"
DISPATCHABLE = "dispatchable"
STORAGE = "storage"
_KINDS = (RES, DISPATCHABLE, STORAGE)


class SolverStatusError(RuntimeError):
    """Raised when a non-optimal LP status reaches the decoder."""

    def __init__(self, status: str):
        super().__init__(f"solver returned status {status!r}")
        self.status = status


def annualize(overnight_cost: float, lifetime_years: float, discount_rate: float) -> float:
    """Annualised investment cost of one unit of capacity.

    Standard annuity: ``cost * rate / (1 - (1 + rate)**-lifetime)``; a zero
    rate degenerates to straight-line ``cost / lifetime``.
    """
    if lifetime_years <= 0:
        raise ValueError("lifetime must be positive")
    if discount_rate < 0:
        raise ValueError("discount rate must be non-negative")
    if discount_rate == 0:
        return overnight_cost / lifetime_years
    return overnight_cost * discount_rate / (1.0 - (1.0 + discount_rate) ** (-lifetime_years))


def with_connection_cost(capex: float, share: float = 0.2) -> float:
    """Offshore grid-connection adder: a fixed share of the capital cost,
    applied before annualisation."""
    return capex * (1.0 + share)


def capacity_credit(cf: TimeSeries, demand: TimeSeries, top_fraction: float = 0.05) -> float:
    """Mean capacity factor over the highest-demand periods.

    The top set holds ``ceil(top_fraction * T)`` periods; demand ties break
    toward the earlier period.
    """
    if len(cf) != len(demand):
        raise ValueError("capacity-factor and demand series lengths differ")
    if not 0 < top_fraction <= 1:
        raise ValueError("top fraction must lie in (0, 1]")
    t = len(demand)
    m = math.ceil(top_fraction * t)
    order = np.lexsort((np.arange(t), -demand.values))
    return float(cf.values[order[:m]].mean())


# ---------------------------------------------------------------------------
# Data model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Technology:
    """Techno-economic description shared by all placements of one technology.

    ``capex`` of ``None`` marks a technology whose installed capacity stays
    fixed; its capacity addition variable is pinned to zero.  ``annuity``
    may be given directly to bypass :func:`annualize`.  Costs are per MW
    (or per MWh for the storage energy component); ``fuel_cost`` is per
    thermal MWh and is divided by the efficiency inside
    :attr:`marginal_cost`.
    """

    id: str
    kind: str
    capex: float | None = None
    lifetime_years: float | None = None
    annuity: float | None = None
    fixed_om: float = 0.0
    variable_om: float = 0.0
    fuel_cost: float = 0.0
    efficiency: float = 1.0
    co2_per_mwh_th: float = 0.0
    ramp_up: float = 1.0
    ramp_down: float = 1.0
    must_run: float = 0.0
    capacity_credit: float | str = 0.0
    # storage-only parameters
    charge_ratio: float = 1.0
    eta_charge: float = 1.0
    eta_discharge: float = 1.0
    eta_self: float = 1.0
    min_soc: float = 0.0
    energy_capex: float | None = None
    energy_annuity: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"technology {self.id}: unknown kind {self.kind!r}")
        for label, eta in (("efficiency", self.efficiency), ("eta_charge", self.eta_charge),
                           ("eta_discharge", self.eta_discharge), ("eta_self", self.eta_self)):
            if not 0 < eta <= 1:
                raise ValueError(f"technology {self.id}: {label} must lie in (0, 1]")
        for label, frac in (("ramp_up", self.ramp_up), ("ramp_down", self.ramp_down),
                            ("must_run", self.must_run), ("min_soc", self.min_soc)):
            if not 0 <= frac <= 1:
                raise ValueError(f"technology {self.id}: {label} must lie in [0, 1]")
        if self.charge_ratio < 0:
            raise ValueError(f"technology {self.id}: charge ratio must be non-negative")

    @property
    def marginal_cost(self) -> float:
        return self.variable_om + self.fuel_cost / self.efficiency

    @property
    def co2_per_mwh_elec(self) -> float:
        return self.co2_per_mwh_th / self.efficiency

    def power_annuity(self, discount_rate: float) -> float | None:
        if self.annuity is not None:
            return self.annuity
        if self.capex is None:
            return None
        if self.lifetime_years is None:
            raise ValueError(f"technology {self.id}: capex given without lifetime")
        return annualize(self.capex, self.lifetime_years, discount_rate)

    def storage_energy_annuity(self, discount_rate: float) -> float | None:
        if self.energy_annuity is not None:
            return self.energy_annuity
        if self.energy_capex is None:
            return None
        if self.lifetime_years is None:
            raise ValueError(f"technology {self.id}: energy capex given without lifetime")
        return annualize(self.energy_capex, self.lifetime_years, discount_rate)


@dataclass(frozen=True)
class Bus:
    """Electrical node.  ``reserve_margin`` of ``None`` disables the
    adequacy requirement at this bus; a number (possibly 0) requires local
    firm capacity above peak demand by that fraction."""

    id: str
    demand: TimeSeries
    reserve_margin: float | None = None

    def __post_init__(self) -> None:
        if self.reserve_margin is not None and self.reserve_margin < 0:
            raise ValueError(f"bus {self.id}: reserve margin must be non-negative")

    @property
    def peak_demand(self) -> float:
        return float(self.demand.values.max())


@dataclass(frozen=True)
class Placement:
    """One technology instance attached to one bus."""

    bus: str
    tech: str
    legacy_MW: float = 0.0
    potential_MW: float | None = None
    availability: TimeSeries | None = None
    inflow: TimeSeries | None = None
    legacy_energy_MWh: float = 0.0
    potential_energy_MWh: float | None = None

    def __post_init__(self) -> None:
        if self.legacy_MW < 0 or self.legacy_energy_MWh < 0:
            raise ValueError(f"{self.bus}/{self.tech}: legacy capacities must be non-negative")
        if self.potential_MW is not None and self.potential_MW < self.legacy_MW:
            raise ValueError(f"{self.bus}/{self.tech}: potential below legacy capacity")
        if self.potential_energy_MWh is not None and self.potential_energy_MWh < self.legacy_energy_MWh:
            raise ValueError(f"{self.bus}/{self.tech}: energy potential below legacy energy")


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    legacy_MW: float = 0.0
    potential_MW: float | None = None
    capex: float | None = None
    lifetime_years: float | None = None
    annuity: float | None = None
    fixed_om: float = 0.0
    variable_om: float = 0.0
    kind: str = "AC"
    length_km: float | None = None
    efficiency_per_1000km: float = 1.0

    def __post_init__(self) -> None:
        if self.from_bus == self.to_bus:
            raise ValueError(f"line {self.id}: endpoints coincide")
        if self.potential_MW is not None and self.potential_MW < self.legacy_MW:
            raise ValueError(f"line {self.id}: potential below legacy capacity")

    def power_annuity(self, discount_rate: float) -> float | None:
        if self.annuity is not None:
            return self.annuity
        if self.capex is None:
            return None
        if self.lifetime_years is None:
            raise ValueError(f"line {self.id}: capex given without lifetime")
        return annualize(self.capex, self.lifetime_years, discount_rate)

    def delivery_efficiency(self, apply_losses: bool) -> float:
        """Fraction of sent power arriving at the receiving end.

        Losses are linear in length at the per-1000-km rate; the lossless
        transport model is the default.
        """
        if not apply_losses or self.length_km is None:
            return 1.0
        loss = (1.0 - self.efficiency_per_1000km) * self.length_km / 1000.0
        return max(0.0, 1.0 - loss)


@dataclass(frozen=True)
class SitedAsset:
    """Renewable site fixed by the siting stage, to be sized here."""

    id: str
    bus: str
    legacy_MW: float
    potential_MW: float
    cf: TimeSeries

    def __post_init__(self) -> None:
        if not 0 <= self.legacy_MW <= self.potential_MW:
            raise ValueError(f"site {self.id}: need 0 <= legacy <= potential")


@dataclass(frozen=True)
class CepInstance:
    buses: tuple[Bus, ...]
    technologies: tuple[Technology, ...]
    placements: tuple[Placement, ...]
    lines: tuple[Line, ...] = ()
    sited: tuple[SitedAsset, ...] = ()
    sited_technology: str | None = None
    co2_budget: float | None = None
    shed_penalty: float = 1000.0
    weight_hours: float = 1.0
    firm_technologies: frozenset[str] = frozenset()
    discount_rate: float = 0.07
    storage_cyclic: bool = True
    apply_line_losses: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "technologies", tuple(self.technologies))
        object.__setattr__(self, "placements", tuple(self.placements))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "sited", tuple(self.sited))
        object.__setattr__(self, "firm_technologies", frozenset(self.firm_technologies))
        if not self.buses:
            raise ValueError("instance needs at least one bus")
        if self.co2_budget is not None and self.co2_budget < 0:
            raise ValueError("CO2 budget must be non-negative")
        if self.weight_hours <= 0:
            raise ValueError("period weight must be positive")
        bus_ids = {b.id for b in self.buses}
        if len(bus_ids) != len(self.buses):
            raise ValueError("duplicate bus id")
        tech_ids = {t.id for t in self.technologies}
        if len(tech_ids) != len(self.technologies):
            raise ValueError("duplicate technology id")
        t = self.n_periods
        for bus in self.buses:
            if len(bus.demand) != t:
                raise ValueError(f"bus {bus.id}: demand length differs")
        for pl in self.placements:
            if pl.bus not in bus_ids:
                raise ValueError(f"placement references unknown bus {pl.bus!r}")
            if pl.tech not in tech_ids:
                raise ValueError(f"placement references unknown technology {pl.tech!r}")
            for series in (pl.availability, pl.inflow):
                if series is not None and len(series) != t:
                    raise ValueError(f"{pl.bus}/{pl.tech}: series length differs")
        for asset in self.sited:
            if asset.bus not in bus_ids:
                raise ValueError(f"site {asset.id} references unknown bus {asset.bus!r}")
            if len(asset.cf) != t:
                raise ValueError(f"site {asset.id}: series length differs")
        if self.sited and self.sited_technology is None:
            raise ValueError("sited assets present but no sited technology named")
        if self.sited_technology is not None:
            tech = self.technology(self.sited_technology)
            if tech.kind != RES:
                raise ValueError("the sited technology must be of kind 'res'")
        for line in self.lines:
            if line.from_bus not in bus_ids or line.to_bus not in bus_ids:
                raise ValueError(f"line {line.id} references an unknown bus")

    @property
    def n_periods(self) -> int:
        return len(self.buses[0].demand)

    def technology(self, tech_id: str) -> Technology:
        for tech in self.technologies:
            if tech.id == tech_id:
                return tech
        raise KeyError(tech_id)

    def bus(self, bus_id: str) -> Bus:
        for bus in self.buses:
            if bus.id == bus_id:
                return bus
        raise KeyError(bus_id)


@dataclass
class CepIndex:
    """Variable layout of a built instance (indices into the LP columns)."""

    site_K: dict = field(default_factory=dict)
    tech_K: dict = field(default_factory=dict)
    storage_S: dict = field(default_factory=dict)
    line_K: dict = field(default_factory=dict)
    site_p: dict = field(default_factory=dict)
    gen_p: dict = field(default_factory=dict)
    charge: dict = field(default_factory=dict)
    discharge: dict = field(default_factory=dict)
    soc: dict = field(default_factory=dict)
    spill: dict = field(default_factory=dict)
    flow_fw: dict = field(default_factory=dict)
    flow_bw: dict = field(default_factory=dict)
    ens: dict = field(default_factory=dict)
    site_credit: dict = field(default_factory=dict)
    res_credit: dict = field(default_factory=dict)


def _availability_values(pl: Placement, t: int) -> np.ndarray:
    if pl.availability is None:
        return np.ones(t)
    return pl.availability.values


def _resolve_credit(tech: Technology, series: TimeSeries | None, bus: Bus, t: int) -> float:
    if tech.capacity_credit == "computed":
        cf = series if series is not None else TimeSeries(np.ones(t), bus.demand.resolution_hours)
        return capacity_credit(cf, bus.demand)
    return float(tech.capacity_credit)


def build_lp(instance: CepInstance) -> tuple[CanonicalLp, CepIndex]:
    """Compile an instance into the canonical LP.

    The emission accounting variables are eliminated by substituting the
    per-period definition straight into the budget row.  Rows that are
    vacuous by construction (unit ramp rates, zero must-run levels, zero
    minimum states of charge, non-positive adequacy requirements) are not
    emitted.
    """
    t_len = instance.n_periods
    omega = instance.weight_hours
    builder = LpBuilder(name="cep")
    ix = CepIndex()

    def addition_bound(legacy: float, potential: float | None, expandable: bool) -> float:
        if not expandable:
            return 0.0
        if potential is None:
            return math.inf
        return potential - legacy

    sited_tech = (
        instance.technology(instance.sited_technology) if instance.sited_technology else None
    )

    # -- capacity variables -------------------------------------------------
    for asset in instance.sited:
        annuity = sited_tech.power_annuity(instance.discount_rate)
        cost = (annuity or 0.0) + sited_tech.fixed_om
        ix.site_K[asset.id] = builder.add_var(
            f"K|site|{asset.id}", 0.0,
            addition_bound(asset.legacy_MW, asset.potential_MW, annuity is not None),
            objective=cost,
        )
        ix.site_credit[asset.id] = _resolve_credit(
            sited_tech, asset.cf, instance.bus(asset.bus), t_len
        )
    for pl in instance.placements:
        tech = instance.technology(pl.tech)
        annuity = tech.power_annuity(instance.discount_rate)
        ix.tech_K[(pl.bus, pl.tech)] = builder.add_var(
            f"K|{pl.bus}|{pl.tech}", 0.0,
            addition_bound(pl.legacy_MW, pl.potential_MW, annuity is not None),
            objective=(annuity or 0.0) + tech.fixed_om,
        )
        if tech.kind == STORAGE:
            energy_annuity = tech.storage_energy_annuity(instance.discount_rate)
            ix.storage_S[(pl.bus, pl.tech)] = builder.add_var(
                f"S|{pl.bus}|{pl.tech}", 0.0,
                addition_bound(pl.legacy_energy_MWh, pl.potential_energy_MWh,
                               energy_annuity is not None),
                objective=energy_annuity or 0.0,
            )
        if tech.kind == RES:
            ix.res_credit[(pl.bus, pl.tech)] = _resolve_credit(
                tech, pl.availability, instance.bus(pl.bus), t_len
            )
    for line in instance.lines:
        annuity = line.power_annuity(instance.discount_rate)
        ix.line_K[line.id] = builder.add_var(
            f"K|line|{line.id}", 0.0,
            addition_bound(line.legacy_MW, line.potential_MW, annuity is not None),
            objective=(annuity or 0.0) + line.fixed_om,
        )

    # -- dispatch variables --------------------------------------------------
    for asset in instance.sited:
        ix.site_p[asset.id] = np.array([
            builder.add_var(f"p|site|{asset.id}|{t}", 0.0, math.inf,
                            objective=omega * sited_tech.marginal_cost)
            for t in range(t_len)
        ])
    for pl in instance.placements:
        tech = instance.technology(pl.tech)
        key = (pl.bus, pl.tech)
        if tech.kind in (RES, DISPATCHABLE):
            ix.gen_p[key] = np.array([
                builder.add_var(f"p|{pl.bus}|{pl.tech}|{t}", 0.0, math.inf,
                                objective=omega * tech.marginal_cost)
                for t in range(t_len)
            ])
        else:
            ix.charge[key] = np.array([
                builder.add_var(f"pc|{pl.bus}|{pl.tech}|{t}", 0.0, math.inf,
                                objective=omega * tech.marginal_cost)
                for t in range(t_len)
            ])
            ix.discharge[key] = np.array([
                builder.add_var(f"pd|{pl.bus}|{pl.tech}|{t}", 0.0, math.inf,
                                objective=omega * tech.marginal_cost)
                for t in range(t_len)
            ])
            ix.soc[key] = np.array([
                builder.add_var(f"e|{pl.bus}|{pl.tech}|{t}", 0.0, math.inf)
                for t in range(t_len)
            ])
            if pl.inflow is not None:
                ix.spill[key] = np.array([
                    builder.add_var(f"spill|{pl.bus}|{pl.tech}|{t}", 0.0, math.inf)
                    for t in range(t_len)
                ])
    for line in instance.lines:
        ix.flow_fw[line.id] = np.array([
            builder.add_var(f"f+|{line.id}|{t}", 0.0, math.inf,
                            objective=omega * line.variable_om)
            for t in range(t_len)
        ])
        ix.flow_bw[line.id] = np.array([
            builder.add_var(f"f-|{line.id}|{t}", 0.0, math.inf,
                            objective=omega * line.variable_om)
            for t in range(t_len)
        ])
    for bus in instance.buses:
        ix.ens[bus.id] = np.array([
            builder.add_var(f"ens|{bus.id}|{t}", 0.0, math.inf,
                            objective=omega * instance.shed_penalty)
            for t in range(t_len)
        ])

    # -- energy balance -------------------------------------------------------
    for bus in instance.buses:
        for t in range(t_len):
            row = builder.add_row(f"bal|{bus.id}|{t}", "=", float(bus.demand.values[t]))
            for asset in instance.sited:
                if asset.bus == bus.id:
                    builder.add_entry(row, ix.site_p[asset.id][t], 1.0)
            for key, p_vars in ix.gen_p.items():
                if key[0] == bus.id:
                    builder.add_entry(row, p_vars[t], 1.0)
            for key in ix.discharge:
                if key[0] == bus.id:
                    builder.add_entry(row, ix.discharge[key][t], 1.0)
                    builder.add_entry(row, ix.charge[key][t], -1.0)
            for line in instance.lines:
                eff = line.delivery_efficiency(instance.apply_line_losses)
                if line.from_bus == bus.id:
                    builder.add_entry(row, ix.flow_fw[line.id][t], -1.0)
                    builder.add_entry(row, ix.flow_bw[line.id][t], eff)
                elif line.to_bus == bus.id:
                    builder.add_entry(row, ix.flow_fw[line.id][t], eff)
                    builder.add_entry(row, ix.flow_bw[line.id][t], -1.0)
            builder.add_entry(row, ix.ens[bus.id][t], 1.0)

    # -- sited RES operation ---------------------------------------------------
    for asset in instance.sited:
        cf = asset.cf.values
        for t in range(t_len):
            row = builder.add_row(f"avail|site|{asset.id}|{t}", "<", cf[t] * asset.legacy_MW)
            builder.add_entry(row, ix.site_p[asset.id][t], 1.0)
            if cf[t] != 0.0:
                builder.add_entry(row, ix.site_K[asset.id], -cf[t])

    # -- bus technology operation ----------------------------------------------
    for pl in instance.placements:
        tech = instance.technology(pl.tech)
        key = (pl.bus, pl.tech)
        if tech.kind in (RES, DISPATCHABLE):
            pi = _availability_values(pl, t_len)
            k_var = ix.tech_K[key]
            p_vars = ix.gen_p[key]
            for t in range(t_len):
                row = builder.add_row(f"avail|{pl.bus}|{pl.tech}|{t}", "<", pi[t] * pl.legacy_MW)
                builder.add_entry(row, p_vars[t], 1.0)
                if pi[t] != 0.0:
                    builder.add_entry(row, k_var, -pi[t])
            if tech.kind == DISPATCHABLE:
                if tech.ramp_up < 1.0:
                    for t in range(1, t_len):
                        row = builder.add_row(f"rampu|{pl.bus}|{pl.tech}|{t}", "<",
                                              tech.ramp_up * pl.legacy_MW)
                        builder.add_entry(row, p_vars[t], 1.0)
                        builder.add_entry(row, p_vars[t - 1], -1.0)
                        builder.add_entry(row, k_var, -tech.ramp_up)
                if tech.ramp_down < 1.0:
                    for t in range(1, t_len):
                        row = builder.add_row(f"rampd|{pl.bus}|{pl.tech}|{t}", "<",
                                              tech.ramp_down * pl.legacy_MW)
                        builder.add_entry(row, p_vars[t], -1.0)
                        builder.add_entry(row, p_vars[t - 1], 1.0)
                        builder.add_entry(row, k_var, -tech.ramp_down)
                if tech.must_run > 0.0:
                    for t in range(t_len):
                        row = builder.add_row(f"mustrun|{pl.bus}|{pl.tech}|{t}", "<",
                                              -tech.must_run * pl.legacy_MW)
                        builder.add_entry(row, k_var, tech.must_run)
                        builder.add_entry(row, p_vars[t], -1.0)
        else:
            k_var = ix.tech_K[key]
            s_var = ix.storage_S[key]
            for t in range(t_len):
                row = builder.add_row(f"dis|{pl.bus}|{pl.tech}|{t}", "<", pl.legacy_MW)
                builder.add_entry(row, ix.discharge[key][t], 1.0)
                builder.add_entry(row, k_var, -1.0)
                row = builder.add_row(f"chg|{pl.bus}|{pl.tech}|{t}", "<",
                                      tech.charge_ratio * pl.legacy_MW)
                builder.add_entry(row, ix.charge[key][t], 1.0)
                if tech.charge_ratio != 0.0:
                    builder.add_entry(row, k_var, -tech.charge_ratio)
            inflow = pl.inflow.values if pl.inflow is not None else None
            for t in range(t_len):
                prev = (t - 1) % t_len
                if t == 0 and not instance.storage_cyclic:
                    continue  # initial state free inside its bounds
                rhs = float(inflow[t]) if inflow is not None else 0.0
                row = builder.add_row(f"soc|{pl.bus}|{pl.tech}|{t}", "=", rhs)
                builder.add_entry(row, ix.soc[key][t], 1.0)
                builder.add_entry(row, ix.soc[key][prev], -tech.eta_self)
                builder.add_entry(row, ix.charge[key][t], -omega * tech.eta_charge)
                builder.add_entry(row, ix.discharge[key][t], omega / tech.eta_discharge)
                if inflow is not None:
                    builder.add_entry(row, ix.spill[key][t], 1.0)
            for t in range(t_len):
                row = builder.add_row(f"socmax|{pl.bus}|{pl.tech}|{t}", "<", pl.legacy_energy_MWh)
                builder.add_entry(row, ix.soc[key][t], 1.0)
                builder.add_entry(row, s_var, -1.0)
                if tech.min_soc > 0.0:
                    row = builder.add_row(f"socmin|{pl.bus}|{pl.tech}|{t}", "<",
                                          -tech.min_soc * pl.legacy_energy_MWh)
                    builder.add_entry(row, s_var, tech.min_soc)
                    builder.add_entry(row, ix.soc[key][t], -1.0)

    # -- transmission capacity ---------------------------------------------------
    for line in instance.lines:
        for t in range(t_len):
            row = builder.add_row(f"cap|{line.id}|{t}", "<", line.legacy_MW)
            builder.add_entry(row, ix.flow_fw[line.id][t], 1.0)
            builder.add_entry(row, ix.flow_bw[line.id][t], 1.0)
            builder.add_entry(row, ix.line_K[line.id], -1.0)

    # -- CO2 budget ---------------------------------------------------------------
    if instance.co2_budget is not None:
        row = builder.add_row("co2", "<", instance.co2_budget)
        for pl in instance.placements:
            tech = instance.technology(pl.tech)
            if tech.kind in (RES, DISPATCHABLE) and tech.co2_per_mwh_elec > 0.0:
                rate = omega * tech.co2_per_mwh_elec
                for t in range(t_len):
                    builder.add_entry(row, ix.gen_p[(pl.bus, pl.tech)][t], rate)

    # -- adequacy -------------------------------------------------------------------
    for bus in instance.buses:
        if bus.reserve_margin is None:
            continue
        firm_legacy = 0.0
        terms: list[tuple[int, float]] = []
        for pl in instance.placements:
            if pl.bus != bus.id:
                continue
            tech = instance.technology(pl.tech)
            if tech.kind == RES:
                credit = ix.res_credit[(pl.bus, pl.tech)]
                if credit > 0.0:
                    firm_legacy += credit * pl.legacy_MW
                    terms.append((ix.tech_K[(pl.bus, pl.tech)], credit))
            elif tech.id in instance.firm_technologies:
                firm_legacy += pl.legacy_MW
                terms.append((ix.tech_K[(pl.bus, pl.tech)], 1.0))
        for asset in instance.sited:
            if asset.bus != bus.id:
                continue
            credit = ix.site_credit[asset.id]
            if credit > 0.0:
                firm_legacy += credit * asset.legacy_MW
                terms.append((ix.site_K[asset.id], credit))
        required = (1.0 + bus.reserve_margin) * bus.peak_demand - firm_legacy
        if required <= 0.0:
            continue  # legacy firm capacity already meets the requirement
        row = builder.add_row(f"adequacy|{bus.id}", ">", required)
        for var, coeff in terms:
            builder.add_entry(row, var, coeff)

    return builder.build(), ix


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CepSolution:
    """Decoded system design and operation with its cost breakdown."""

    objective: float
    site_capacity_new: dict
    site_capacity_total: dict
    tech_capacity_new: dict
    tech_capacity_total: dict
    storage_energy_new: dict
    storage_energy_total: dict
    line_capacity_new: dict
    line_capacity_total: dict
    site_generation: dict
    generation: dict
    charge: dict
    discharge: dict
    soc: dict
    spill: dict
    flow_fw: dict
    flow_bw: dict
    ens: dict
    curtailment: dict
    cost_breakdown: dict
    emissions_t: float
    served_MWh: float
    shed_MWh: float


def decode_solution(solution: LpSolution, index: CepIndex, instance: CepInstance) -> CepSolution:
    """Map an optimal LP solution back onto the data model.

    Recomputes the annualised system cost from the decoded quantities and
    checks it against the solver objective (1e-6 relative); any other
    status is rejected with the solver status preserved.
    """
    if solution.status != "optimal":
        raise SolverStatusError(solution.status)
    x = solution.x
    omega = instance.weight_hours
    sited_tech = (
        instance.technology(instance.sited_technology) if instance.sited_technology else None
    )

    site_new = {sid: float(x[var]) for sid, var in index.site_K.items()}
    site_total = {a.id: a.legacy_MW + site_new[a.id] for a in instance.sited}
    tech_new = {key: float(x[var]) for key, var in index.tech_K.items()}
    tech_total = {}
    storage_new = {key: float(x[var]) for key, var in index.storage_S.items()}
    storage_total = {}
    for pl in instance.placements:
        key = (pl.bus, pl.tech)
        tech_total[key] = pl.legacy_MW + tech_new[key]
        if key in storage_new:
            storage_total[key] = pl.legacy_energy_MWh + storage_new[key]
    line_new = {lid: float(x[var]) for lid, var in index.line_K.items()}
    line_total = {ln.id: ln.legacy_MW + line_new[ln.id] for ln in instance.lines}

    site_gen = {sid: x[vars_] for sid, vars_ in index.site_p.items()}
    generation = {key: x[vars_] for key, vars_ in index.gen_p.items()}
    charge = {key: x[vars_] for key, vars_ in index.charge.items()}
    discharge = {key: x[vars_] for key, vars_ in index.discharge.items()}
    soc = {key: x[vars_] for key, vars_ in index.soc.items()}
    spill = {key: x[vars_] for key, vars_ in index.spill.items()}
    flow_fw = {lid: x[vars_] for lid, vars_ in index.flow_fw.items()}
    flow_bw = {lid: x[vars_] for lid, vars_ in index.flow_bw.items()}
    ens = {bid: x[vars_] for bid, vars_ in index.ens.items()}

    curtailment = {}
    for asset in instance.sited:
        ceiling = asset.cf.values * site_total[asset.id]
        curtailment[asset.id] = ceiling - site_gen[asset.id]

    invest = 0.0
    for asset in instance.sited:
        annuity = sited_tech.power_annuity(instance.discount_rate) or 0.0
        invest += (annuity + sited_tech.fixed_om) * site_new[asset.id]
    for pl in instance.placements:
        tech = instance.technology(pl.tech)
        key = (pl.bus, pl.tech)
        annuity = tech.power_annuity(instance.discount_rate) or 0.0
        invest += (annuity + tech.fixed_om) * tech_new[key]
        if tech.kind == STORAGE:
            invest += (tech.storage_energy_annuity(instance.discount_rate) or 0.0) * storage_new[key]
    for line in instance.lines:
        annuity = line.power_annuity(instance.discount_rate) or 0.0
        invest += (annuity + line.fixed_om) * line_new[line.id]

    op_generation = 0.0
    emissions = 0.0
    for asset in instance.sited:
        op_generation += omega * sited_tech.marginal_cost * float(site_gen[asset.id].sum())
    for key, series in generation.items():
        tech = instance.technology(key[1])
        op_generation += omega * tech.marginal_cost * float(series.sum())
        emissions += omega * tech.co2_per_mwh_elec * float(series.sum())
    op_storage = 0.0
    for key in charge:
        tech = instance.technology(key[1])
        op_storage += omega * tech.marginal_cost * float(charge[key].sum() + discharge[key].sum())
    op_lines = 0.0
    for line in instance.lines:
        op_lines += omega * line.variable_om * float(flow_fw[line.id].sum() + flow_bw[line.id].sum())
    shed_energy = omega * float(sum(series.sum() for series in ens.values()))
    op_shed = instance.shed_penalty * shed_energy

    recomputed = invest + op_generation + op_storage + op_lines + op_shed
    scale = max(1.0, abs(solution.objective))
    if abs(recomputed - solution.objective) > 1e-6 * scale:
        raise AssertionError(
            f"decoded cost {recomputed} disagrees with solver objective {solution.objective}"
        )

    total_demand = omega * float(sum(b.demand.values.sum() for b in instance.buses))
    return CepSolution(
        objective=float(solution.objective),
        site_capacity_new=site_new,
        site_capacity_total=site_total,
        tech_capacity_new=tech_new,
        tech_capacity_total=tech_total,
        storage_energy_new=storage_new,
        storage_energy_total=storage_total,
        line_capacity_new=line_new,
        line_capacity_total=line_total,
        site_generation=site_gen,
        generation=generation,
        charge=charge,
        discharge=discharge,
        soc=soc,
        spill=spill,
        flow_fw=flow_fw,
        flow_bw=flow_bw,
        ens=ens,
        curtailment=curtailment,
        cost_breakdown={
            "invest_and_fixed": invest,
            "variable_generation": op_generation,
            "variable_storage": op_storage,
            "variable_transmission": op_lines,
            "shedding": op_shed,
        },
        emissions_t=emissions,
        served_MWh=total_demand - shed_energy,
        shed_MWh=shed_energy,
    )
