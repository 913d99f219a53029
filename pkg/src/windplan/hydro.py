"""Hydro preprocessing from gridded runoff.

Run-of-river fleets are modelled like variable renewables: country runoff
is summed, normalised, clipped at a country-specific flood quantile and
(by default) renormalised so the clip level maps to a capacity factor of
one, mirroring a plant designed for that rated flow.  Reservoir plants get
an energy inflow series: cell runoff depth times cell area gives a volume
flow, converted to energy at unit head and rescaled by a calibrated flow
multiplier so yearly inflows match observed hydro generation.  Pumped
storage energy capacities fall back from plant data to country durations
to a six-hour default.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from windplan.timeseries import TimeSeries, empirical_quantile

WATER_DENSITY_KG_M3 = 1000.0
GRAVITY_M_S2 = 9.81
JOULES_PER_MWH = 3.6e9
DEFAULT_PHS_DURATION_H = 6.0


@dataclass(frozen=True)
class RunoffCell:
    cell_id: str
    country: str
    area_km2: float
    runoff_m: TimeSeries

    def __post_init__(self) -> None:
        if self.area_km2 <= 0:
            raise ValueError(f"cell {self.cell_id}: area must be positive")
        if np.any(self.runoff_m.values < 0):
            raise ValueError(f"cell {self.cell_id}: runoff must be non-negative")


@dataclass(frozen=True)
class RunoffGrid:
    cells: tuple[RunoffCell, ...]

    def __post_init__(self) -> None:
        cells = tuple(self.cells)
        if not cells:
            raise ValueError("runoff grid needs at least one cell")
        length = len(cells[0].runoff_m)
        for cell in cells:
            if len(cell.runoff_m) != length:
                raise ValueError(f"cell {cell.cell_id}: series length differs")
        object.__setattr__(self, "cells", cells)

    def countries(self) -> list[str]:
        return sorted({cell.country for cell in self.cells})

    def country_cells(self, country: str) -> list[RunoffCell]:
        # Fixed ascending cell-id order keeps float summation reproducible.
        cells = sorted(
            (c for c in self.cells if c.country == country), key=lambda c: c.cell_id
        )
        if not cells:
            raise ValueError(f"no runoff cells for country {country!r}")
        return cells


@dataclass(frozen=True)
class HydroCountryParams:
    """Per-country hydro fleet description (appendix-table layout)."""

    country: str
    flood_threshold: float = 0.9
    ror_capacity_MW: float = 0.0
    sto_capacity_MW: float = 0.0
    sto_energy_MWh: float = 0.0
    yearly_hydro_MWh: float = 0.0
    flow_multiplier: float | None = None
    avg_head_m: float = 1.0
    phs_power_MW: float = 0.0
    phs_energy_MWh: float | None = None
    phs_duration_h: float | None = None

    def __post_init__(self) -> None:
        if not 0 < self.flood_threshold <= 1:
            raise ValueError(f"{self.country}: flood threshold must lie in (0, 1]")
        for label, value in (
            ("ror capacity", self.ror_capacity_MW),
            ("sto capacity", self.sto_capacity_MW),
            ("sto energy", self.sto_energy_MWh),
            ("yearly hydro energy", self.yearly_hydro_MWh),
        ):
            if value < 0:
                raise ValueError(f"{self.country}: {label} must be non-negative")


@dataclass(frozen=True)
class RorResult:
    country: str
    clip_level: float
    capacity_factors: TimeSeries


def _country_runoff(grid: RunoffGrid, country: str) -> TimeSeries:
    cells = grid.country_cells(country)
    total = np.zeros(len(cells[0].runoff_m))
    for cell in cells:
        total = total + cell.runoff_m.values
    return cells[0].runoff_m.with_values(total)


def ror_capacity_factors(
    grid: RunoffGrid,
    params: dict[str, HydroCountryParams],
    renormalize: bool = True,
) -> dict[str, RorResult]:
    """Per-country run-of-river capacity factors in [0, 1].

    Country runoff is normalised by its maximum and clipped at the flood
    quantile (linear-interpolation convention).  With ``renormalize`` the
    clipped series is divided by the clip level so the design flow reaches
    a capacity factor of one; without it the raw clipped values are kept.
    Power output is the capacity factor times the installed capacity.
    """
    out: dict[str, RorResult] = {}
    for country in grid.countries():
        if country not in params:
            raise ValueError(f"no hydro parameters for country {country!r}")
        total = _country_runoff(grid, country)
        peak = float(total.values.max())
        if peak <= 0:
            raise ValueError(f"{country}: all-zero runoff, normalisation undefined")
        normalized = total.values / peak
        clip = empirical_quantile(normalized, params[country].flood_threshold)
        clipped = np.minimum(normalized, clip)
        if renormalize and clip > 0:
            clipped = clipped / clip
        out[country] = RorResult(country, clip, total.with_values(clipped))
    return out


def sto_inflows(
    grid: RunoffGrid,
    params: dict[str, HydroCountryParams],
) -> dict[str, TimeSeries]:
    """Reservoir inflow energy series (MWh per period) per country.

    Runoff depth per period times cell area is a volume per period; at the
    country-average head this carries ``volume * rho * g * head`` joules
    (1 MWh = 3.6e9 J).  The country flow multiplier then scales unit-head
    energy onto observed generation; it must be given or calibrated first.
    """
    out: dict[str, TimeSeries] = {}
    for country in grid.countries():
        if country not in params:
            raise ValueError(f"no hydro parameters for country {country!r}")
        p = params[country]
        if p.flow_multiplier is None:
            raise ValueError(
                f"{country}: flow multiplier missing; supply it or run "
                "calibrate_flow_multiplier first"
            )
        initial = unit_head_inflow(grid, country, p.avg_head_m)
        out[country] = initial.with_values(initial.values * p.flow_multiplier)
    return out


def unit_head_inflow(grid: RunoffGrid, country: str, avg_head_m: float = 1.0) -> TimeSeries:
    """Inflow energy at the stated head before flow-multiplier scaling."""
    cells = grid.country_cells(country)
    flow_m3 = np.zeros(len(cells[0].runoff_m))
    for cell in cells:
        flow_m3 = flow_m3 + cell.runoff_m.values * (cell.area_km2 * 1e6)
    joules = flow_m3 * WATER_DENSITY_KG_M3 * GRAVITY_M_S2 * avg_head_m
    return cells[0].runoff_m.with_values(joules / JOULES_PER_MWH)


def calibrate_flow_multiplier(
    yearly_hydro_MWh: float,
    ror_production_MWh: TimeSeries,
    unit_head_inflow_MWh: TimeSeries,
) -> float:
    """Scale factor aligning unit-head inflows with observed generation.

    Expected reservoir generation is the yearly hydro total minus the
    run-of-river production; the multiplier is its ratio to the integrated
    unit-head inflow.  A negative remainder degenerates to zero with a
    warning.
    """
    total_inflow = float(unit_head_inflow_MWh.values.sum())
    if total_inflow <= 0:
        raise ValueError("unit-head inflow integrates to zero; cannot calibrate")
    expected = yearly_hydro_MWh - float(ror_production_MWh.values.sum())
    if expected < 0:
        warnings.warn(
            "yearly hydro energy below run-of-river production; flow multiplier set to 0",
            stacklevel=2,
        )
        return 0.0
    return expected / total_inflow


def phs_storage(
    power_MW: float,
    plant_energy_MWh: float | None = None,
    country_duration_h: float | None = None,
    default_duration_h: float = DEFAULT_PHS_DURATION_H,
) -> float:
    """Pumped-hydro energy capacity with the documented precedence:
    plant data, then country duration, then the default duration."""
    if power_MW <= 0:
        raise ValueError("plant power must be positive")
    if plant_energy_MWh is not None:
        return plant_energy_MWh
    if country_duration_h is not None:
        return power_MW * country_duration_h
    return power_MW * default_duration_h
