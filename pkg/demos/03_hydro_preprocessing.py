"""Hydro preprocessing from gridded runoff, step by step.

Shows the run-of-river normalise/clip/renormalise chain, reservoir inflow
calibration against observed yearly generation, and the pumped-storage
energy precedence.

Run:  python3 demos/03_hydro_preprocessing.py
"""

import numpy as np

from windplan.hydro import (
    HydroCountryParams, RunoffCell, RunoffGrid, calibrate_flow_multiplier,
    phs_storage, ror_capacity_factors, sto_inflows, unit_head_inflow,
)
from windplan.timeseries import TimeSeries

rng = np.random.default_rng(7)
T = 24 * 30  # one month, hourly

# Seasonal runoff with occasional flood spikes.
base = 4e-4 * (1 + 0.4 * np.sin(2 * np.pi * np.arange(T) / T))
spikes = np.where(rng.random(T) < 0.01, rng.uniform(3, 8, T), 1.0)
cells = (
    RunoffCell("north", "XX", area_km2=1200.0, runoff_m=TimeSeries(base * spikes)),
    RunoffCell("south", "XX", area_km2=800.0, runoff_m=TimeSeries(base * 0.7)),
)
grid = RunoffGrid(cells)
params = {"XX": HydroCountryParams(
    country="XX", flood_threshold=0.9, ror_capacity_MW=120.0,
    sto_capacity_MW=300.0, sto_energy_MWh=50_000.0,
    yearly_hydro_MWh=1_500_000.0,
)}

# 1. Run-of-river: floods are clipped at the 90th percentile and the clip
#    level becomes the design flow (capacity factor one).
ror = ror_capacity_factors(grid, params)["XX"]
print(f"clip level (p90 of normalised runoff): {ror.clip_level:0.4f}")
print(f"run-of-river CF: mean {ror.capacity_factors.mean:0.3f}, "
      f"max {ror.capacity_factors.values.max():0.3f}")

# 2. Reservoir inflows: unit-head energy is tiny; the flow multiplier
#    scales it so yearly inflows match observed hydro generation net of
#    run-of-river production.
base_inflow = unit_head_inflow(grid, "XX")
ror_energy = ror.capacity_factors.with_values(ror.capacity_factors.values * 120.0)
target = params["XX"].yearly_hydro_MWh * T / 8760.0  # prorated to the horizon
fm = calibrate_flow_multiplier(target, ror_energy, base_inflow)
print(f"\nunit-head inflow over the month: {base_inflow.values.sum():0.1f} MWh")
print(f"calibrated flow multiplier: {fm:0.1f}")

params["XX"] = HydroCountryParams(
    country="XX", flood_threshold=0.9, ror_capacity_MW=120.0,
    sto_capacity_MW=300.0, sto_energy_MWh=50_000.0,
    yearly_hydro_MWh=1_500_000.0, flow_multiplier=fm,
)
inflow = sto_inflows(grid, params)["XX"]
reservoir_share = target - ror_energy.values.sum()
print(f"calibrated inflow energy: {inflow.values.sum():0.0f} MWh "
      f"(reservoir share of the target: {reservoir_share:0.0f})")

# 3. Pumped storage energy: plant data beats country duration beats the
#    six-hour default.
print(f"\nPHS 2000 MW, no data:         {phs_storage(2000.0):8.0f} MWh")
print(f"PHS 2000 MW, 8 h duration:    {phs_storage(2000.0, country_duration_h=8):8.0f} MWh")
print(f"PHS 1300 MW, plant = 472600:  {phs_storage(1300.0, plant_energy_MWh=472600.0):8.0f} MWh")
